#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "jbm/errors.hpp"

namespace jbm {

// Dense row-major matrix. Training runs on Mat<float>; the gradient-check
// path re-runs the same code on Mat<double>.
template <typename S>
struct Mat {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<S> v;

    Mat() = default;
    Mat(int64_t r, int64_t c) : rows(r), cols(c), v(static_cast<size_t>(r * c), S(0)) {}
    Mat(int64_t r, int64_t c, S fill) : rows(r), cols(c), v(static_cast<size_t>(r * c), fill) {}

    int64_t size() const { return rows * cols; }
    bool empty() const { return rows == 0 || cols == 0; }

    S* data() { return v.data(); }
    const S* data() const { return v.data(); }
    S* row(int64_t r) { return v.data() + r * cols; }
    const S* row(int64_t r) const { return v.data() + r * cols; }

    S& operator()(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
    S operator()(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }

    void fill(S x) { std::fill(v.begin(), v.end(), x); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (S x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    template <typename T>
    Mat<T> cast() const {
        Mat<T> out(rows, cols);
        for (int64_t i = 0; i < size(); ++i) out.v[i] = static_cast<T>(v[i]);
        return out;
    }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

inline void require_shape(int64_t r, int64_t c, int64_t er, int64_t ec, const std::string& what) {
    if (r != er || c != ec)
        throw DimensionError(what + ": expected " + std::to_string(er) + "x" + std::to_string(ec) +
                             ", got " + std::to_string(r) + "x" + std::to_string(c));
}

// C = alpha * op(A) * op(B) + beta * C, backed by BLAS gemm (see mat.cpp / matmul_impl).
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha,
          const float* a, int64_t lda, const float* b, int64_t ldb, float beta, float* c, int64_t ldc);
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha,
          const double* a, int64_t lda, const double* b, int64_t ldb, double beta, double* c, int64_t ldc);

// out = op(a) * op(b); shapes derived from the transpose flags.
template <typename S>
Mat<S> matmul(const Mat<S>& a, const Mat<S>& b, bool trans_a = false, bool trans_b = false) {
    const int64_t m = trans_a ? a.cols : a.rows;
    const int64_t k = trans_a ? a.rows : a.cols;
    const int64_t kb = trans_b ? b.cols : b.rows;
    const int64_t n = trans_b ? b.rows : b.cols;
    if (k != kb)
        throw DimensionError("matmul: inner dims " + std::to_string(k) + " vs " + std::to_string(kb));
    Mat<S> out(m, n);
    if (m == 0 || n == 0 || k == 0) return out;
    gemm(trans_a, trans_b, m, n, k, S(1), a.data(), a.cols, b.data(), b.cols, S(0), out.data(), out.cols);
    return out;
}

// out += alpha * op(a) * op(b)
template <typename S>
void matmul_acc(Mat<S>& out, const Mat<S>& a, const Mat<S>& b, bool trans_a, bool trans_b, S alpha) {
    const int64_t m = trans_a ? a.cols : a.rows;
    const int64_t k = trans_a ? a.rows : a.cols;
    const int64_t n = trans_b ? b.rows : b.cols;
    require_shape(out.rows, out.cols, m, n, "matmul_acc output");
    if (m == 0 || n == 0 || k == 0) return;
    gemm(trans_a, trans_b, m, n, k, alpha, a.data(), a.cols, b.data(), b.cols, S(1), out.data(), out.cols);
}

}  // namespace jbm
