#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "jbm/mat.hpp"

namespace jbm {

// Compressed-row sparse matrix. Column indices are strictly increasing
// within each row. Adjacencies are built once and treated as constants
// thereafter (they are never learnable).
template <typename S>
struct Csr {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<int64_t> indptr;   // length rows+1, nondecreasing
    std::vector<int32_t> indices;  // column index per nonzero
    std::vector<S> values;

    Csr() : indptr(1, 0) {}
    Csr(int64_t r, int64_t c) : rows(r), cols(c), indptr(static_cast<size_t>(r) + 1, 0) {}

    int64_t nnz() const { return static_cast<int64_t>(values.size()); }

    template <typename T>
    Csr<T> cast() const {
        Csr<T> out(rows, cols);
        out.indptr = indptr;
        out.indices = indices;
        out.values.resize(values.size());
        for (size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<T>(values[i]);
        return out;
    }

    Mat<S> densify() const {
        Mat<S> out(rows, cols);
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t k = indptr[r]; k < indptr[r + 1]; ++k) out(r, indices[k]) += values[k];
        return out;
    }
};

using CsrF = Csr<float>;
using CsrD = Csr<double>;

// Builds a CSR from unsorted (row, col, value) triplets; duplicates are summed.
template <typename S>
Csr<S> csr_from_triplets(int64_t rows, int64_t cols,
                         std::vector<std::tuple<int32_t, int32_t, S>> trips) {
    std::sort(trips.begin(), trips.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
        return std::get<1>(a) < std::get<1>(b);
    });
    Csr<S> m(rows, cols);
    m.indices.reserve(trips.size());
    m.values.reserve(trips.size());
    int64_t cur_row = -1;
    for (const auto& [r, c, v] : trips) {
        if (r < 0 || r >= rows || c < 0 || c >= cols)
            throw DimensionError("csr_from_triplets: index out of range");
        const bool dup = (r == cur_row && !m.indices.empty() &&
                          m.indices.back() == c &&
                          static_cast<int64_t>(m.indices.size()) > m.indptr[static_cast<size_t>(r)]);
        if (dup) {
            m.values.back() += v;
            continue;
        }
        while (cur_row < r) {
            ++cur_row;
            m.indptr[static_cast<size_t>(cur_row)] = static_cast<int64_t>(m.indices.size());
        }
        m.indices.push_back(c);
        m.values.push_back(v);
    }
    while (cur_row < rows) {
        ++cur_row;
        m.indptr[static_cast<size_t>(cur_row)] = static_cast<int64_t>(m.indices.size());
    }
    return m;
}

template <typename S>
Csr<S> csr_transpose(const Csr<S>& a) {
    Csr<S> t(a.cols, a.rows);
    t.indices.resize(a.values.size());
    t.values.resize(a.values.size());
    std::vector<int64_t> count(static_cast<size_t>(a.cols), 0);
    for (int32_t c : a.indices) count[static_cast<size_t>(c)]++;
    for (int64_t c = 0; c < a.cols; ++c) t.indptr[static_cast<size_t>(c) + 1] = t.indptr[static_cast<size_t>(c)] + count[static_cast<size_t>(c)];
    std::vector<int64_t> cursor(t.indptr.begin(), t.indptr.end() - 1);
    for (int64_t r = 0; r < a.rows; ++r) {
        for (int64_t k = a.indptr[static_cast<size_t>(r)]; k < a.indptr[static_cast<size_t>(r) + 1]; ++k) {
            int64_t pos = cursor[static_cast<size_t>(a.indices[static_cast<size_t>(k)])]++;
            t.indices[static_cast<size_t>(pos)] = static_cast<int32_t>(r);
            t.values[static_cast<size_t>(pos)] = a.values[static_cast<size_t>(k)];
        }
    }
    return t;
}

// out = a * b (sparse * dense). Rows with no nonzeros yield zero rows.
template <typename S>
void spmm_into(const Csr<S>& a, const Mat<S>& b, Mat<S>& out) {
    if (a.cols != b.rows)
        throw DimensionError("spmm: a.cols=" + std::to_string(a.cols) + " vs b.rows=" + std::to_string(b.rows));
    out.rows = a.rows;
    out.cols = b.cols;
    out.v.assign(static_cast<size_t>(a.rows * b.cols), S(0));
    const int64_t d = b.cols;
    for (int64_t r = 0; r < a.rows; ++r) {
        S* dst = out.row(r);
        for (int64_t k = a.indptr[static_cast<size_t>(r)]; k < a.indptr[static_cast<size_t>(r) + 1]; ++k) {
            const S w = a.values[static_cast<size_t>(k)];
            const S* src = b.row(a.indices[static_cast<size_t>(k)]);
            for (int64_t j = 0; j < d; ++j) dst[j] += w * src[j];
        }
    }
}

template <typename S>
Mat<S> spmm(const Csr<S>& a, const Mat<S>& b) {
    Mat<S> out;
    spmm_into(a, b, out);
    return out;
}

// Degree convention for symmetric normalization (a_ij / sqrt(d_i * d_j)).
// Binary interaction graphs count nonzeros per row; weighted semantic graphs
// sum values per row. Rows whose degree is not strictly positive are zeroed
// out instead of dividing (isolated nodes exist after splits).
enum class DegreeMode { CountNonzero, ValueSum };

template <typename S>
Csr<S> sym_normalize(const Csr<S>& a, DegreeMode mode = DegreeMode::CountNonzero) {
    if (a.rows != a.cols) throw DimensionError("sym_normalize: matrix must be square");
    std::vector<double> degree(static_cast<size_t>(a.rows), 0.0);
    for (int64_t r = 0; r < a.rows; ++r) {
        for (int64_t k = a.indptr[static_cast<size_t>(r)]; k < a.indptr[static_cast<size_t>(r) + 1]; ++k) {
            const double v = static_cast<double>(a.values[static_cast<size_t>(k)]);
            if (mode == DegreeMode::CountNonzero) {
                if (v < 0.0) throw DomainError("sym_normalize: negative entry in binary-degree mode");
                if (v != 0.0) degree[static_cast<size_t>(r)] += 1.0;
            } else {
                degree[static_cast<size_t>(r)] += v;
            }
        }
    }
    std::vector<double> inv_sqrt(static_cast<size_t>(a.rows), 0.0);
    for (int64_t r = 0; r < a.rows; ++r)
        if (degree[static_cast<size_t>(r)] > 0.0) inv_sqrt[static_cast<size_t>(r)] = 1.0 / std::sqrt(degree[static_cast<size_t>(r)]);

    Csr<S> out = a;
    for (int64_t r = 0; r < a.rows; ++r) {
        for (int64_t k = a.indptr[static_cast<size_t>(r)]; k < a.indptr[static_cast<size_t>(r) + 1]; ++k) {
            const double scale = inv_sqrt[static_cast<size_t>(r)] * inv_sqrt[static_cast<size_t>(a.indices[static_cast<size_t>(k)])];
            out.values[static_cast<size_t>(k)] = static_cast<S>(static_cast<double>(a.values[static_cast<size_t>(k)]) * scale);
        }
    }
    return out;
}

}  // namespace jbm
