#pragma once

#include <cstdint>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <memory>
#include <vector>

#include "jbm/mat.hpp"
#include "jbm/param.hpp"
#include "jbm/sparse.hpp"

namespace jbm {

template <typename S>
inline S stable_sigmoid(S x) {
    if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
    const S e = std::exp(x);
    return e / (S(1) + e);
}

template <typename S>
inline S stable_softplus(S x) {
    // log(1 + e^x) without overflow
    return std::max(x, S(0)) + std::log1p(std::exp(-std::abs(x)));
}

// exp with the argument floored just above the underflow threshold; the
// clamped tail is < 1e-37 (float) so softmax sums are unchanged, but the
// libm underflow-errno slow path never triggers.
inline float exp_fast(float x) { return std::exp(std::max(x, -87.0f)); }
inline double exp_fast(double x) { return std::exp(std::max(x, -708.0)); }

// Reverse-mode tape over a fixed operation set. Values are computed eagerly
// when an op is recorded; backward() replays the tape in reverse. Sparse
// adjacencies enter only as constants (never learnable), so spmm needs the
// transposed matrix for its backward and nothing else.
//
// The engine is deliberately small: no control-flow tracing, no higher-order
// gradients. Every op here is exercised by a finite-difference check in the
// substrate tests.
template <typename S>
class Tape {
public:
    using Id = int32_t;

    const Mat<S>& val(Id id) const { return nodes_[static_cast<size_t>(id)].val; }
    const Mat<S>& grad(Id id) const { return nodes_[static_cast<size_t>(id)].grad; }
    S scalar(Id id) const { return nodes_[static_cast<size_t>(id)].val.v[0]; }
    size_t size() const { return nodes_.size(); }

    Id constant(Mat<S> v) { return push(std::move(v), false, {}, nullptr); }

    // Leaf bound to a parameter; backward accumulates into p.grad.
    Id leaf(ParameterT<S>& p) {
        ParameterT<S>* pp = &p;
        Id id = push(p.value, true, {}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [pp](Tape& t, Id self) {
            const Mat<S>& g = t.nodes_[static_cast<size_t>(self)].grad;
            require_shape(pp->grad.rows, pp->grad.cols, g.rows, g.cols, "leaf grad " + pp->name);
            for (int64_t i = 0; i < g.size(); ++i) pp->grad.v[i] += g.v[i];
        };
        return id;
    }

    // Value copy with the gradient path severed.
    Id detach(Id a) { return push(nodes_[static_cast<size_t>(a)].val, false, {}, nullptr); }

    Id matmul(Id a, Id b, bool ta = false, bool tb = false) {
        Mat<S> y = jbm::matmul(val(a), val(b), ta, tb);
        Id id = push(std::move(y), needs(a) || needs(b), {a, b}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a, b, ta, tb](Tape& t, Id self) {
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            const Mat<S>& av = t.val(a);
            const Mat<S>& bv = t.val(b);
            if (t.needs(a)) {
                Mat<S>& ga = t.grad_buf(a);
                if (!ta && !tb) matmul_acc(ga, gy, bv, false, true, S(1));
                else if (!ta && tb) matmul_acc(ga, gy, bv, false, false, S(1));
                else if (ta && !tb) matmul_acc(ga, bv, gy, false, true, S(1));
                else matmul_acc(ga, bv, gy, true, true, S(1));
            }
            if (t.needs(b)) {
                Mat<S>& gb = t.grad_buf(b);
                if (!ta && !tb) matmul_acc(gb, av, gy, true, false, S(1));
                else if (!ta && tb) matmul_acc(gb, gy, av, true, false, S(1));
                else if (ta && !tb) matmul_acc(gb, av, gy, false, false, S(1));
                else matmul_acc(gb, gy, av, true, true, S(1));
            }
        };
        return id;
    }

    // y = a * x with constant sparse a. a_t must be the transpose of a
    // (pass a itself when symmetric). Both must outlive the tape.
    Id spmm(const Csr<S>* a, const Csr<S>* a_t, Id x) {
        if (a->rows != a_t->cols || a->cols != a_t->rows)
            throw DimensionError("spmm: a_t is not the transpose of a");
        Mat<S> y = jbm::spmm(*a, val(x));
        Id id = push(std::move(y), needs(x), {x}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a_t, x](Tape& t, Id self) {
            if (!t.needs(x)) return;
            Mat<S> gx = jbm::spmm(*a_t, t.nodes_[static_cast<size_t>(self)].grad);
            t.accumulate(x, gx);
        };
        return id;
    }

    Id add(Id a, Id b) {
        const Mat<S>& av = val(a);
        const Mat<S>& bv = val(b);
        require_shape(bv.rows, bv.cols, av.rows, av.cols, "add");
        Mat<S> y = av;
        for (int64_t i = 0; i < y.size(); ++i) y.v[i] += bv.v[i];
        Id id = push(std::move(y), needs(a) || needs(b), {a, b}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a, b](Tape& t, Id self) {
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            if (t.needs(a)) t.accumulate(a, gy);
            if (t.needs(b)) t.accumulate(b, gy);
        };
        return id;
    }

    Id sub(Id a, Id b) {
        const Mat<S>& av = val(a);
        const Mat<S>& bv = val(b);
        require_shape(bv.rows, bv.cols, av.rows, av.cols, "sub");
        Mat<S> y = av;
        for (int64_t i = 0; i < y.size(); ++i) y.v[i] -= bv.v[i];
        Id id = push(std::move(y), needs(a) || needs(b), {a, b}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a, b](Tape& t, Id self) {
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            if (t.needs(a)) t.accumulate(a, gy);
            if (t.needs(b)) {
                Mat<S>& gb = t.grad_buf(b);
                for (int64_t i = 0; i < gy.size(); ++i) gb.v[i] -= gy.v[i];
            }
        };
        return id;
    }

    Id scale(Id a, S c) {
        Mat<S> y = val(a);
        for (auto& x : y.v) x *= c;
        Id id = push(std::move(y), needs(a), {a}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a, c](Tape& t, Id self) {
            if (!t.needs(a)) return;
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Mat<S>& ga = t.grad_buf(a);
            for (int64_t i = 0; i < gy.size(); ++i) ga.v[i] += c * gy.v[i];
        };
        return id;
    }

    Id hadamard(Id a, Id b) {
        const Mat<S>& av = val(a);
        const Mat<S>& bv = val(b);
        require_shape(bv.rows, bv.cols, av.rows, av.cols, "hadamard");
        Mat<S> y = av;
        for (int64_t i = 0; i < y.size(); ++i) y.v[i] *= bv.v[i];
        Id id = push(std::move(y), needs(a) || needs(b), {a, b}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a, b](Tape& t, Id self) {
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            if (t.needs(a)) {
                const Mat<S>& bv = t.val(b);
                Mat<S>& ga = t.grad_buf(a);
                for (int64_t i = 0; i < gy.size(); ++i) ga.v[i] += gy.v[i] * bv.v[i];
            }
            if (t.needs(b)) {
                const Mat<S>& av = t.val(a);
                Mat<S>& gb = t.grad_buf(b);
                for (int64_t i = 0; i < gy.size(); ++i) gb.v[i] += gy.v[i] * av.v[i];
            }
        };
        return id;
    }

    // Broadcast-add a 1 x d row vector to every row of a.
    Id add_rowvec(Id a, Id b) {
        const Mat<S>& av = val(a);
        const Mat<S>& bv = val(b);
        if (bv.rows != 1 || bv.cols != av.cols) throw DimensionError("add_rowvec: bias must be 1 x cols");
        Mat<S> y = av;
        for (int64_t r = 0; r < y.rows; ++r) {
            S* row = y.row(r);
            for (int64_t j = 0; j < y.cols; ++j) row[j] += bv.v[static_cast<size_t>(j)];
        }
        Id id = push(std::move(y), needs(a) || needs(b), {a, b}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a, b](Tape& t, Id self) {
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            if (t.needs(a)) t.accumulate(a, gy);
            if (t.needs(b)) {
                Mat<S>& gb = t.grad_buf(b);
                for (int64_t r = 0; r < gy.rows; ++r) {
                    const S* row = gy.row(r);
                    for (int64_t j = 0; j < gy.cols; ++j) gb.v[static_cast<size_t>(j)] += row[j];
                }
            }
        };
        return id;
    }

    Id sigmoid(Id a) {
        Mat<S> y = val(a);
        for (auto& x : y.v) x = stable_sigmoid(x);
        Id id = push(std::move(y), needs(a), {a}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a](Tape& t, Id self) {
            if (!t.needs(a)) return;
            const Mat<S>& y = t.nodes_[static_cast<size_t>(self)].val;
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Mat<S>& ga = t.grad_buf(a);
            for (int64_t i = 0; i < gy.size(); ++i) ga.v[i] += gy.v[i] * y.v[i] * (S(1) - y.v[i]);
        };
        return id;
    }

    Id tanh_act(Id a) {
        Mat<S> y = val(a);
        for (auto& x : y.v) x = std::tanh(x);
        Id id = push(std::move(y), needs(a), {a}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a](Tape& t, Id self) {
            if (!t.needs(a)) return;
            const Mat<S>& y = t.nodes_[static_cast<size_t>(self)].val;
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Mat<S>& ga = t.grad_buf(a);
            for (int64_t i = 0; i < gy.size(); ++i) ga.v[i] += gy.v[i] * (S(1) - y.v[i] * y.v[i]);
        };
        return id;
    }

    Id exp_op(Id a) {
        Mat<S> y = val(a);
        for (auto& x : y.v) x = std::exp(x);
        Id id = push(std::move(y), needs(a), {a}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a](Tape& t, Id self) {
            if (!t.needs(a)) return;
            const Mat<S>& y = t.nodes_[static_cast<size_t>(self)].val;
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Mat<S>& ga = t.grad_buf(a);
            for (int64_t i = 0; i < gy.size(); ++i) ga.v[i] += gy.v[i] * y.v[i];
        };
        return id;
    }

    Id log_op(Id a) {
        Mat<S> y = val(a);
        for (auto& x : y.v) x = std::log(x);
        Id id = push(std::move(y), needs(a), {a}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a](Tape& t, Id self) {
            if (!t.needs(a)) return;
            const Mat<S>& xv = t.val(a);
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Mat<S>& ga = t.grad_buf(a);
            for (int64_t i = 0; i < gy.size(); ++i) ga.v[i] += gy.v[i] / xv.v[i];
        };
        return id;
    }

    Id softplus(Id a) {
        Mat<S> y = val(a);
        for (auto& x : y.v) x = stable_softplus(x);
        Id id = push(std::move(y), needs(a), {a}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a](Tape& t, Id self) {
            if (!t.needs(a)) return;
            const Mat<S>& xv = t.val(a);
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Mat<S>& ga = t.grad_buf(a);
            for (int64_t i = 0; i < gy.size(); ++i) ga.v[i] += gy.v[i] * stable_sigmoid(xv.v[i]);
        };
        return id;
    }

    Id concat_rows(Id a, Id b) {
        const Mat<S>& av = val(a);
        const Mat<S>& bv = val(b);
        if (av.cols != bv.cols) throw DimensionError("concat_rows: column mismatch");
        Mat<S> y(av.rows + bv.rows, av.cols);
        std::copy(av.v.begin(), av.v.end(), y.v.begin());
        std::copy(bv.v.begin(), bv.v.end(), y.v.begin() + av.size());
        Id id = push(std::move(y), needs(a) || needs(b), {a, b}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a, b](Tape& t, Id self) {
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            const int64_t na = t.val(a).size();
            if (t.needs(a)) {
                Mat<S>& ga = t.grad_buf(a);
                for (int64_t i = 0; i < na; ++i) ga.v[i] += gy.v[i];
            }
            if (t.needs(b)) {
                Mat<S>& gb = t.grad_buf(b);
                for (int64_t i = 0; i < gy.size() - na; ++i) gb.v[i] += gy.v[na + i];
            }
        };
        return id;
    }

    Id concat_cols(Id a, Id b) {
        const Mat<S>& av = val(a);
        const Mat<S>& bv = val(b);
        if (av.rows != bv.rows) throw DimensionError("concat_cols: row mismatch");
        Mat<S> y(av.rows, av.cols + bv.cols);
        for (int64_t r = 0; r < av.rows; ++r) {
            std::copy(av.row(r), av.row(r) + av.cols, y.row(r));
            std::copy(bv.row(r), bv.row(r) + bv.cols, y.row(r) + av.cols);
        }
        Id id = push(std::move(y), needs(a) || needs(b), {a, b}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a, b](Tape& t, Id self) {
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            const int64_t ca = t.val(a).cols;
            const int64_t cb = t.val(b).cols;
            if (t.needs(a)) {
                Mat<S>& ga = t.grad_buf(a);
                for (int64_t r = 0; r < gy.rows; ++r)
                    for (int64_t j = 0; j < ca; ++j) ga(r, j) += gy(r, j);
            }
            if (t.needs(b)) {
                Mat<S>& gb = t.grad_buf(b);
                for (int64_t r = 0; r < gy.rows; ++r)
                    for (int64_t j = 0; j < cb; ++j) gb(r, j) += gy(r, ca + j);
            }
        };
        return id;
    }

    // y[r] = a[idx[r]]; duplicate indices accumulate on backward.
    Id gather_rows(Id a, std::vector<int64_t> idx) {
        const Mat<S>& av = val(a);
        Mat<S> y(static_cast<int64_t>(idx.size()), av.cols);
        for (size_t r = 0; r < idx.size(); ++r) {
            if (idx[r] < 0 || idx[r] >= av.rows) throw DimensionError("gather_rows: index out of range");
            std::copy(av.row(idx[r]), av.row(idx[r]) + av.cols, y.row(static_cast<int64_t>(r)));
        }
        auto shared_idx = std::make_shared<std::vector<int64_t>>(std::move(idx));
        Id id = push(std::move(y), needs(a), {a}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a, shared_idx](Tape& t, Id self) {
            if (!t.needs(a)) return;
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Mat<S>& ga = t.grad_buf(a);
            for (size_t r = 0; r < shared_idx->size(); ++r) {
                S* dst = ga.row((*shared_idx)[r]);
                const S* src = gy.row(static_cast<int64_t>(r));
                for (int64_t j = 0; j < gy.cols; ++j) dst[j] += src[j];
            }
        };
        return id;
    }

    // Rows scaled to unit L2 norm; all-zero rows stay zero.
    Id row_l2_normalize(Id a) {
        const Mat<S>& av = val(a);
        Mat<S> y(av.rows, av.cols);
        auto norms = std::make_shared<std::vector<S>>(static_cast<size_t>(av.rows), S(0));
        for (int64_t r = 0; r < av.rows; ++r) {
            double ss = 0;
            for (int64_t j = 0; j < av.cols; ++j) ss += static_cast<double>(av(r, j)) * static_cast<double>(av(r, j));
            const S n = static_cast<S>(std::sqrt(ss));
            (*norms)[static_cast<size_t>(r)] = n;
            if (n > S(0)) {
                for (int64_t j = 0; j < av.cols; ++j) y(r, j) = av(r, j) / n;
            }
        }
        Id id = push(std::move(y), needs(a), {a}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a, norms](Tape& t, Id self) {
            if (!t.needs(a)) return;
            const Mat<S>& y = t.nodes_[static_cast<size_t>(self)].val;
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            Mat<S>& ga = t.grad_buf(a);
            for (int64_t r = 0; r < gy.rows; ++r) {
                const S n = (*norms)[static_cast<size_t>(r)];
                if (n <= S(0)) continue;
                S dot = 0;
                for (int64_t j = 0; j < gy.cols; ++j) dot += gy(r, j) * y(r, j);
                for (int64_t j = 0; j < gy.cols; ++j) ga(r, j) += (gy(r, j) - y(r, j) * dot) / n;
            }
        };
        return id;
    }

    // y (n x 1): y[r] = <a[r], b[r]>
    Id rowdot(Id a, Id b) {
        const Mat<S>& av = val(a);
        const Mat<S>& bv = val(b);
        require_shape(bv.rows, bv.cols, av.rows, av.cols, "rowdot");
        Mat<S> y(av.rows, 1);
        for (int64_t r = 0; r < av.rows; ++r) {
            S s = 0;
            for (int64_t j = 0; j < av.cols; ++j) s += av(r, j) * bv(r, j);
            y.v[static_cast<size_t>(r)] = s;
        }
        Id id = push(std::move(y), needs(a) || needs(b), {a, b}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a, b](Tape& t, Id self) {
            const Mat<S>& gy = t.nodes_[static_cast<size_t>(self)].grad;
            const Mat<S>& av = t.val(a);
            const Mat<S>& bv = t.val(b);
            if (t.needs(a)) {
                Mat<S>& ga = t.grad_buf(a);
                for (int64_t r = 0; r < av.rows; ++r)
                    for (int64_t j = 0; j < av.cols; ++j) ga(r, j) += gy.v[static_cast<size_t>(r)] * bv(r, j);
            }
            if (t.needs(b)) {
                Mat<S>& gb = t.grad_buf(b);
                for (int64_t r = 0; r < av.rows; ++r)
                    for (int64_t j = 0; j < av.cols; ++j) gb(r, j) += gy.v[static_cast<size_t>(r)] * av(r, j);
            }
        };
        return id;
    }

    Id mean_all(Id a) {
        const Mat<S>& av = val(a);
        double s = 0;
        for (S x : av.v) s += static_cast<double>(x);
        Mat<S> y(1, 1);
        y.v[0] = static_cast<S>(s / static_cast<double>(std::max<int64_t>(av.size(), 1)));
        Id id = push(std::move(y), needs(a), {a}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a](Tape& t, Id self) {
            if (!t.needs(a)) return;
            const S g = t.nodes_[static_cast<size_t>(self)].grad.v[0];
            Mat<S>& ga = t.grad_buf(a);
            const S w = g / static_cast<S>(std::max<int64_t>(ga.size(), 1));
            for (auto& x : ga.v) x += w;
        };
        return id;
    }

    Id sum_all(Id a) {
        const Mat<S>& av = val(a);
        double s = 0;
        for (S x : av.v) s += static_cast<double>(x);
        Mat<S> y(1, 1);
        y.v[0] = static_cast<S>(s);
        Id id = push(std::move(y), needs(a), {a}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [a](Tape& t, Id self) {
            if (!t.needs(a)) return;
            const S g = t.nodes_[static_cast<size_t>(self)].grad.v[0];
            Mat<S>& ga = t.grad_buf(a);
            for (auto& x : ga.v) x += g;
        };
        return id;
    }

    // InfoNCE core: z is an n x n logit matrix whose diagonal holds the
    // positives. Returns mean_i(logsumexp(z_i) - z_ii), computed with
    // max-subtraction. Backward: dz = (softmax(z) - I) / n.
    Id diag_softmax_xent(Id z) {
        const Mat<S>& zv = val(z);
        if (zv.rows != zv.cols) throw DimensionError("diag_softmax_xent: logits must be square");
        const int64_t n = zv.rows;
        auto probs = std::make_shared<Mat<S>>(n, n);
        double loss = 0;
        for (int64_t r = 0; r < n; ++r) {
            const S* zr = zv.row(r);
            S mx = zr[0];
            for (int64_t j = 1; j < n; ++j) mx = std::max(mx, zr[j]);
            S* pr = probs->row(r);
            double denom = 0;
            for (int64_t j = 0; j < n; ++j) {
                pr[j] = exp_fast(zr[j] - mx);
                denom += static_cast<double>(pr[j]);
            }
            const S inv = static_cast<S>(1.0 / denom);
            for (int64_t j = 0; j < n; ++j) pr[j] *= inv;
            loss += static_cast<double>(mx) + std::log(denom) - static_cast<double>(zr[r]);
        }
        Mat<S> y(1, 1);
        y.v[0] = static_cast<S>(loss / static_cast<double>(n));
        Id id = push(std::move(y), needs(z), {z}, nullptr);
        nodes_[static_cast<size_t>(id)].back = [z, probs](Tape& t, Id self) {
            if (!t.needs(z)) return;
            const S g = t.nodes_[static_cast<size_t>(self)].grad.v[0];
            Mat<S>& gz = t.grad_buf(z);
            const int64_t n = probs->rows;
            const S w = g / static_cast<S>(n);
            for (int64_t r = 0; r < n; ++r) {
                for (int64_t j = 0; j < n; ++j) gz(r, j) += w * (*probs)(r, j);
                gz(r, r) -= w;
            }
        };
        return id;
    }

    // Runs reverse accumulation from a 1x1 root node. Parameter leaves
    // accumulate into their ParameterT::grad.
    void backward(Id root) {
        Node& rn = nodes_[static_cast<size_t>(root)];
        if (rn.val.size() != 1) throw DimensionError("backward: root must be a scalar node");
        grad_buf(root).v[0] = S(1);
        const bool trace = std::getenv("JBM_TRACE_BACKWARD") != nullptr;
        for (Id i = root; i >= 0; --i) {
            Node& nd = nodes_[static_cast<size_t>(i)];
            if (nd.back && nd.needs_grad && nd.grad.size() == nd.val.size()) {
                if (trace) {
                    auto t0 = std::chrono::steady_clock::now();
                    nd.back(*this, i);
                    const double dt = std::chrono::duration<double, std::milli>(
                                          std::chrono::steady_clock::now() - t0)
                                          .count();
                    if (dt > 5.0)
                        std::fprintf(stderr, "[tape] node %d (%lldx%lld): %.0f ms\n", i,
                                     static_cast<long long>(nd.val.rows),
                                     static_cast<long long>(nd.val.cols), dt);
                } else {
                    nd.back(*this, i);
                }
            }
        }
    }

private:
    struct Node {
        Mat<S> val;
        Mat<S> grad;  // allocated lazily on first accumulation
        bool needs_grad = false;
        std::vector<Id> parents;
        std::function<void(Tape&, Id)> back;
    };

    std::vector<Node> nodes_;

    bool needs(Id id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

    Mat<S>& grad_buf(Id id) {
        Node& nd = nodes_[static_cast<size_t>(id)];
        if (nd.grad.size() != nd.val.size()) nd.grad = Mat<S>(nd.val.rows, nd.val.cols);
        return nd.grad;
    }

    void accumulate(Id id, const Mat<S>& g) {
        Mat<S>& ga = grad_buf(id);
        for (int64_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i];
    }

    Id push(Mat<S> v, bool needs_grad, std::vector<Id> parents, std::function<void(Tape&, Id)> back) {
        Node nd;
        nd.val = std::move(v);
        nd.needs_grad = needs_grad;
        nd.parents = std::move(parents);
        nd.back = std::move(back);
        nodes_.push_back(std::move(nd));
        return static_cast<Id>(nodes_.size() - 1);
    }
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace jbm
