#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "jbm/errors.hpp"
#include "jbm/mat.hpp"
#include "jbm/rng.hpp"

namespace jbm {

// A learnable tensor: value, gradient accumulator, and Adam state.
// The gradient is owned here and zeroed by the caller between steps.
template <typename S>
struct ParameterT {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
    Mat<S> adam_m;
    Mat<S> adam_v;
    int64_t step = 0;

    ParameterT() = default;
    ParameterT(std::string n, int64_t rows, int64_t cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols), adam_m(rows, cols), adam_v(rows, cols) {}

    void zero_grad() { grad.fill(S(0)); }

    template <typename T>
    ParameterT<T> cast() const {
        ParameterT<T> out(name, value.rows, value.cols);
        out.value = value.template cast<T>();
        return out;
    }
};

using Parameter = ParameterT<float>;
using ParameterD = ParameterT<double>;

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction. Throws if the gradient is non-finite
// (names the parameter so diverged runs are diagnosable).
template <typename S>
void adam_step(ParameterT<S>& p, const AdamConfig& cfg) {
    if (!p.grad.same_shape(p.value)) throw DimensionError("adam_step: grad shape mismatch for " + p.name);
    for (S g : p.grad.v)
        if (!std::isfinite(static_cast<double>(g)))
            throw NumericalError("non-finite gradient for parameter '" + p.name + "'");
    p.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
    const int64_t n = p.value.size();
    for (int64_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(p.grad.v[i]);
        const double m = cfg.beta1 * static_cast<double>(p.adam_m.v[i]) + (1.0 - cfg.beta1) * g;
        const double v = cfg.beta2 * static_cast<double>(p.adam_v.v[i]) + (1.0 - cfg.beta2) * g * g;
        p.adam_m.v[i] = static_cast<S>(m);
        p.adam_v.v[i] = static_cast<S>(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        p.value.v[i] -= static_cast<S>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
}

// Xavier/Glorot uniform: entries in +-sqrt(6/(rows+cols)).
template <typename S>
Mat<S> xavier_init(int64_t rows, int64_t cols, Rng& rng) {
    if (rows < 1 || cols < 1) throw DimensionError("xavier_init: rows and cols must be >= 1");
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat<S> m(rows, cols);
    for (int64_t i = 0; i < m.size(); ++i) m.v[i] = static_cast<S>(rng.uniform(-bound, bound));
    return m;
}

}  // namespace jbm
