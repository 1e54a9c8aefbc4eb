#pragma once

#include <cstdio>
#include <map>
#include <vector>

#include "jbm/io.hpp"
#include "jbm/param.hpp"
#include "jbm/rng.hpp"
#include "jbm/tape.hpp"

namespace jbm {

// Forward-process tables: beta_t, alpha_t = 1 - beta_t, alpha_bar_t = prod(alpha).
// Steps are 1-based (t in 1..T); alpha_bar_at(0) == 1 for the reverse recursion.
struct DiffusionSchedule {
    int64_t num_steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    double beta_at(int64_t t) const { return beta[static_cast<size_t>(t - 1)]; }
    double alpha_at(int64_t t) const { return alpha[static_cast<size_t>(t - 1)]; }
    double alpha_bar_at(int64_t t) const { return t == 0 ? 1.0 : alpha_bar[static_cast<size_t>(t - 1)]; }
};

// Linear beta interpolation between beta_start and beta_end over T steps.
inline DiffusionSchedule build_schedule(int64_t num_steps, double beta_start = 1e-4,
                                        double beta_end = 0.02) {
    if (num_steps < 1 || num_steps > 1000) throw ConfigError("diffusion steps must be in [1, 1000]");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw ConfigError("betas must satisfy 0 < beta_start <= beta_end < 1");
    DiffusionSchedule s;
    s.num_steps = num_steps;
    s.beta.resize(static_cast<size_t>(num_steps));
    s.alpha.resize(static_cast<size_t>(num_steps));
    s.alpha_bar.resize(static_cast<size_t>(num_steps));
    double prod = 1.0;
    for (int64_t t = 0; t < num_steps; ++t) {
        const double frac = num_steps == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(num_steps - 1);
        s.beta[static_cast<size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
        s.alpha[static_cast<size_t>(t)] = 1.0 - s.beta[static_cast<size_t>(t)];
        prod *= s.alpha[static_cast<size_t>(t)];
        s.alpha_bar[static_cast<size_t>(t)] = prod;
    }
    return s;
}

template <typename S>
struct NoisySample {
    Mat<S> x_t;
    Mat<S> eps;
};

// x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps. The drawn noise is returned
// alongside (the loss targets x_0, but tests need eps).
template <typename S>
NoisySample<S> q_sample(const Mat<S>& x0, int64_t t, const DiffusionSchedule& sched, Rng& rng) {
    if (t < 1 || t > sched.num_steps) throw DimensionError("q_sample: t out of range");
    const S a = static_cast<S>(std::sqrt(sched.alpha_bar_at(t)));
    const S b = static_cast<S>(std::sqrt(1.0 - sched.alpha_bar_at(t)));
    NoisySample<S> out;
    out.eps = Mat<S>(x0.rows, x0.cols);
    out.x_t = Mat<S>(x0.rows, x0.cols);
    for (int64_t i = 0; i < x0.size(); ++i) {
        out.eps.v[i] = static_cast<S>(rng.gaussian());
        out.x_t.v[i] = a * x0.v[i] + b * out.eps.v[i];
    }
    return out;
}

// Conditional denoiser: input projection to the embedding dimension, a
// learned per-step embedding table, two tanh layers over the concatenation,
// an elementwise gate by the item's collaborative embedding, and a
// projection back to the modality dimension.
template <typename S>
struct DenoiserParamsT {
    ParameterT<S> in_w, in_b;    // d_m x d, 1 x d
    ParameterT<S> time_embed;    // T x d
    ParameterT<S> h1_w, h1_b;    // 2d x 2d, 1 x 2d
    ParameterT<S> h2_w, h2_b;    // 2d x d, 1 x d
    ParameterT<S> out_w, out_b;  // d x d_m, 1 x d_m

    void init(const std::string& prefix, int64_t d_m, int64_t d, int64_t num_steps, Rng& rng) {
        in_w = ParameterT<S>(prefix + ".in_w", d_m, d);
        in_b = ParameterT<S>(prefix + ".in_b", 1, d);
        time_embed = ParameterT<S>(prefix + ".time_embed", num_steps, d);
        h1_w = ParameterT<S>(prefix + ".h1_w", 2 * d, 2 * d);
        h1_b = ParameterT<S>(prefix + ".h1_b", 1, 2 * d);
        h2_w = ParameterT<S>(prefix + ".h2_w", 2 * d, d);
        h2_b = ParameterT<S>(prefix + ".h2_b", 1, d);
        out_w = ParameterT<S>(prefix + ".out_w", d, d_m);
        out_b = ParameterT<S>(prefix + ".out_b", 1, d_m);
        in_w.value = xavier_init<S>(d_m, d, rng);
        time_embed.value = xavier_init<S>(num_steps, d, rng);
        h1_w.value = xavier_init<S>(2 * d, 2 * d, rng);
        h2_w.value = xavier_init<S>(2 * d, d, rng);
        out_w.value = xavier_init<S>(d, d_m, rng);
    }

    std::vector<ParameterT<S>*> all() {
        return {&in_w, &in_b, &time_embed, &h1_w, &h1_b, &h2_w, &h2_b, &out_w, &out_b};
    }

    template <typename T>
    DenoiserParamsT<T> cast() const {
        DenoiserParamsT<T> out;
        out.in_w = in_w.template cast<T>();
        out.in_b = in_b.template cast<T>();
        out.time_embed = time_embed.template cast<T>();
        out.h1_w = h1_w.template cast<T>();
        out.h1_b = h1_b.template cast<T>();
        out.h2_w = h2_w.template cast<T>();
        out.h2_b = h2_b.template cast<T>();
        out.out_w = out_w.template cast<T>();
        out.out_b = out_b.template cast<T>();
        return out;
    }

    bool all_finite() {
        for (auto* p : all())
            if (!p->value.all_finite()) return false;
        return true;
    }
};

using DenoiserParams = DenoiserParamsT<float>;

// x_hat0 = out(tanh(tanh([in(x_t), e_t] W1) W2) ⊙ e_c). t_steps are 1-based.
template <typename S>
typename Tape<S>::Id denoiser_forward(Tape<S>& g, DenoiserParamsT<S>& p, typename Tape<S>::Id x_t,
                                      const std::vector<int64_t>& t_steps, typename Tape<S>::Id e_c) {
    if (g.val(x_t).rows != static_cast<int64_t>(t_steps.size()))
        throw DimensionError("denoiser_forward: one time step per row required");
    if (g.val(e_c).rows != g.val(x_t).rows)
        throw DimensionError("denoiser_forward: e_c rows must align with x_t rows");
    std::vector<int64_t> t0(t_steps.size());
    for (size_t i = 0; i < t_steps.size(); ++i) {
        if (t_steps[i] < 1 || t_steps[i] > p.time_embed.value.rows)
            throw DimensionError("denoiser_forward: t out of range");
        t0[i] = t_steps[i] - 1;
    }
    auto h = g.add_rowvec(g.matmul(x_t, g.leaf(p.in_w)), g.leaf(p.in_b));
    auto et = g.gather_rows(g.leaf(p.time_embed), t0);
    auto z = g.concat_cols(h, et);
    auto h1 = g.tanh_act(g.add_rowvec(g.matmul(z, g.leaf(p.h1_w)), g.leaf(p.h1_b)));
    auto h2 = g.tanh_act(g.add_rowvec(g.matmul(h1, g.leaf(p.h2_w)), g.leaf(p.h2_b)));
    auto gated = g.hadamard(h2, e_c);
    return g.add_rowvec(g.matmul(gated, g.leaf(p.out_w)), g.leaf(p.out_b));
}

// Deterministic core of the diffusion loss: time steps and noise are drawn
// by the caller so the loss is a fixed function of the parameters (this is
// what both the trainer and the gradient check evaluate). Returns the mean
// squared error node; *x_hat_out receives the prediction node for reuse.
template <typename S>
typename Tape<S>::Id diffusion_loss_given(Tape<S>& g, DenoiserParamsT<S>& p, const Mat<S>& x0,
                                          const std::vector<int64_t>& t_steps, const Mat<S>& eps,
                                          const DiffusionSchedule& sched, typename Tape<S>::Id e_c,
                                          typename Tape<S>::Id* x_hat_out = nullptr) {
    Mat<S> x_t(x0.rows, x0.cols);
    for (int64_t r = 0; r < x0.rows; ++r) {
        const double ab = sched.alpha_bar_at(t_steps[static_cast<size_t>(r)]);
        const S a = static_cast<S>(std::sqrt(ab));
        const S b = static_cast<S>(std::sqrt(1.0 - ab));
        for (int64_t j = 0; j < x0.cols; ++j) x_t(r, j) = a * x0(r, j) + b * eps(r, j);
    }
    auto x_hat = denoiser_forward(g, p, g.constant(std::move(x_t)), t_steps, e_c);
    if (x_hat_out) *x_hat_out = x_hat;
    auto diff = g.sub(x_hat, g.constant(x0));
    return g.mean_all(g.hadamard(diff, diff));
}

// Spec-facing variant: draws t uniform per row and fresh Gaussian noise.
template <typename S>
typename Tape<S>::Id diffusion_loss(Tape<S>& g, DenoiserParamsT<S>& p, const Mat<S>& x0,
                                    const DiffusionSchedule& sched, typename Tape<S>::Id e_c, Rng& rng) {
    if (x0.rows == 0) throw DimensionError("diffusion_loss: empty batch");
    std::vector<int64_t> t_steps(static_cast<size_t>(x0.rows));
    for (auto& t : t_steps) t = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(sched.num_steps)));
    Mat<S> eps(x0.rows, x0.cols);
    for (auto& e : eps.v) e = static_cast<S>(rng.gaussian());
    return diffusion_loss_given(g, p, x0, t_steps, eps, sched, e_c);
}

enum class ReverseMode { Stochastic, Deterministic };

// T-step reverse chain. The forward pass noises x_0 to x_T, then each step
// predicts x_hat0 = f(x_t, t, e_c) and moves to the posterior mean
//   mu = (sqrt(alpha_t)(1-abar_{t-1}) x_t + sqrt(abar_{t-1}) beta_t x_hat0) / (1-abar_t),
// i.e. Sigma's closed form with the noise implied by the x_0 prediction
// substituted into the mean. Stochastic mode adds sqrt(Sigma) noise for t>1.
// Runs without gradients, chunked over rows to bound tape memory.
MatF reverse_denoise(const MatF& x0, const DiffusionSchedule& sched, const MatF& e_c,
                     DenoiserParams& params, ReverseMode mode, Rng& rng);

// Convex blend of original and denoised features. omega=0 and omega=1
// return bit-exact copies of the respective input.
inline MatF blend(const MatF& x0, const MatF& x_hat0, double omega) {
    if (!(omega >= 0.0 && omega <= 1.0)) throw ConfigError("blend weight must be in [0, 1]");
    require_shape(x_hat0.rows, x_hat0.cols, x0.rows, x0.cols, "blend");
    if (omega == 0.0) return x0;
    if (omega == 1.0) return x_hat0;
    MatF out(x0.rows, x0.cols);
    const float w = static_cast<float>(omega);
    for (int64_t i = 0; i < x0.size(); ++i) out.v[i] = (1.0f - w) * x0.v[i] + w * x_hat0.v[i];
    return out;
}

struct DenoisedFeatures {
    std::map<Modality, MatF> features;
    double omega = 0.0;
};

// Inter-modality alignment (text rows anchored against in-batch visual
// negatives). Both inputs are projected to the shared embedding dimension
// before the dot products. A batch of one item has no contrast: returns a
// zero constant with a warning.
template <typename S>
typename Tape<S>::Id modality_align_loss(Tape<S>& g, typename Tape<S>::Id e_hat_t,
                                         typename Tape<S>::Id e_hat_v, double tau,
                                         ParameterT<S>& proj_t, ParameterT<S>& proj_v) {
    if (!(tau > 0.0)) throw ConfigError("alignment temperature must be positive");
    if (g.val(e_hat_t).rows != g.val(e_hat_v).rows)
        throw DimensionError("modality_align_loss: item sets must match");
    if (g.val(e_hat_t).rows < 2) {
        std::fprintf(stderr, "[jbm] warning: alignment batch of size %lld has no contrast; loss = 0\n",
                     static_cast<long long>(g.val(e_hat_t).rows));
        return g.constant(Mat<S>(1, 1));
    }
    auto pt = g.matmul(e_hat_t, g.leaf(proj_t));
    auto pv = g.matmul(e_hat_v, g.leaf(proj_v));
    auto logits = g.scale(g.matmul(pt, pv, false, true), static_cast<S>(1.0 / tau));
    return g.diag_softmax_xent(logits);
}

}  // namespace jbm
