#include "jbm/diffusion.hpp"

#include <algorithm>

#include "jbm/errors.hpp"

namespace jbm {

namespace {

// One reverse step over a row chunk, forward-only through a throwaway tape
// (keeps the chain on the same code path the training loss uses).
MatF predict_x0(DenoiserParams& params, const MatF& x_t, int64_t t, const MatF& e_c) {
    TapeF g;
    std::vector<int64_t> t_steps(static_cast<size_t>(x_t.rows), t);
    auto out = denoiser_forward(g, params, g.constant(x_t), t_steps, g.constant(e_c));
    return g.val(out);
}

}  // namespace

MatF reverse_denoise(const MatF& x0, const DiffusionSchedule& sched, const MatF& e_c,
                     DenoiserParams& params, ReverseMode mode, Rng& rng) {
    if (x0.rows != e_c.rows) throw DimensionError("reverse_denoise: e_c rows must align with x0 rows");
    if (!params.all_finite()) throw NumericalError("reverse_denoise: non-finite denoiser parameters");

    const int64_t chunk = 2048;
    MatF result(x0.rows, x0.cols);
    for (int64_t r0 = 0; r0 < x0.rows; r0 += chunk) {
        const int64_t r1 = std::min(x0.rows, r0 + chunk);
        MatF x(r1 - r0, x0.cols);
        MatF cond(r1 - r0, e_c.cols);
        for (int64_t r = r0; r < r1; ++r) {
            std::copy(x0.row(r), x0.row(r) + x0.cols, x.row(r - r0));
            std::copy(e_c.row(r), e_c.row(r) + e_c.cols, cond.row(r - r0));
        }
        // forward-noise to x_T
        {
            const float a = static_cast<float>(std::sqrt(sched.alpha_bar_at(sched.num_steps)));
            const float b = static_cast<float>(std::sqrt(1.0 - sched.alpha_bar_at(sched.num_steps)));
            for (auto& v : x.v) v = a * v;
            for (int64_t i = 0; i < x.size(); ++i) x.v[i] += b * static_cast<float>(rng.gaussian());
        }
        for (int64_t t = sched.num_steps; t >= 1; --t) {
            MatF x_hat = predict_x0(params, x, t, cond);
            const double ab_t = sched.alpha_bar_at(t);
            const double ab_prev = sched.alpha_bar_at(t - 1);
            const double beta_t = sched.beta_at(t);
            const double c_x = std::sqrt(sched.alpha_at(t)) * (1.0 - ab_prev) / (1.0 - ab_t);
            const double c_hat = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
            for (int64_t i = 0; i < x.size(); ++i)
                x.v[i] = static_cast<float>(c_x * x.v[i] + c_hat * x_hat.v[i]);
            if (mode == ReverseMode::Stochastic && t > 1) {
                const double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab_t) * beta_t);
                for (auto& v : x.v) v += static_cast<float>(sigma * rng.gaussian());
            }
        }
        if (!x.all_finite()) throw NumericalError("reverse_denoise: chain diverged");
        for (int64_t r = r0; r < r1; ++r)
            std::copy(x.row(r - r0), x.row(r - r0) + x.cols, result.row(r));
    }
    return result;
}

}  // namespace jbm
