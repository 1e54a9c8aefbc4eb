#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "jbm/param.hpp"
#include "jbm/rng.hpp"

namespace jbm {

struct GradCheckReport {
    int probes = 0;
    double max_rel_err = 0.0;
    std::string worst;  // "param[idx]: analytic vs fd"
    bool finite = true;

    bool passed(double tol) const { return finite && max_rel_err <= tol; }
};

// Compares analytic gradients against central finite differences on randomly
// probed coordinates. The loss function must be deterministic (fixed draws
// across calls) and is expected to run in 64-bit; when want_grad is true it
// must also accumulate gradients into the supplied parameters (zeroed here).
//
// loss_fn(want_grad) -> loss value.
inline GradCheckReport grad_check(const std::function<double(bool)>& loss_fn,
                                  std::vector<ParameterD*> params, int probe_count, Rng& rng,
                                  double fd_step = 1e-5) {
    GradCheckReport report;
    for (auto* p : params) p->zero_grad();
    const double base = loss_fn(true);
    if (!std::isfinite(base)) {
        report.finite = false;
        return report;
    }
    for (int probe = 0; probe < probe_count; ++probe) {
        auto* p = params[static_cast<size_t>(rng.below(params.size()))];
        if (p->value.size() == 0) continue;
        const int64_t k = static_cast<int64_t>(rng.below(static_cast<uint64_t>(p->value.size())));
        const double saved = p->value.v[static_cast<size_t>(k)];

        p->value.v[static_cast<size_t>(k)] = saved + fd_step;
        const double up = loss_fn(false);
        p->value.v[static_cast<size_t>(k)] = saved - fd_step;
        const double down = loss_fn(false);
        p->value.v[static_cast<size_t>(k)] = saved;

        if (!std::isfinite(up) || !std::isfinite(down)) {
            report.finite = false;
            return report;
        }
        const double fd = (up - down) / (2.0 * fd_step);
        const double analytic = p->grad.v[static_cast<size_t>(k)];
        const double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-3});
        ++report.probes;
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst = p->name + "[" + std::to_string(k) + "]: analytic=" + std::to_string(analytic) +
                           " fd=" + std::to_string(fd);
        }
    }
    return report;
}

}  // namespace jbm
