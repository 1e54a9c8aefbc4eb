#include <doctest.h>

#include <cmath>

#include "jbm/diffusion.hpp"
#include "jbm/gradcheck.hpp"

using namespace jbm;

namespace {

template <typename S>
Mat<S> random_mat(int64_t r, int64_t c, Rng& rng, double scale = 1.0) {
    Mat<S> m(r, c);
    for (auto& v : m.v) v = static_cast<S>(scale * rng.uniform(-1.0, 1.0));
    return m;
}

// independent double-precision re-computation of the denoiser forward
MatD denoiser_trace(const DenoiserParamsT<double>& p, const MatD& x_t,
                    const std::vector<int64_t>& ts, const MatD& e_c) {
    const int64_t n = x_t.rows, d = p.in_w.value.cols;
    MatD h = matmul(x_t, p.in_w.value);
    for (int64_t r = 0; r < n; ++r)
        for (int64_t j = 0; j < d; ++j) h(r, j) += p.in_b.value.v[static_cast<size_t>(j)];
    MatD z(n, 2 * d);
    for (int64_t r = 0; r < n; ++r) {
        for (int64_t j = 0; j < d; ++j) z(r, j) = h(r, j);
        for (int64_t j = 0; j < d; ++j) z(r, d + j) = p.time_embed.value(ts[static_cast<size_t>(r)] - 1, j);
    }
    MatD h1 = matmul(z, p.h1_w.value);
    for (int64_t r = 0; r < n; ++r)
        for (int64_t j = 0; j < 2 * d; ++j) h1(r, j) = std::tanh(h1(r, j) + p.h1_b.value.v[static_cast<size_t>(j)]);
    MatD h2 = matmul(h1, p.h2_w.value);
    for (int64_t r = 0; r < n; ++r)
        for (int64_t j = 0; j < d; ++j) h2(r, j) = std::tanh(h2(r, j) + p.h2_b.value.v[static_cast<size_t>(j)]) * e_c(r, j);
    MatD out = matmul(h2, p.out_w.value);
    for (int64_t r = 0; r < n; ++r)
        for (int64_t j = 0; j < out.cols; ++j) out(r, j) += p.out_b.value.v[static_cast<size_t>(j)];
    return out;
}

}  // namespace

TEST_CASE("build_schedule direct products") {
    DiffusionSchedule s = build_schedule(2, 0.1, 0.2);
    CHECK(s.alpha[0] == doctest::Approx(0.9));
    CHECK(s.alpha[1] == doctest::Approx(0.8));
    CHECK(s.alpha_bar[0] == doctest::Approx(0.9));
    CHECK(s.alpha_bar[1] == doctest::Approx(0.72));

    DiffusionSchedule one = build_schedule(1, 0.05, 0.3);
    CHECK(one.alpha_bar[0] == doctest::Approx(0.95));

    DiffusionSchedule ten = build_schedule(10, 1e-4, 0.02);
    double prod = 1.0;
    for (int64_t t = 1; t <= 10; ++t) prod *= 1.0 - ten.beta_at(t);
    CHECK(ten.alpha_bar_at(10) == doctest::Approx(prod).epsilon(1e-7));
    // strictly decreasing
    for (int64_t t = 2; t <= 10; ++t) CHECK(ten.alpha_bar_at(t) < ten.alpha_bar_at(t - 1));
}

TEST_CASE("build_schedule rejects bad bounds") {
    CHECK_THROWS_AS(build_schedule(0, 0.1, 0.2), ConfigError);
    CHECK_THROWS_AS(build_schedule(1001, 0.1, 0.2), ConfigError);
    CHECK_THROWS_AS(build_schedule(5, 0.0, 0.2), ConfigError);
    CHECK_THROWS_AS(build_schedule(5, 0.3, 0.2), ConfigError);
    CHECK_THROWS_AS(build_schedule(5, 0.1, 1.0), ConfigError);
}

TEST_CASE("q_sample limits") {
    Rng rng(5);
    MatF x0 = random_mat<float>(4, 6, rng);

    // near-zero noise: x_t stays close to x0
    DiffusionSchedule tiny = build_schedule(3, 1e-9, 1e-8);
    auto s = q_sample(x0, 3, tiny, rng);
    for (int64_t i = 0; i < x0.size(); ++i) CHECK(s.x_t.v[i] == doctest::Approx(x0.v[i]).epsilon(1e-3));

    // zero signal: x_t = sqrt(1 - abar) * eps exactly
    MatF zeros(4, 6);
    DiffusionSchedule sched = build_schedule(5);
    auto z = q_sample(zeros, 4, sched, rng);
    const float scale = static_cast<float>(std::sqrt(1.0 - sched.alpha_bar_at(4)));
    for (int64_t i = 0; i < zeros.size(); ++i) CHECK(z.x_t.v[i] == doctest::Approx(scale * z.eps.v[i]));

    CHECK_THROWS_AS(q_sample(x0, 0, sched, rng), DimensionError);
    CHECK_THROWS_AS(q_sample(x0, 6, sched, rng), DimensionError);
}

TEST_CASE("q_sample moment oracle") {
    Rng rng(77);
    MatF x0(1, 8);
    for (auto& v : x0.v) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    DiffusionSchedule sched = build_schedule(5);
    for (int64_t t : {1LL, 3LL, 5LL}) {
        const double a = std::sqrt(sched.alpha_bar_at(t));
        const double var = 1.0 - sched.alpha_bar_at(t);
        const int64_t draws = 10000;
        double sum = 0, sum2 = 0;
        for (int64_t k = 0; k < draws; ++k) {
            auto s = q_sample(x0, t, sched, rng);
            for (int64_t j = 0; j < x0.cols; ++j) {
                const double centered = static_cast<double>(s.x_t.v[j]) - a * static_cast<double>(x0.v[j]);
                sum += centered;
                sum2 += centered * centered;
            }
        }
        const double n = static_cast<double>(draws * x0.cols);
        const double mean = sum / n;
        const double mean_se = std::sqrt(var / n);
        CHECK(std::abs(mean) <= 3.0 * mean_se);
        const double sample_var = sum2 / n - mean * mean;
        const double var_se = var * std::sqrt(2.0 / n);
        CHECK(std::abs(sample_var - var) <= 3.0 * var_se);
    }
}

TEST_CASE("denoiser gating by zeros and constant hidden state") {
    Rng rng(9);
    const int64_t d_m = 5, d = 4, n = 3;
    DenoiserParamsT<float> p;
    p.init("den", d_m, d, 3, rng);
    MatF x_t = random_mat<float>(n, d_m, rng);
    std::vector<int64_t> ts{1, 2, 3};

    SUBCASE("e_c = 0 silences everything but the output bias") {
        TapeF g;
        auto out = denoiser_forward(g, p, g.constant(x_t), ts, g.constant(MatF(n, d)));
        const MatF& y = g.val(out);
        for (int64_t r = 0; r < n; ++r)
            for (int64_t j = 0; j < d_m; ++j) CHECK(y(r, j) == doctest::Approx(p.out_b.value.v[static_cast<size_t>(j)]));
    }

    SUBCASE("zeroed hidden layers with e_c = 1 pass only the bias path") {
        p.h1_w.value.fill(0);
        p.h1_b.value.fill(0);
        p.h2_w.value.fill(0);
        // tanh(h2_b) is the constant hidden state; gate of ones keeps it
        p.h2_b.value.fill(0.3f);
        TapeF g;
        auto out = denoiser_forward(g, p, g.constant(x_t), ts, g.constant(MatF(n, d, 1.0f)));
        const MatF& y = g.val(out);
        const float h = std::tanh(0.3f);
        for (int64_t r = 0; r < n; ++r)
            for (int64_t j = 0; j < d_m; ++j) {
                float expect = p.out_b.value.v[static_cast<size_t>(j)];
                for (int64_t k = 0; k < d; ++k) expect += h * p.out_w.value(k, j);
                CHECK(y(r, j) == doctest::Approx(expect).epsilon(1e-5));
            }
    }
}

TEST_CASE("diffusion loss: zero predictor equals signal power; trace oracle") {
    Rng rng(13);
    const int64_t d_m = 6, d = 4, n = 5, T = 4;
    DiffusionSchedule sched = build_schedule(T);

    SUBCASE("zero predictor") {
        DenoiserParamsT<float> p;
        p.init("den", d_m, d, T, rng);
        for (auto* q : p.all()) q->value.fill(0);
        MatF x0 = random_mat<float>(n, d_m, rng);
        TapeF g;
        Rng draw(21);
        auto loss = diffusion_loss(g, p, x0, sched, g.constant(random_mat<float>(n, d, rng)), draw);
        double power = 0;
        for (auto v : x0.v) power += static_cast<double>(v) * v;
        power /= static_cast<double>(x0.size());
        CHECK(static_cast<double>(g.scalar(loss)) == doctest::Approx(power).epsilon(1e-5));
    }

    SUBCASE("fixed draws match an independent double trace") {
        DenoiserParamsT<double> p;
        p.init("den", d_m, d, T, rng);
        MatD x0 = random_mat<double>(n, d_m, rng);
        MatD e_c = random_mat<double>(n, d, rng);
        std::vector<int64_t> ts{1, 2, 4, 3, 2};
        MatD eps = random_mat<double>(n, d_m, rng);

        TapeD g;
        auto loss = diffusion_loss_given(g, p, x0, ts, eps, sched, g.constant(e_c));

        MatD x_t(n, d_m);
        for (int64_t r = 0; r < n; ++r) {
            const double ab = sched.alpha_bar_at(ts[static_cast<size_t>(r)]);
            for (int64_t j = 0; j < d_m; ++j)
                x_t(r, j) = std::sqrt(ab) * x0(r, j) + std::sqrt(1.0 - ab) * eps(r, j);
        }
        MatD out = denoiser_trace(p, x_t, ts, e_c);
        double mse = 0;
        for (int64_t i = 0; i < out.size(); ++i) {
            const double diff = out.v[i] - x0.v[i];
            mse += diff * diff;
        }
        mse /= static_cast<double>(out.size());
        CHECK(static_cast<double>(g.scalar(loss)) == doctest::Approx(mse).epsilon(1e-10));
    }
}

TEST_CASE("denoiser and alignment gradients pass grad_check") {
    Rng rng(23);
    const int64_t d_m_v = 5, d_m_t = 4, d = 3, n = 6, T = 3;
    DiffusionSchedule sched = build_schedule(T);
    DenoiserParamsT<double> den_v, den_t;
    den_v.init("den_v", d_m_v, d, T, rng);
    den_t.init("den_t", d_m_t, d, T, rng);
    ParameterD proj_v("proj_v", d_m_v, d), proj_t("proj_t", d_m_t, d);
    proj_v.value = random_mat<double>(d_m_v, d, rng);
    proj_t.value = random_mat<double>(d_m_t, d, rng);

    MatD x0_v = random_mat<double>(n, d_m_v, rng);
    MatD x0_t = random_mat<double>(n, d_m_t, rng);
    MatD e_c = random_mat<double>(n, d, rng);
    std::vector<int64_t> ts{1, 3, 2, 1, 2, 3};
    MatD eps_v = random_mat<double>(n, d_m_v, rng);
    MatD eps_t = random_mat<double>(n, d_m_t, rng);

    auto loss_fn = [&](bool want_grad) {
        TapeD g;
        auto cond = g.constant(e_c);
        TapeD::Id xhat_v = -1, xhat_t = -1;
        auto l_v = diffusion_loss_given(g, den_v, x0_v, ts, eps_v, sched, cond, &xhat_v);
        auto l_t = diffusion_loss_given(g, den_t, x0_t, ts, eps_t, sched, cond, &xhat_t);
        const double omega = 0.5;
        auto blend_v = g.add(g.scale(g.constant(x0_v), 1.0 - omega), g.scale(xhat_v, omega));
        auto blend_t = g.add(g.scale(g.constant(x0_t), 1.0 - omega), g.scale(xhat_t, omega));
        auto l_mm = modality_align_loss(g, blend_t, blend_v, 0.2, proj_t, proj_v);
        auto total = g.add(g.add(l_v, l_t), g.scale(l_mm, 0.7));
        if (want_grad) g.backward(total);
        return static_cast<double>(g.scalar(total));
    };

    std::vector<ParameterD*> params{&proj_v, &proj_t};
    for (auto* p : den_v.all()) params.push_back(p);
    for (auto* p : den_t.all()) params.push_back(p);
    Rng probe(31);
    auto report = grad_check(loss_fn, params, 150, probe);
    INFO(report.worst);
    CHECK(report.passed(1e-4));
}

TEST_CASE("reverse_denoise single step equals the x0 prediction") {
    Rng rng(41);
    const int64_t d_m = 4, d = 3, n = 5;
    DiffusionSchedule sched = build_schedule(1, 0.05, 0.05);
    DenoiserParams p;
    p.init("den", d_m, d, 1, rng);
    MatF x0 = random_mat<float>(n, d_m, rng);
    MatF e_c = random_mat<float>(n, d, rng);

    Rng chain_rng(7);
    MatF out = reverse_denoise(x0, sched, e_c, p, ReverseMode::Deterministic, chain_rng);

    // replicate: x_1 = q_sample(x0, 1) with the same stream, then f(x_1, 1)
    Rng replay(7);
    auto s = q_sample(x0, 1, sched, replay);
    TapeF g;
    std::vector<int64_t> ts(static_cast<size_t>(n), 1);
    auto pred = denoiser_forward(g, p, g.constant(s.x_t), ts, g.constant(e_c));
    const MatF& expect = g.val(pred);
    for (int64_t i = 0; i < out.size(); ++i) CHECK(out.v[i] == doctest::Approx(expect.v[i]).epsilon(1e-5));
}

TEST_CASE("reverse_denoise rejects non-finite parameters and diverged chains") {
    Rng rng(43);
    DiffusionSchedule sched = build_schedule(2);
    DenoiserParams p;
    p.init("den", 3, 2, 2, rng);
    p.h1_w.value.v[0] = std::numeric_limits<float>::quiet_NaN();
    MatF x0(4, 3, 0.5f);
    MatF e_c(4, 2, 0.1f);
    Rng chain_rng(1);
    CHECK_THROWS_AS(reverse_denoise(x0, sched, e_c, p, ReverseMode::Deterministic, chain_rng),
                    NumericalError);
}

TEST_CASE("reverse_denoise deterministic mode is a pure function of the forward noise") {
    Rng rng(47);
    DiffusionSchedule sched = build_schedule(4);
    DenoiserParams p;
    p.init("den", 5, 3, 4, rng);
    MatF x0 = random_mat<float>(6, 5, rng);
    MatF e_c = random_mat<float>(6, 3, rng);
    Rng r1(123), r2(123);
    MatF a = reverse_denoise(x0, sched, e_c, p, ReverseMode::Deterministic, r1);
    MatF b = reverse_denoise(x0, sched, e_c, p, ReverseMode::Deterministic, r2);
    for (int64_t i = 0; i < a.size(); ++i) CHECK(a.v[i] == b.v[i]);
}

TEST_CASE("blend endpoints are bit-exact and blending is linear") {
    Rng rng(53);
    MatF x0 = random_mat<float>(7, 5, rng);
    MatF xh = random_mat<float>(7, 5, rng);
    MatF b0 = blend(x0, xh, 0.0);
    MatF b1 = blend(x0, xh, 1.0);
    for (int64_t i = 0; i < x0.size(); ++i) {
        CHECK(b0.v[i] == x0.v[i]);
        CHECK(b1.v[i] == xh.v[i]);
    }
    MatF half = blend(x0, xh, 0.5);
    for (int64_t i = 0; i < x0.size(); ++i)
        CHECK(half.v[i] == doctest::Approx(0.5f * (x0.v[i] + xh.v[i])));
    // linearity: blend(x0, xh, w) - x0 == w (xh - x0)
    MatF b = blend(x0, xh, 0.3);
    for (int64_t i = 0; i < x0.size(); ++i)
        CHECK(static_cast<double>(b.v[i] - x0.v[i]) ==
              doctest::Approx(0.3 * static_cast<double>(xh.v[i] - x0.v[i])).epsilon(1e-5));
    CHECK_THROWS_AS(blend(x0, xh, 1.5), ConfigError);
}

TEST_CASE("modality alignment loss closed forms") {
    Rng rng(59);
    const int64_t d = 4;

    SUBCASE("batch of one is zero with a warning") {
        ParameterD pt("pt", d, d), pv("pv", d, d);
        pt.value = random_mat<double>(d, d, rng);
        pv.value = random_mat<double>(d, d, rng);
        TapeD g;
        auto l = modality_align_loss(g, g.constant(random_mat<double>(1, d, rng)),
                                     g.constant(random_mat<double>(1, d, rng)), 1.0, pt, pv);
        CHECK(g.scalar(l) == 0.0);
    }

    SUBCASE("identical projected rows give log n") {
        const int64_t n = 6;
        ParameterD pt("pt", d, d), pv("pv", d, d);
        pt.value = random_mat<double>(d, d, rng);
        pv.value = pt.value;
        MatD same_row(n, d);
        for (int64_t r = 0; r < n; ++r)
            for (int64_t j = 0; j < d; ++j) same_row(r, j) = 0.3 * static_cast<double>(j + 1);
        TapeD g;
        auto l = modality_align_loss(g, g.constant(same_row), g.constant(same_row), 1.0, pt, pv);
        CHECK(static_cast<double>(g.scalar(l)) == doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-9));
    }

    SUBCASE("dominant positives drive the loss to zero") {
        const int64_t n = 4;
        ParameterD pt("pt", n, n), pv("pv", n, n);
        pt.value = MatD(n, n);
        pv.value = MatD(n, n);
        for (int64_t i = 0; i < n; ++i) {
            pt.value(i, i) = 1.0;
            pv.value(i, i) = 1.0;
        }
        MatD eye_scaled(n, n);
        for (int64_t i = 0; i < n; ++i) eye_scaled(i, i) = 20.0;  // big positive dots on the diagonal
        TapeD g;
        auto l = modality_align_loss(g, g.constant(eye_scaled), g.constant(eye_scaled), 1.0, pt, pv);
        CHECK(static_cast<double>(g.scalar(l)) <= 1e-6);
    }
}
