#include <doctest.h>

#include <cmath>

#include "jbm/debias.hpp"
#include "jbm/fusion.hpp"
#include "jbm/gradcheck.hpp"

using namespace jbm;

namespace {

template <typename S>
Mat<S> random_mat(int64_t r, int64_t c, Rng& rng, double scale = 1.0) {
    Mat<S> m(r, c);
    for (auto& v : m.v) v = static_cast<S>(scale * rng.uniform(-1.0, 1.0));
    return m;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("gated_fuse closed forms") {
    Rng rng(3);
    const int64_t n = 5, d = 4;
    ParameterT<float> gate_w("gate_w", d, d), gate_b("gate_b", 1, d);

    SUBCASE("zero gate parameters give a 0.5 gate") {
        MatF ev = random_mat<float>(n, d, rng);
        MatF et = random_mat<float>(n, d, rng);
        MatF ec = random_mat<float>(n, d, rng);
        TapeF g;
        auto out = gated_fuse<float>(g, {g.constant(ev), g.constant(et)}, g.constant(ec), gate_w, gate_b);
        for (int64_t i = 0; i < n * d; ++i)
            CHECK(g.val(out).v[i] == doctest::Approx(0.5f * 0.5f * (ev.v[i] + et.v[i])).epsilon(1e-5));
    }
    SUBCASE("single modality divides by one") {
        gate_w.value = random_mat<float>(d, d, rng);
        gate_b.value = random_mat<float>(1, d, rng);
        MatF ev = random_mat<float>(n, d, rng);
        MatF ec = random_mat<float>(n, d, rng);
        TapeF g;
        auto out = gated_fuse<float>(g, {g.constant(ev)}, g.constant(ec), gate_w, gate_b);
        // scalar trace oracle
        for (int64_t r = 0; r < n; ++r)
            for (int64_t j = 0; j < d; ++j) {
                double z = gate_b.value.v[static_cast<size_t>(j)];
                for (int64_t k = 0; k < d; ++k) z += static_cast<double>(ec(r, k)) * gate_w.value(j, k);
                CHECK(g.val(out)(r, j) == doctest::Approx(ev(r, j) * sigmoid(z)).epsilon(1e-4));
            }
    }
    SUBCASE("two-modality elementwise trace") {
        gate_w.value = random_mat<float>(d, d, rng);
        gate_b.value = random_mat<float>(1, d, rng);
        MatF ev = random_mat<float>(n, d, rng);
        MatF et = random_mat<float>(n, d, rng);
        MatF ec = random_mat<float>(n, d, rng);
        TapeF g;
        auto out = gated_fuse<float>(g, {g.constant(ev), g.constant(et)}, g.constant(ec), gate_w, gate_b);
        for (int64_t r = 0; r < n; ++r)
            for (int64_t j = 0; j < d; ++j) {
                double z = gate_b.value.v[static_cast<size_t>(j)];
                for (int64_t k = 0; k < d; ++k) z += static_cast<double>(ec(r, k)) * gate_w.value(j, k);
                const double expect = 0.5 * (ev(r, j) + et(r, j)) * sigmoid(z);
                CHECK(g.val(out)(r, j) == doctest::Approx(expect).epsilon(1e-4));
            }
    }
    SUBCASE("gate keeps the output bounded by the modal inputs") {
        gate_w.value = random_mat<float>(d, d, rng, 2.0);
        gate_b.value = random_mat<float>(1, d, rng, 2.0);
        MatF ev = random_mat<float>(n, d, rng, 3.0);
        MatF et = random_mat<float>(n, d, rng, 3.0);
        MatF ec = random_mat<float>(n, d, rng, 3.0);
        TapeF g;
        auto out = gated_fuse<float>(g, {g.constant(ev), g.constant(et)}, g.constant(ec), gate_w, gate_b);
        float max_in = 0, max_out = 0;
        for (int64_t i = 0; i < n * d; ++i) {
            max_in = std::max({max_in, std::abs(ev.v[i]), std::abs(et.v[i])});
            max_out = std::max(max_out, std::abs(g.val(out).v[i]));
        }
        CHECK(max_out <= max_in);
    }
}

TEST_CASE("final_embed identities") {
    Rng rng(7);
    MatF es = random_mat<float>(4, 3, rng);
    MatF ec = random_mat<float>(4, 3, rng);
    TapeF g;
    auto sum = final_embed(g, g.constant(es), g.constant(ec));
    for (int64_t i = 0; i < es.size(); ++i)
        CHECK(g.val(sum).v[i] == doctest::Approx(es.v[i] + ec.v[i]));
    auto only_c = final_embed(g, g.constant(MatF(4, 3)), g.constant(ec));
    for (int64_t i = 0; i < ec.size(); ++i) CHECK(g.val(only_c).v[i] == ec.v[i]);
}

TEST_CASE("cross_view_loss closed form on orthonormal rows") {
    const int64_t n = 5, d = 8;
    MatD rows(n, d);
    for (int64_t i = 0; i < n; ++i) rows(i, i) = 1.0;  // orthonormal, already unit
    std::vector<int64_t> idx{0, 1, 2, 3, 4};
    TapeD g;
    auto l = cross_view_loss(g, g.constant(rows), g.constant(rows), 1.0, idx, idx);
    // each term: -log(e / (e + (n-1)*e^0)) = log(e + n - 1) - 1
    const double term = std::log(std::exp(1.0) + static_cast<double>(n - 1)) - 1.0;
    CHECK(static_cast<double>(g.scalar(l)) == doctest::Approx(2.0 * term).epsilon(1e-9));
}

TEST_CASE("cross_view_loss degenerate batch and separation limit") {
    Rng rng(11);
    MatD es = random_mat<double>(6, 4, rng);
    SUBCASE("batch of one contributes zero") {
        TapeD g;
        auto l = cross_view_loss(g, g.constant(es), g.constant(es), 0.5, {2}, {1});
        CHECK(g.scalar(l) == 0.0);
    }
    SUBCASE("aligned well-separated rows drive the loss toward zero") {
        const int64_t n = 4, d = 16;
        MatD rows(n, d);
        for (int64_t i = 0; i < n; ++i) rows(i, i) = 1.0;
        std::vector<int64_t> idx{0, 1, 2, 3};
        TapeD g;
        // tau = 0.02 sharpens the softmax: normalized identical pairs dominate
        auto l = cross_view_loss(g, g.constant(rows), g.constant(rows), 0.02, idx, idx);
        CHECK(static_cast<double>(g.scalar(l)) <= 1e-6);
    }
}

TEST_CASE("cross_view_loss is invariant under joint row permutation") {
    Rng rng(13);
    const int64_t n = 6, d = 5;
    MatD es = random_mat<double>(n, d, rng);
    MatD ec = random_mat<double>(n, d, rng);
    std::vector<int64_t> idx{0, 1, 2, 3, 4, 5};
    std::vector<int64_t> perm{3, 0, 5, 1, 4, 2};
    TapeD g;
    auto a = cross_view_loss(g, g.constant(es), g.constant(ec), 0.3, idx, idx);
    auto b = cross_view_loss(g, g.constant(es), g.constant(ec), 0.3, perm, perm);
    CHECK(static_cast<double>(g.scalar(a)) == doctest::Approx(static_cast<double>(g.scalar(b))).epsilon(1e-9));
}

TEST_CASE("gated_fuse and cross_view_loss gradients pass grad_check") {
    Rng rng(17);
    const int64_t n = 6, d = 4;
    ParameterD gate_w("gate_w", d, d), gate_b("gate_b", 1, d), modal("modal", n, d), collab("collab", n, d);
    gate_w.value = random_mat<double>(d, d, rng);
    gate_b.value = random_mat<double>(1, d, rng);
    modal.value = random_mat<double>(n, d, rng);
    collab.value = random_mat<double>(n, d, rng);
    std::vector<int64_t> idx{0, 1, 2, 3, 4, 5};
    auto loss_fn = [&](bool want_grad) {
        TapeD g;
        auto em = g.leaf(modal);
        auto ec = g.leaf(collab);
        auto es = gated_fuse<double>(g, {em}, ec, gate_w, gate_b);
        auto e = final_embed(g, es, ec);
        auto l = g.add(cross_view_loss(g, es, ec, 0.2, idx, idx), g.mean_all(e));
        if (want_grad) g.backward(l);
        return static_cast<double>(g.scalar(l));
    };
    Rng probe(19);
    auto report = grad_check(loss_fn, {&gate_w, &gate_b, &modal, &collab}, 100, probe);
    INFO(report.worst);
    CHECK(report.passed(1e-4));
}

TEST_CASE("modality_bias oracles") {
    const int64_t d = 2;
    // embeddings engineered so dots are exactly (2, 0) and (0, 2)
    MatF user_v(1, d), user_t(1, d), items_v(2, d), items_t(2, d);
    user_v(0, 0) = 1.0f;
    user_t(0, 1) = 1.0f;
    items_v(0, 0) = 2.0f;  // visual: pos dot 2
    items_v(1, 0) = 0.0f;  // visual: neg dot 0
    items_t(0, 1) = 0.0f;  // textual: pos dot 0
    items_t(1, 1) = 2.0f;  // textual: neg dot 2

    ModalityBias bias = modality_bias(0, 0, 1, {&user_v, &user_t}, {&items_v, &items_t});
    const double gap = sigmoid(2.0) - sigmoid(0.0);
    CHECK(bias.gaps[0] == doctest::Approx(gap).epsilon(1e-6));
    CHECK(bias.gaps[1] == doctest::Approx(-gap).epsilon(1e-6));
    CHECK(bias.mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(bias.variance == doctest::Approx(gap * gap).epsilon(1e-6));

    SUBCASE("equal dots give a zero bias vector") {
        ModalityBias zero = modality_bias(0, 0, 0, {&user_v, &user_t}, {&items_v, &items_t});
        CHECK(zero.mean == 0.0);
        CHECK(zero.variance == 0.0);
    }
    SUBCASE("single modality has zero variance") {
        ModalityBias single = modality_bias(0, 0, 1, {&user_v}, {&items_v});
        CHECK(single.variance == 0.0);
    }
}

TEST_CASE("confidence contract") {
    DebiasConfig cfg;
    SUBCASE("neutral bias gives exactly one half") {
        ModalityBias b;
        b.gaps = {0.0, 0.0};
        CHECK(confidence(b, cfg) == 0.5);
    }
    SUBCASE("sigmoid table oracle") {
        ModalityBias b;
        b.gaps = {2.0, 2.0};
        b.mean = 2.0;
        b.variance = 0.0;
        CHECK(confidence(b, cfg) == doctest::Approx(0.8808).epsilon(1e-3));
    }
    SUBCASE("large conflict drives confidence to zero") {
        ModalityBias b;
        b.mean = 0.5;
        b.variance = 0.8;
        DebiasConfig hot{1.0, 500.0};
        CHECK(confidence(b, hot) <= 1e-10);
    }
    SUBCASE("monotone in the mean, anti-monotone in the variance") {
        Rng rng(23);
        for (int trial = 0; trial < 1000; ++trial) {
            ModalityBias lo, hi;
            const double mu = rng.uniform(-0.9, 0.9);
            const double eps1 = rng.uniform(0.0, 0.5);
            const double eps2 = eps1 + rng.uniform(0.001, 0.4);
            lo.mean = mu;
            lo.variance = eps1;
            hi.mean = mu;
            hi.variance = eps2;
            CHECK(confidence(hi, cfg) < confidence(lo, cfg));
            ModalityBias mu_lo, mu_hi;
            mu_lo.mean = mu;
            mu_hi.mean = mu + rng.uniform(0.001, 0.5);
            mu_lo.variance = mu_hi.variance = eps1;
            CHECK(confidence(mu_hi, cfg) > confidence(mu_lo, cfg));
            const double w = confidence(lo, cfg);
            CHECK(w > 0.0);
            CHECK(w < 1.0);
        }
    }
}

TEST_CASE("weighted_bpr closed forms and plain-BPR reduction") {
    SUBCASE("single triple with zero gap and half confidence") {
        TapeF g;
        MatF sp(1, 1), sn(1, 1);
        sp.v[0] = 0.7f;
        sn.v[0] = 0.7f;
        auto l = weighted_bpr<float>(g, g.constant(sp), g.constant(sn), {0.5f});
        CHECK(static_cast<double>(g.scalar(l)) == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-6));
    }
    SUBCASE("large positive margin drives the per-triple loss to zero") {
        TapeF g;
        MatF sp(1, 1), sn(1, 1);
        sp.v[0] = 60.0f;
        sn.v[0] = 0.0f;
        auto l = weighted_bpr<float>(g, g.constant(sp), g.constant(sn), {1.0f});
        CHECK(static_cast<double>(g.scalar(l)) <= 1e-9);
    }
    SUBCASE("unit confidences reduce to plain BPR within 1e-6") {
        Rng rng(29);
        const int64_t n = 64;
        MatF sp(n, 1), sn(n, 1);
        std::vector<float> sp_v, sn_v, w(n, 1.0f);
        for (int64_t i = 0; i < n; ++i) {
            sp.v[static_cast<size_t>(i)] = static_cast<float>(rng.uniform(-3, 3));
            sn.v[static_cast<size_t>(i)] = static_cast<float>(rng.uniform(-3, 3));
            sp_v.push_back(sp.v[static_cast<size_t>(i)]);
            sn_v.push_back(sn.v[static_cast<size_t>(i)]);
        }
        TapeF g;
        auto l = weighted_bpr<float>(g, g.constant(sp), g.constant(sn), w);
        CHECK(static_cast<double>(g.scalar(l)) == doctest::Approx(plain_bpr_loss(sp_v, sn_v)).epsilon(1e-6));
    }
}

TEST_CASE("common positive scaling of modality embeddings never flips the bias mean") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        MatF user(1, 3), items(2, 3);
        for (auto& v : user.v) v = static_cast<float>(rng.uniform(-1, 1));
        for (auto& v : items.v) v = static_cast<float>(rng.uniform(-1, 1));
        ModalityBias base = modality_bias(0, 0, 1, {&user}, {&items});
        MatF user_scaled = user;
        const float c = static_cast<float>(rng.uniform(0.1, 5.0));
        for (auto& v : user_scaled.v) v *= c;
        ModalityBias scaled = modality_bias(0, 0, 1, {&user_scaled}, {&items});
        if (base.mean != 0.0) CHECK(std::signbit(scaled.mean) == std::signbit(base.mean));
    }
}

TEST_CASE("confidence histogram buckets") {
    std::vector<WeightedTriple> triples(10, {0, 0, 1, 1.0f});
    const std::string csv = confidence_histogram_csv(triples, 4);
    CHECK(csv.find("1,10") != std::string::npos);  // everything in the top bucket
}
