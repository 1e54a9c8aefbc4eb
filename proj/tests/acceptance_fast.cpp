// Fast acceptance suite: one pass/fail line per criterion, nonzero exit on
// any failure. Covers gradient integrity, diffusion moments, ranking-metric
// oracles, the confidence contract, reduction identities, the kNN-graph
// oracle, and desk-scale denoising gain.

#include <cmath>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "jbm/baselines.hpp"
#include "jbm/debias.hpp"
#include "jbm/eval.hpp"
#include "jbm/gradcheck.hpp"
#include "jbm/graphs.hpp"
#include "jbm/runtime.hpp"
#include "jbm/trainer.hpp"

using namespace jbm;

namespace {

int failures = 0;

void report(int criterion, bool ok, const std::string& what) {
    std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, what.c_str());
    if (!ok) ++failures;
}

Dataset tiny_dataset(int64_t users, int64_t items, int64_t per_user, uint64_t seed) {
    Dataset ds;
    ds.num_users = users;
    ds.num_items = items;
    Rng rng(seed);
    std::set<std::pair<int32_t, int32_t>> used;
    for (int32_t u = 0; u < users; ++u)
        while (static_cast<int64_t>(used.size()) < (u + 1) * per_user) {
            const int32_t i = static_cast<int32_t>(rng.below(static_cast<uint64_t>(items)));
            if (used.insert({u, i}).second) ds.interactions.push_back({u, i});
        }
    for (int64_t u = 0; u < users; ++u) ds.user_ids.push_back("u" + std::to_string(u));
    for (int64_t i = 0; i < items; ++i) ds.item_ids.push_back("i" + std::to_string(i));
    MatF fv(items, 7), ft(items, 5);
    for (auto& v : fv.v) v = static_cast<float>(rng.gaussian());
    for (auto& v : ft.v) v = static_cast<float>(rng.gaussian());
    ds.features[Modality::Visual] = fv;
    ds.features[Modality::Textual] = ft;
    return ds;
}

// --- criterion 1: full-objective gradient integrity ------------------------

void criterion_1() {
    Dataset ds = tiny_dataset(4, 6, 3, 21);
    Split split;
    split.train = ds.interactions;
    TrainConfig cfg;
    cfg.embed_dim = 5;
    cfg.knn_k = 2;
    cfg.diffusion_steps = 3;
    cfg.batch_size = 64;
    TrainOptions opt;
    opt.quiet = true;
    opt.modal_batch = 6;
    Trainer trainer(ds, split, cfg, opt);

    JbmParamsT<double> params = trainer.params().cast<double>();
    ModelDataT<double> data = trainer.data().cast<double>();
    EpochCacheT<double> cache = trainer.cache().cast<double>();
    const DiffusionSchedule& sched = trainer.schedule();

    Rng draw_rng(33);
    const UserPositives pos = build_user_positives(split.train, ds.num_users);
    BatchDraws draws;
    for (const auto& it : split.train) {
        int32_t neg = static_cast<int32_t>(draw_rng.below(static_cast<uint64_t>(ds.num_items)));
        while (pos.contains(it.user, neg))
            neg = static_cast<int32_t>(draw_rng.below(static_cast<uint64_t>(ds.num_items)));
        draws.triples.push_back({it.user, it.item, neg, 0.6f});
    }
    for (int64_t i = 0; i < ds.num_items; ++i) draws.item_batch.push_back(i);
    for (size_t m = 0; m < params.modalities.size(); ++m) {
        std::vector<int64_t> ts;
        for (int64_t i = 0; i < ds.num_items; ++i)
            ts.push_back(1 + static_cast<int64_t>(draw_rng.below(static_cast<uint64_t>(cfg.diffusion_steps))));
        draws.t_steps.push_back(std::move(ts));
        MatD eps(ds.num_items, data.raw_features[m].cols);
        for (auto& e : eps.v) e = draw_rng.gaussian();
        draws.eps.push_back(std::move(eps));
    }
    MatD cond(ds.num_items, cfg.embed_dim);
    for (auto& v : cond.v) v = draw_rng.uniform(-0.5, 0.5);

    LossWeights lw;
    lw.lambda_dm = 0.3;
    lw.lambda_mm = 0.2;
    lw.lambda_cl = 0.4;
    lw.omega = 0.5;

    auto loss_fn = [&](bool want_grad) {
        TapeD g;
        ForwardT<double> fwd = model_forward(g, params, data, cache, false);
        TotalLossT<double> loss = build_total_loss(g, params, data, fwd, draws, cond, sched, lw);
        if (want_grad) g.backward(loss.node);
        return loss.total;
    };

    // probe each parameter group separately so every surface is covered
    std::vector<ParameterT<double>*> embed_group{&params.embed};
    std::vector<ParameterT<double>*> gate_group{&params.gate_w, &params.gate_b};
    std::vector<ParameterT<double>*> proj_group;
    for (auto& p : params.proj) proj_group.push_back(&p);
    std::vector<ParameterT<double>*> den_group;
    for (auto& den : params.denoiser)
        for (auto* p : den.all()) den_group.push_back(p);

    double worst = 0;
    std::string worst_where;
    const std::pair<const char*, std::vector<ParameterT<double>*>*> groups[] = {
        {"embeddings", &embed_group}, {"gate", &gate_group}, {"projections", &proj_group},
        {"denoiser", &den_group}};
    bool ok = true;
    Rng probe(41);
    for (const auto& [name, group] : groups) {
        auto rep = grad_check(loss_fn, *group, 120, probe);
        if (!rep.passed(1e-4)) ok = false;
        if (rep.max_rel_err > worst) {
            worst = rep.max_rel_err;
            worst_where = name;
        }
    }
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "full-objective grad check (4 users / 6 items / 2 modalities), max rel err %.2e (%s) <= 1e-4",
                  worst, worst_where.c_str());
    report(1, ok, buf);
}

// --- criterion 2: diffusion moments ----------------------------------------

void criterion_2() {
    bool ok = true;
    double worst_z = 0;
    Rng rng(77);
    for (int64_t T : {int64_t{5}, int64_t{20}}) {
        DiffusionSchedule sched = build_schedule(T);
        MatF x0(1, 8);
        for (auto& v : x0.v) v = static_cast<float>(rng.uniform(-2.0, 2.0));
        for (int64_t t : {int64_t{1}, (T + 1) / 2, T}) {
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
            const double mean_z = std::abs(mean) / std::sqrt(var / n);
            const double sample_var = sum2 / n - mean * mean;
            const double var_z = std::abs(sample_var - var) / (var * std::sqrt(2.0 / n));
            worst_z = std::max({worst_z, mean_z, var_z});
            if (mean_z > 3.0 || var_z > 3.0) ok = false;
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "q_sample moments for T in {5,20}, worst z-score %.2f <= 3", worst_z);
    report(2, ok, buf);
}

// --- criterion 3: ranking-metric oracle ------------------------------------

void criterion_3() {
    bool ok = true;
    Rng rng(7);
    for (int trial = 0; trial < 100 && ok; ++trial) {
        const int64_t users = 2 + static_cast<int64_t>(rng.below(9));
        const int64_t items = 3 + static_cast<int64_t>(rng.below(13));
        const int64_t k = 1 + static_cast<int64_t>(rng.below(5));
        MatF e(users + items, 3);
        for (auto& v : e.v) v = static_cast<float>(rng.uniform(-1, 1));
        UserPositives mask, targets;
        mask.items.resize(static_cast<size_t>(users));
        targets.items.resize(static_cast<size_t>(users));
        for (int32_t u = 0; u < users; ++u)
            for (int32_t i = 0; i < items; ++i) {
                const double p = rng.uniform();
                if (p < 0.2) mask.items[static_cast<size_t>(u)].push_back(i);
                else if (p < 0.35) targets.items[static_cast<size_t>(u)].push_back(i);
            }
        bool any = false;
        for (const auto& t : targets.items) any |= !t.empty();
        if (!any) targets.items[0].push_back(0);

        RankingResult got = rank_and_score(e, users, items, k, mask, targets, 4);

        // brute-force oracle: full sort per user, direct metric definitions
        double recall = 0, ndcg = 0;
        int64_t counted = 0;
        for (int32_t u = 0; u < users; ++u) {
            const auto& tgt = targets.items[static_cast<size_t>(u)];
            if (tgt.empty()) continue;
            std::vector<std::pair<double, int32_t>> scored;
            for (int32_t i = 0; i < items; ++i) {
                if (mask.contains(u, i)) continue;
                double s = 0;
                for (int64_t j = 0; j < 3; ++j)
                    s += static_cast<double>(e(u, j)) * e(users + i, j);
                scored.emplace_back(s, i);
            }
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            const int64_t take = std::min<int64_t>(k, static_cast<int64_t>(scored.size()));
            int64_t hits = 0;
            double dcg = 0;
            for (int64_t r = 0; r < take; ++r)
                if (std::binary_search(tgt.begin(), tgt.end(), scored[static_cast<size_t>(r)].second)) {
                    ++hits;
                    dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
                }
            double idcg = 0;
            for (int64_t r = 0; r < std::min<int64_t>(static_cast<int64_t>(tgt.size()), k); ++r)
                idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
            recall += static_cast<double>(hits) / static_cast<double>(tgt.size());
            ndcg += dcg / idcg;
            ++counted;
        }
        recall /= static_cast<double>(counted);
        ndcg /= static_cast<double>(counted);
        if (std::abs(got.recall - recall) > 1e-12 || std::abs(got.ndcg - ndcg) > 1e-12) ok = false;
    }

    // closed form: single hit at rank 2
    UserPositives one;
    one.items = {{2}};
    std::vector<std::vector<int32_t>> topk{{0, 2, 1}};
    const double got = ndcg_at_k({0}, topk, one, 3);
    if (std::abs(got - 1.0 / std::log2(3.0)) > 1e-9) ok = false;

    report(3, ok, "recall@K / ndcg@K equal brute-force oracles on 100 instances; "
                  "single-hit-at-rank-2 ndcg = 1/log2(3) +- 1e-9");
}

// --- criterion 4: confidence contract --------------------------------------

void criterion_4() {
    DebiasConfig cfg;
    bool ok = true;
    Rng rng(23);
    for (int trial = 0; trial < 10000 && ok; ++trial) {
        ModalityBias b;
        b.mean = rng.uniform(-0.999, 0.999);
        b.variance = rng.uniform(0.0, 1.0);
        const double w = confidence(b, cfg);
        if (!(w > 0.0 && w < 1.0)) ok = false;
        // pairwise monotonicity probes
        ModalityBias up = b;
        up.mean = b.mean + rng.uniform(1e-6, 0.5);
        if (!(confidence(up, cfg) > w)) ok = false;
        ModalityBias conflict = b;
        conflict.variance = b.variance + rng.uniform(1e-6, 0.5);
        if (!(confidence(conflict, cfg) < w)) ok = false;
    }
    ModalityBias zero;
    zero.mean = 0.0;
    zero.variance = 0.0;
    if (confidence(zero, cfg) != 0.5) ok = false;
    report(4, ok, "w in (0,1) over 1e4 draws, monotone in mu_R, anti-monotone in eps_R, w(0,0) = 0.5");
}

// --- criterion 5: reduction identities -------------------------------------

void criterion_5() {
    bool ok = true;
    std::string detail;

    // weighted BPR with unit confidences vs independent plain implementation
    {
        Rng rng(29);
        const int64_t n = 256;
        MatF sp(n, 1), sn(n, 1);
        std::vector<float> spv, snv, w(n, 1.0f);
        for (int64_t i = 0; i < n; ++i) {
            sp.v[static_cast<size_t>(i)] = static_cast<float>(rng.uniform(-4, 4));
            sn.v[static_cast<size_t>(i)] = static_cast<float>(rng.uniform(-4, 4));
            spv.push_back(sp.v[static_cast<size_t>(i)]);
            snv.push_back(sn.v[static_cast<size_t>(i)]);
        }
        TapeF g;
        auto l = weighted_bpr<float>(g, g.constant(sp), g.constant(sn), w);
        if (std::abs(static_cast<double>(g.scalar(l)) - plain_bpr_loss(spv, snv)) > 1e-6) {
            ok = false;
            detail += " [w=1 BPR mismatch]";
        }
    }

    // blend with omega = 0 returns the input bit-exactly
    {
        Rng rng(31);
        MatF x0(17, 9), xh(17, 9);
        for (auto& v : x0.v) v = static_cast<float>(rng.gaussian());
        for (auto& v : xh.v) v = static_cast<float>(rng.gaussian());
        MatF b = blend(x0, xh, 0.0);
        for (int64_t i = 0; i < x0.size(); ++i)
            if (b.v[i] != x0.v[i]) {
                ok = false;
                detail += " [blend omega=0 not bit-exact]";
                break;
            }
    }

    // no-bd training reproduces a plain-BPR first epoch under a fixed seed
    {
        Dataset ds = tiny_dataset(12, 10, 4, 37);
        Split split;
        split.train = ds.interactions;
        TrainConfig cfg;
        cfg.embed_dim = 8;
        cfg.batch_size = 4096;  // single batch: the epoch report is the first batch
        cfg.diffusion_steps = 3;
        cfg.knn_k = 3;
        cfg.no_bd = true;
        cfg.seed = 97;
        TrainOptions opt;
        opt.quiet = true;
        opt.modal_batch = 10;
        Trainer trainer(ds, split, cfg, opt);
        EpochReport r = trainer.run_epoch(1);
        std::vector<float> sp(trainer.last_batch_scores_pos().begin(),
                              trainer.last_batch_scores_pos().end());
        std::vector<float> sn(trainer.last_batch_scores_neg().begin(),
                              trainer.last_batch_scores_neg().end());
        if (std::abs(r.bpr - plain_bpr_loss(sp, sn)) > 1e-6) {
            ok = false;
            detail += " [no-bd first-epoch L_bpr differs from plain BPR]";
        }
        for (const auto& t : trainer.last_batch_triples())
            if (t.w != 1.0f) {
                ok = false;
                detail += " [no-bd left a non-unit weight]";
                break;
            }
    }

    report(5, ok, "reduction identities: w=1 BPR == plain BPR (1e-6), blend(omega=0) bit-exact, "
                  "no-bd epoch == plain BPR" + detail);
}

// --- criterion 6: kNN-graph oracle ------------------------------------------

void criterion_6() {
    bool ok = true;
    Rng rng(17);
    for (int trial = 0; trial < 50 && ok; ++trial) {
        const int64_t n = 5 + static_cast<int64_t>(rng.below(26));  // <= 30 items
        const int64_t d = 3 + static_cast<int64_t>(rng.below(6));
        const int64_t k = 1 + static_cast<int64_t>(rng.below(5));   // K <= 5
        MatF f(n, d);
        for (auto& v : f.v) v = static_cast<float>(rng.uniform(-1, 1));
        SemanticGraph g = build_semantic_graph(f, Modality::Visual, std::min(k, n - 1));

        for (int64_t a = 0; a < n && ok; ++a) {
            std::vector<std::pair<double, int64_t>> sims;
            for (int64_t b = 0; b < n; ++b) {
                if (b == a) continue;
                double dot = 0, na = 0, nb = 0;
                for (int64_t j = 0; j < d; ++j) {
                    dot += static_cast<double>(f(a, j)) * f(b, j);
                    na += static_cast<double>(f(a, j)) * f(a, j);
                    nb += static_cast<double>(f(b, j)) * f(b, j);
                }
                sims.emplace_back(dot / std::sqrt(na * nb), b);
            }
            std::sort(sims.begin(), sims.end(), [](const auto& x, const auto& y) {
                if (x.first != y.first) return x.first > y.first;
                return x.second < y.second;  // documented tie-break: smaller index
            });
            const auto& got = g.topk[static_cast<size_t>(a)];
            const int64_t expect_k = std::min(k, n - 1);
            if (static_cast<int64_t>(got.size()) != expect_k) ok = false;
            for (int64_t j = 0; j < expect_k && ok; ++j)
                if (got[static_cast<size_t>(j)].first != sims[static_cast<size_t>(j)].second) ok = false;
        }
    }
    report(6, ok, "top-K neighbor sets equal brute-force cosine top-K on 50 instances with the "
                  "smaller-index tie-break");
}

// --- criterion 7: desk-scale denoising gain ---------------------------------

void criterion_7() {
    Rng rng(101);
    const int64_t items = 512, d = 64, d_m = 256, T = 5;
    // clean signal lives in the conditioning subspace; noise is full-rank
    MatF e_c(items, d);
    for (auto& v : e_c.v) v = static_cast<float>(rng.gaussian());
    MatF w_true(d, d_m);
    const float w_scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(d)));
    for (auto& v : w_true.v) v = static_cast<float>(rng.gaussian()) * w_scale;
    MatF clean = matmul(e_c, w_true);
    MatF x0 = clean;
    for (auto& v : x0.v) v += static_cast<float>(rng.gaussian());  // SNR 1:1

    DiffusionSchedule sched = build_schedule(T);
    DenoiserParams params;
    Rng init(11);
    params.init("den", d_m, d, T, init);

    AdamConfig adam;  // lr 1e-3
    Rng train_rng(13);
    const int64_t batch = 128;
    for (int epoch = 0; epoch < 200; ++epoch) {
        std::vector<int64_t> order(static_cast<size_t>(items));
        for (int64_t i = 0; i < items; ++i) order[static_cast<size_t>(i)] = i;
        train_rng.shuffle(order);
        for (int64_t b0 = 0; b0 < items; b0 += batch) {
            const int64_t b1 = std::min(items, b0 + batch);
            MatF xb(b1 - b0, d_m), cb(b1 - b0, d);
            for (int64_t r = b0; r < b1; ++r) {
                std::copy(x0.row(order[static_cast<size_t>(r)]),
                          x0.row(order[static_cast<size_t>(r)]) + d_m, xb.row(r - b0));
                std::copy(e_c.row(order[static_cast<size_t>(r)]),
                          e_c.row(order[static_cast<size_t>(r)]) + d, cb.row(r - b0));
            }
            TapeF g;
            auto loss = diffusion_loss(g, params, xb, sched, g.constant(cb), train_rng);
            for (auto* p : params.all()) p->zero_grad();
            g.backward(loss);
            for (auto* p : params.all()) adam_step(*p, adam);
        }
    }

    Rng chain_rng(17);
    MatF x_hat = reverse_denoise(x0, sched, e_c, params, ReverseMode::Deterministic, chain_rng);

    double mse_noisy = 0, mse_recon = 0;
    for (int64_t i = 0; i < clean.size(); ++i) {
        const double dn = static_cast<double>(x0.v[i]) - clean.v[i];
        const double dr = static_cast<double>(x_hat.v[i]) - clean.v[i];
        mse_noisy += dn * dn;
        mse_recon += dr * dr;
    }
    mse_noisy /= static_cast<double>(clean.size());
    mse_recon /= static_cast<double>(clean.size());
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "denoising gain at desk scale: reconstruction MSE %.4f <= 0.5 x noisy MSE %.4f",
                  mse_recon, mse_noisy);
    report(7, mse_recon <= 0.5 * mse_noisy, buf);
}

}  // namespace

int main() {
    jbm::init_runtime();
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    if (failures) std::printf("%d criterion(s) FAILED\n", failures);
    else std::printf("all fast acceptance criteria passed\n");
    return failures == 0 ? 0 : 1;
}
