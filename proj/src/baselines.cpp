#include "jbm/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "jbm/debias.hpp"
#include "jbm/errors.hpp"
#include "jbm/graphs.hpp"

namespace jbm {

const char* baseline_name(BaselineKind kind) {
    return kind == BaselineKind::LightGcn ? "lightgcn" : "bpr-mf";
}

BaselineFit fit_baseline(BaselineKind kind, int64_t num_users, int64_t num_items,
                         const std::vector<Interaction>& train, const Split& split,
                         const TrainConfig& cfg, bool quiet) {
    BaselineFit out;
    out.epoch_log.push_back("epoch,L_bpr,val_recall@20,seconds");

    const UserPositives train_pos = build_user_positives(train, num_users);
    const UserPositives val_pos = build_user_positives(split.validation, num_users);
    bool has_val = false;
    for (const auto& v : val_pos.items)
        if (!v.empty()) has_val = true;

    CsrF adj;
    if (kind == BaselineKind::LightGcn) {
        InteractionMatrix im = build_interaction_matrix(train, num_users, num_items);
        adj = build_collab_graph(im, num_users, num_items, cfg.layers).adj;
    }

    Rng init_rng(mix_seed(cfg.seed, seed_tag::kInit));
    Parameter embed("embed", num_users + num_items, cfg.embed_dim);
    embed.value = xavier_init<float>(num_users + num_items, cfg.embed_dim, init_rng);

    AdamConfig adam;
    adam.lr = cfg.lr;

    double best = -1.0;
    int64_t bad = 0;
    for (int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng rng(mix_seed(mix_seed(cfg.seed, seed_tag::kEpoch), static_cast<uint64_t>(epoch)));
        std::vector<Interaction> order = train;
        rng.shuffle(order);

        double epoch_bpr = 0;
        int64_t batches = 0;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
            std::vector<int64_t> u_rows, p_rows, n_rows;
            for (size_t k = begin; k < end; ++k) {
                const Interaction& it = order[k];
                const auto& pos = train_pos.items[static_cast<size_t>(it.user)];
                if (static_cast<int64_t>(pos.size()) >= num_items) continue;
                int32_t neg;
                do {
                    neg = static_cast<int32_t>(rng.below(static_cast<uint64_t>(num_items)));
                } while (train_pos.contains(it.user, neg));
                u_rows.push_back(it.user);
                p_rows.push_back(num_users + it.item);
                n_rows.push_back(num_users + neg);
            }
            if (u_rows.empty()) continue;

            TapeF g;
            auto e0 = g.leaf(embed);
            auto e = (kind == BaselineKind::LightGcn) ? propagate_collab(g, &adj, cfg.layers, e0) : e0;
            auto s_pos = g.rowdot(g.gather_rows(e, u_rows), g.gather_rows(e, p_rows));
            auto s_neg = g.rowdot(g.gather_rows(e, u_rows), g.gather_rows(e, n_rows));
            auto loss = g.mean_all(g.softplus(g.scale(g.sub(s_pos, s_neg), -1.0f)));
            epoch_bpr += static_cast<double>(g.scalar(loss));
            ++batches;
            embed.zero_grad();
            g.backward(loss);
            adam_step(embed, adam);
        }
        if (batches > 0) epoch_bpr /= static_cast<double>(batches);
        if (epoch == 1) out.first_epoch_bpr = epoch_bpr;

        MatF table;
        if (kind == BaselineKind::LightGcn) {
            TapeF g;
            table = g.val(propagate_collab(g, &adj, cfg.layers, g.leaf(embed)));
        } else {
            table = embed.value;
        }
        double val = 0.0;
        if (has_val)
            val = rank_and_score(table, num_users, num_items, 20, train_pos, val_pos, cfg.eval_batch).recall;
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        {
            char row[160];
            std::snprintf(row, sizeof(row), "%lld,%.6f,%.6f,%.3f", static_cast<long long>(epoch),
                          epoch_bpr, val, seconds);
            out.epoch_log.emplace_back(row);
        }
        if (!quiet)
            std::fprintf(stderr, "[jbm] %s epoch %lld: L_bpr=%.4f val_r20=%.4f\n", baseline_name(kind),
                         static_cast<long long>(epoch), epoch_bpr, val);
        if (val > best) {
            best = val;
            out.best_epoch = epoch;
            out.embeddings = table;
            bad = 0;
        } else {
            ++bad;
            if (bad > cfg.patience) break;
        }
    }
    out.best_val_recall = std::max(best, 0.0);
    if (out.best_epoch == 0) out.embeddings = embed.value;
    return out;
}

}  // namespace jbm
