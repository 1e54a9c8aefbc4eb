#include "jbm/noiselab.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "jbm/baselines.hpp"
#include "jbm/errors.hpp"

namespace jbm {

const char* corruption_name(CorruptionKind kind) {
    switch (kind) {
        case CorruptionKind::ModalityReplace: return "modality-replace";
        case CorruptionKind::FeedbackAdd: return "feedback-add";
        default: return "feedback-remove";
    }
}

void CorruptionSpec::validate() const {
    if (!(ratio >= 0.0 && ratio <= 0.20))
        throw ConfigError("corruption ratio " + std::to_string(ratio) + " rejected: limited to 20%");
}

ModalityCorruption corrupt_modality(const MatF& features, double ratio, Rng& rng) {
    if (features.rows < 2) throw ConfigError("corrupt_modality requires at least two items");
    ModalityCorruption out;
    out.features = features;
    const int64_t n = features.rows;
    const int64_t count = static_cast<int64_t>(ratio * static_cast<double>(n));
    if (count == 0) return out;
    // distinct victims via partial Fisher-Yates
    std::vector<int64_t> pool(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    for (int64_t i = 0; i < count; ++i) {
        const int64_t j = i + static_cast<int64_t>(rng.below(static_cast<uint64_t>(n - i)));
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    for (int64_t k = 0; k < count; ++k) {
        const int64_t victim = pool[static_cast<size_t>(k)];
        int64_t source;
        do {
            source = static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
        } while (source == victim);
        std::copy(features.row(source), features.row(source) + features.cols, out.features.row(victim));
        out.replaced.emplace_back(static_cast<int32_t>(victim), static_cast<int32_t>(source));
    }
    return out;
}

FeedbackCorruption corrupt_feedback_add(const std::vector<Interaction>& train,
                                        const std::vector<Interaction>& all_known, int64_t num_users,
                                        int64_t num_items, double ratio, Rng& rng) {
    FeedbackCorruption out;
    out.train = train;
    int64_t want = static_cast<int64_t>(ratio * static_cast<double>(train.size()));
    if (want == 0) return out;
    std::set<std::pair<int32_t, int32_t>> taken;
    for (const auto& it : all_known) taken.insert({it.user, it.item});
    const int64_t free_slots = num_users * num_items - static_cast<int64_t>(taken.size());
    if (want > free_slots) {
        std::fprintf(stderr, "[jbm] warning: only %lld free (u,i) slots; clamping %lld added pairs\n",
                     static_cast<long long>(free_slots), static_cast<long long>(want));
        want = free_slots;
    }
    while (static_cast<int64_t>(out.changed.size()) < want) {
        const int32_t u = static_cast<int32_t>(rng.below(static_cast<uint64_t>(num_users)));
        const int32_t i = static_cast<int32_t>(rng.below(static_cast<uint64_t>(num_items)));
        if (!taken.insert({u, i}).second) continue;
        out.train.push_back({u, i});
        out.changed.push_back({u, i});
    }
    return out;
}

FeedbackCorruption corrupt_feedback_remove(const std::vector<Interaction>& train, double ratio,
                                           Rng& rng) {
    FeedbackCorruption out;
    const int64_t count = static_cast<int64_t>(ratio * static_cast<double>(train.size()));
    if (count == 0) {
        out.train = train;
        return out;
    }
    std::vector<int64_t> pool(train.size());
    for (size_t i = 0; i < train.size(); ++i) pool[i] = static_cast<int64_t>(i);
    for (int64_t i = 0; i < count; ++i) {
        const int64_t j = i + static_cast<int64_t>(rng.below(pool.size() - static_cast<uint64_t>(i)));
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    std::vector<bool> removed(train.size(), false);
    for (int64_t i = 0; i < count; ++i) {
        removed[static_cast<size_t>(pool[static_cast<size_t>(i)])] = true;
        out.changed.push_back(train[static_cast<size_t>(pool[static_cast<size_t>(i)])]);
    }
    out.train.reserve(train.size() - static_cast<size_t>(count));
    for (size_t i = 0; i < train.size(); ++i)
        if (!removed[i]) out.train.push_back(train[i]);
    return out;
}

std::vector<NoiseCell> run_noise_grid(const Dataset& dataset, const Split& split,
                                      const std::vector<std::string>& models,
                                      const std::vector<CorruptionSpec>& specs,
                                      const TrainConfig& cfg, const TrainOptions& opt,
                                      std::string* corruption_log) {
    for (const auto& m : models)
        if (m != "jbm-diff" && m != "lightgcn" && m != "bpr-mf")
            throw ConfigError("unknown model in noise grid: " + m);

    std::vector<Interaction> all_known;
    all_known.insert(all_known.end(), split.train.begin(), split.train.end());
    all_known.insert(all_known.end(), split.validation.begin(), split.validation.end());
    all_known.insert(all_known.end(), split.test.begin(), split.test.end());

    const UserPositives test_pos = build_user_positives(split.test, dataset.num_users);
    std::ostringstream log;
    std::vector<NoiseCell> cells;

    for (const auto& model : models) {
        for (const auto& spec : specs) {
            spec.validate();
            Rng rng(mix_seed(spec.seed != 0 ? spec.seed : cfg.seed, seed_tag::kCorruption));

            Dataset working = dataset;
            Split working_split = split;
            if (spec.kind == CorruptionKind::ModalityReplace && spec.ratio > 0) {
                auto it = working.features.find(spec.modality);
                if (it == working.features.end())
                    throw ConfigError(std::string("dataset lacks modality ") + modality_name(spec.modality));
                ModalityCorruption c = corrupt_modality(it->second, spec.ratio, rng);
                it->second = std::move(c.features);
                for (const auto& [victim, source] : c.replaced)
                    log << "{\"kind\":\"modality-replace\",\"modality\":\"" << modality_name(spec.modality)
                        << "\",\"item\":" << victim << ",\"source\":" << source << "}\n";
            } else if (spec.kind == CorruptionKind::FeedbackAdd && spec.ratio > 0) {
                FeedbackCorruption c = corrupt_feedback_add(split.train, all_known, dataset.num_users,
                                                            dataset.num_items, spec.ratio, rng);
                working_split.train = std::move(c.train);
                for (const auto& it : c.changed)
                    log << "{\"kind\":\"feedback-add\",\"user\":" << it.user << ",\"item\":" << it.item
                        << "}\n";
            } else if (spec.kind == CorruptionKind::FeedbackRemove && spec.ratio > 0) {
                FeedbackCorruption c = corrupt_feedback_remove(split.train, spec.ratio, rng);
                working_split.train = std::move(c.train);
                for (const auto& it : c.changed)
                    log << "{\"kind\":\"feedback-remove\",\"user\":" << it.user << ",\"item\":" << it.item
                        << "}\n";
            }

            const UserPositives mask = build_user_positives(working_split.train, dataset.num_users);
            MatF embeddings;
            if (model == "jbm-diff") {
                Trainer trainer(working, working_split, cfg, opt);
                Checkpoint ckpt = trainer.fit();
                embeddings = compute_embeddings(ckpt.params, trainer.data(), ckpt.cache, cfg.no_ff);
            } else {
                const BaselineKind kind =
                    model == "lightgcn" ? BaselineKind::LightGcn : BaselineKind::BprMf;
                embeddings = fit_baseline(kind, dataset.num_users, dataset.num_items,
                                          working_split.train, working_split, cfg, opt.quiet)
                                 .embeddings;
            }
            RankingResult result = rank_and_score(embeddings, dataset.num_users, dataset.num_items, 20,
                                                  mask, test_pos, cfg.eval_batch);
            cells.push_back({model, spec, result.recall, result.ndcg});
            std::fprintf(stderr, "[jbm] noise cell %s/%s/%.2f: recall@20=%.4f ndcg@20=%.4f\n",
                         model.c_str(), corruption_name(spec.kind), spec.ratio, result.recall,
                         result.ndcg);
        }
    }
    if (corruption_log) *corruption_log = log.str();
    return cells;
}

std::string noise_csv(const std::vector<NoiseCell>& cells) {
    std::ostringstream os;
    os << "model,corruption_kind,modality,ratio,seed,recall@20,ndcg@20\n";
    for (const auto& c : cells) {
        os << c.model << "," << corruption_name(c.spec.kind) << ","
           << (c.spec.kind == CorruptionKind::ModalityReplace ? modality_name(c.spec.modality) : "-")
           << "," << c.spec.ratio << "," << c.spec.seed << ",";
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f\n", c.recall20, c.ndcg20);
        os << buf;
    }
    return os.str();
}

}  // namespace jbm
