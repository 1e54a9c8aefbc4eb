#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jbm/data.hpp"
#include "jbm/trainer.hpp"

namespace jbm {

enum class CorruptionKind { ModalityReplace, FeedbackAdd, FeedbackRemove };

const char* corruption_name(CorruptionKind kind);

// Injection ratios are capped at 20% (ratio 0 means an uncorrupted control
// cell). Modality-replace picks exactly floor(ratio*|I|) distinct items and
// overwrites each with the feature row of a uniformly drawn other item.
struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::FeedbackAdd;
    Modality modality = Modality::Visual;  // only for ModalityReplace
    double ratio = 0.0;
    uint64_t seed = 0;

    void validate() const;
};

struct ModalityCorruption {
    MatF features;
    std::vector<std::pair<int32_t, int32_t>> replaced;  // (item, source)
};

ModalityCorruption corrupt_modality(const MatF& features, double ratio, Rng& rng);

struct FeedbackCorruption {
    std::vector<Interaction> train;
    std::vector<Interaction> changed;  // added or removed pairs
};

// Adds floor(ratio*|train|) pairs absent from train+validation+test,
// uniform over the free slots; clamps with a warning if too few slots exist.
FeedbackCorruption corrupt_feedback_add(const std::vector<Interaction>& train,
                                        const std::vector<Interaction>& all_known, int64_t num_users,
                                        int64_t num_items, double ratio, Rng& rng);

FeedbackCorruption corrupt_feedback_remove(const std::vector<Interaction>& train, double ratio,
                                           Rng& rng);

struct NoiseCell {
    std::string model;
    CorruptionSpec spec;
    double recall20 = 0.0;
    double ndcg20 = 0.0;
};

// model names: "jbm-diff", "lightgcn", "bpr-mf". For every (model, spec)
// cell: corrupt, fit, evaluate on the clean test set. Corruption details go
// to the JSON-lines sink when provided.
std::vector<NoiseCell> run_noise_grid(const Dataset& dataset, const Split& split,
                                      const std::vector<std::string>& models,
                                      const std::vector<CorruptionSpec>& specs,
                                      const TrainConfig& cfg, const TrainOptions& opt = {},
                                      std::string* corruption_log = nullptr);

std::string noise_csv(const std::vector<NoiseCell>& cells);

}  // namespace jbm
