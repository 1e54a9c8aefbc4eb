#pragma once

#include <string>
#include <vector>

#include "jbm/data.hpp"
#include "jbm/trainer.hpp"

namespace jbm {

// In-repo reference models sharing the substrate, sampler, and evaluation
// code: LightGCN (mean-of-layers propagation + plain BPR) and BPR-MF
// (id embeddings + plain BPR).
enum class BaselineKind { LightGcn, BprMf };

const char* baseline_name(BaselineKind kind);

struct BaselineFit {
    MatF embeddings;  // scoring table at the best validation epoch
    double best_val_recall = 0.0;
    int64_t best_epoch = 0;
    double first_epoch_bpr = 0.0;
    std::vector<std::string> epoch_log;
};

// Uses batch_size, embed_dim, layers, lr, max_epochs, patience, eval_batch
// and seed from the config; everything else is ignored.
BaselineFit fit_baseline(BaselineKind kind, int64_t num_users, int64_t num_items,
                         const std::vector<Interaction>& train, const Split& split,
                         const TrainConfig& cfg, bool quiet = true);

}  // namespace jbm
