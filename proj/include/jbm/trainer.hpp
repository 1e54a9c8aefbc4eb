#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jbm/eval.hpp"
#include "jbm/model.hpp"

namespace jbm {

// Run configuration. JSON config files carry exactly these keys (unknown
// keys are rejected): batch_size, eval_batch, embed_dim, layers, lr,
// max_epochs, patience, T, K, omega, tau, tau_cl, lambda_dm, lambda_mm,
// lambda_cl, lambda, gamma, seed, no_mmd, no_ff, no_bd.
struct TrainConfig {
    int64_t batch_size = 512;
    int64_t eval_batch = 1024;
    int64_t embed_dim = 64;
    int64_t layers = 2;
    double lr = 0.001;
    int64_t max_epochs = 1000;
    int64_t patience = 10;
    int64_t diffusion_steps = 5;  // T
    int64_t knn_k = 5;            // K
    double omega = 0.5;
    double tau = 0.2;
    double tau_cl = 0.2;
    double lambda_dm = 0.005;
    double lambda_mm = 0.001;
    double lambda_cl = 0.01;
    double lambda = 1.0;  // debias preference-consistency temperature
    double gamma = 1.0;   // debias modal-conflict temperature
    uint64_t seed = 42;
    bool no_mmd = false;
    bool no_ff = false;
    bool no_bd = false;

    void validate() const;
};

TrainConfig config_from_json(const std::string& text);
std::string config_to_json(const TrainConfig& cfg);

// Switches outside the config contract (wired from CLI flags).
struct TrainOptions {
    bool literal_eq15 = false;        // drop normalization/temperature in the cross-view loss
    bool bias_on_raw_features = false;  // debias on projected raw features instead of propagated ones
    int64_t modal_batch = 4096;       // item batch for L_dm / L_mm
    int64_t eval_k = 20;              // validation metric cutoff
    std::string epoch_log_path;       // CSV sink; empty = in-memory only
    std::string confidence_hist_path; // last-epoch confidence histogram
    bool quiet = false;
};

struct EpochReport {
    double bpr = 0, dm = 0, mm = 0, cl = 0, total = 0;
    int64_t batches = 0;
};

struct Checkpoint {
    JbmParams params;
    EpochCache cache;
    TrainConfig config;
    double best_val_recall = 0.0;
    int64_t best_epoch = 0;
    bool aborted = false;
    std::vector<std::string> epoch_log;  // CSV rows, header included
};

// Owns the frozen run state (graphs, features, schedule) and the learnable
// parameters; epochs are driven either by fit() or externally for tests.
class Trainer {
public:
    Trainer(const Dataset& dataset, const Split& split, TrainConfig cfg, TrainOptions opt = {});

    // denoise -> propagate -> iterate shuffled triple batches -> Adam.
    EpochReport run_epoch(int64_t epoch);

    // Trains with early stopping on validation Recall@eval_k; on divergence
    // returns the last good checkpoint with aborted=true.
    Checkpoint fit();

    double evaluate_validation();

    JbmParams& params() { return params_; }
    const ModelData& data() const { return data_; }
    const EpochCache& cache() const { return cache_; }
    const DiffusionSchedule& schedule() const { return sched_; }
    const TrainConfig& config() const { return cfg_; }
    const std::vector<WeightedTriple>& last_batch_triples() const { return last_triples_; }
    const std::vector<float>& last_batch_scores_pos() const { return last_scores_pos_; }
    const std::vector<float>& last_batch_scores_neg() const { return last_scores_neg_; }

private:
    TrainConfig cfg_;
    TrainOptions opt_;
    ModelData data_;
    DiffusionSchedule sched_;
    JbmParams params_;
    EpochCache cache_;
    std::vector<Interaction> train_;
    UserPositives train_pos_;
    UserPositives val_pos_;
    std::vector<WeightedTriple> last_triples_;
    std::vector<float> last_scores_pos_, last_scores_neg_;
};

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt, uint64_t data_fingerprint);
Checkpoint load_checkpoint(const std::string& dir, uint64_t* data_fingerprint_out = nullptr);

// Rebuilds the frozen model data (graphs from raw features and train split).
ModelData build_model_data(const Dataset& dataset, const std::vector<Interaction>& train,
                           const TrainConfig& cfg);

// Reconstructs the scoring table from a checkpoint against a dataset.
MatF checkpoint_embeddings(Checkpoint& ckpt, const Dataset& dataset,
                           const std::vector<Interaction>& train);

// Grid search over subsets of the published hyperparameter grids.
struct GridRow {
    std::string combo;
    double val_recall = 0;
    double test_recall = 0;
};

using GridSpec = std::vector<std::pair<std::string, std::vector<double>>>;

GridSpec grid_from_json(const std::string& text);

std::vector<GridRow> grid_search(const Dataset& dataset, const Split& split,
                                 const TrainConfig& base, const GridSpec& grid,
                                 const TrainOptions& opt = {});

std::string grid_csv(const std::vector<GridRow>& rows);

}  // namespace jbm
