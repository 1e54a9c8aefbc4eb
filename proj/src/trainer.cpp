#include "jbm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "jbm/debias.hpp"
#include "jbm/errors.hpp"
#include "jbm/io.hpp"

namespace jbm {

using nlohmann::json;

void TrainConfig::validate() const {
    if (batch_size < 1 || eval_batch < 1) throw ConfigError("batch sizes must be >= 1");
    if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
    if (layers < 0) throw ConfigError("layers must be >= 0");
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 0) throw ConfigError("patience must be >= 0");
    if (diffusion_steps < 1 || diffusion_steps > 1000) throw ConfigError("T must be in [1, 1000]");
    if (knn_k < 1) throw ConfigError("K must be >= 1");
    if (!(omega >= 0.0 && omega <= 1.0)) throw ConfigError("omega must be in [0, 1]");
    if (!(tau > 0) || !(tau_cl > 0)) throw ConfigError("temperatures must be positive");
    if (lambda_dm < 0 || lambda_mm < 0 || lambda_cl < 0) throw ConfigError("loss weights must be >= 0");
    if (!(lambda > 0) || !(gamma > 0)) throw ConfigError("debias temperatures must be positive");
}

TrainConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    TrainConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "batch_size") cfg.batch_size = value.get<int64_t>();
        else if (key == "eval_batch") cfg.eval_batch = value.get<int64_t>();
        else if (key == "embed_dim") cfg.embed_dim = value.get<int64_t>();
        else if (key == "layers") cfg.layers = value.get<int64_t>();
        else if (key == "lr") cfg.lr = value.get<double>();
        else if (key == "max_epochs") cfg.max_epochs = value.get<int64_t>();
        else if (key == "patience") cfg.patience = value.get<int64_t>();
        else if (key == "T") cfg.diffusion_steps = value.get<int64_t>();
        else if (key == "K") cfg.knn_k = value.get<int64_t>();
        else if (key == "omega") cfg.omega = value.get<double>();
        else if (key == "tau") cfg.tau = value.get<double>();
        else if (key == "tau_cl") cfg.tau_cl = value.get<double>();
        else if (key == "lambda_dm") cfg.lambda_dm = value.get<double>();
        else if (key == "lambda_mm") cfg.lambda_mm = value.get<double>();
        else if (key == "lambda_cl") cfg.lambda_cl = value.get<double>();
        else if (key == "lambda") cfg.lambda = value.get<double>();
        else if (key == "gamma") cfg.gamma = value.get<double>();
        else if (key == "seed") cfg.seed = value.get<uint64_t>();
        else if (key == "no_mmd") cfg.no_mmd = value.get<bool>();
        else if (key == "no_ff") cfg.no_ff = value.get<bool>();
        else if (key == "no_bd") cfg.no_bd = value.get<bool>();
        else throw ConfigError("unknown config key: " + key);
    }
    cfg.validate();
    return cfg;
}

std::string config_to_json(const TrainConfig& cfg) {
    json j;
    j["batch_size"] = cfg.batch_size;
    j["eval_batch"] = cfg.eval_batch;
    j["embed_dim"] = cfg.embed_dim;
    j["layers"] = cfg.layers;
    j["lr"] = cfg.lr;
    j["max_epochs"] = cfg.max_epochs;
    j["patience"] = cfg.patience;
    j["T"] = cfg.diffusion_steps;
    j["K"] = cfg.knn_k;
    j["omega"] = cfg.omega;
    j["tau"] = cfg.tau;
    j["tau_cl"] = cfg.tau_cl;
    j["lambda_dm"] = cfg.lambda_dm;
    j["lambda_mm"] = cfg.lambda_mm;
    j["lambda_cl"] = cfg.lambda_cl;
    j["lambda"] = cfg.lambda;
    j["gamma"] = cfg.gamma;
    j["seed"] = cfg.seed;
    j["no_mmd"] = cfg.no_mmd;
    j["no_ff"] = cfg.no_ff;
    j["no_bd"] = cfg.no_bd;
    return j.dump(2);
}

ModelData build_model_data(const Dataset& dataset, const std::vector<Interaction>& train,
                           const TrainConfig& cfg) {
    ModelData data;
    data.num_users = dataset.num_users;
    data.num_items = dataset.num_items;
    data.layers = cfg.layers;
    InteractionMatrix im = build_interaction_matrix(train, dataset.num_users, dataset.num_items);
    data.collab_adj = build_collab_graph(im, dataset.num_users, dataset.num_items, cfg.layers).adj;
    UserAggregator agg = build_user_aggregator(im, dataset.num_users, dataset.num_items);
    data.agg = std::move(agg.forward);
    data.agg_t = std::move(agg.transpose);
    for (const auto& [m, feats] : dataset.features) {
        // graph structure is frozen from the raw (pre-diffusion) features
        data.semantic_adj.push_back(build_semantic_graph(feats, m, cfg.knn_k).adj);
        data.raw_features.push_back(feats);
    }
    if (data.raw_features.empty()) throw ConfigError("dataset has no modality features");
    return data;
}

Trainer::Trainer(const Dataset& dataset, const Split& split, TrainConfig cfg, TrainOptions opt)
    : cfg_(std::move(cfg)), opt_(std::move(opt)) {
    cfg_.validate();
    train_ = split.train;
    train_pos_ = build_user_positives(train_, dataset.num_users);
    val_pos_ = build_user_positives(split.validation, dataset.num_users);
    data_ = build_model_data(dataset, train_, cfg_);
    sched_ = build_schedule(cfg_.diffusion_steps);

    std::map<Modality, int64_t> dims;
    {
        size_t idx = 0;
        for (const auto& [m, feats] : dataset.features) {
            dims[m] = feats.cols;
            (void)idx;
        }
    }
    Rng init_rng(mix_seed(cfg_.seed, seed_tag::kInit));
    params_.init(dataset.num_users, dataset.num_items, cfg_.embed_dim, dims, cfg_.diffusion_steps,
                 !cfg_.no_mmd, init_rng);
    cache_.denoised = data_.raw_features;  // until the first epoch recompute
    cache_.omega = 0.0;
}

EpochReport Trainer::run_epoch(int64_t epoch) {
    EpochReport report;
    if (train_.empty()) return report;

    Rng diff_rng(mix_seed(mix_seed(cfg_.seed, seed_tag::kDiffusion), static_cast<uint64_t>(epoch)));
    Rng batch_rng(mix_seed(mix_seed(cfg_.seed, seed_tag::kEpoch), static_cast<uint64_t>(epoch)));

    cache_ = compute_epoch_cache(params_, data_, sched_, cfg_.omega, cfg_.no_mmd, diff_rng);

    std::vector<Interaction> order = train_;
    batch_rng.shuffle(order);

    LossWeights lw;
    lw.lambda_dm = cfg_.lambda_dm;
    lw.lambda_mm = cfg_.lambda_mm;
    lw.lambda_cl = cfg_.lambda_cl;
    lw.tau = cfg_.tau;
    lw.tau_cl = cfg_.tau_cl;
    lw.omega = cfg_.omega;
    lw.no_mmd = cfg_.no_mmd;
    lw.no_ff = cfg_.no_ff;
    lw.literal_eq15 = opt_.literal_eq15;

    const DebiasConfig debias_cfg{cfg_.lambda, cfg_.gamma};
    const int64_t num_items = data_.num_items;
    const int64_t num_users = data_.num_users;
    auto params_list = params_.all();

    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg_.batch_size)) {
        const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg_.batch_size));

        BatchDraws draws;
        draws.triples.reserve(end - begin);
        for (size_t k = begin; k < end; ++k) {
            const Interaction& it = order[k];
            const auto& pos = train_pos_.items[static_cast<size_t>(it.user)];
            if (static_cast<int64_t>(pos.size()) >= num_items) continue;  // cannot sample a negative
            int32_t neg;
            do {
                neg = static_cast<int32_t>(batch_rng.below(static_cast<uint64_t>(num_items)));
            } while (train_pos_.contains(it.user, neg));
            draws.triples.push_back({it.user, it.item, neg, 1.0f});
        }
        if (draws.triples.empty()) continue;

        const bool want_diffusion = !cfg_.no_mmd && (cfg_.lambda_dm != 0.0 || cfg_.lambda_mm != 0.0);
        if (want_diffusion) {
            // distinct item batch via partial Fisher-Yates
            const int64_t b = std::min<int64_t>(opt_.modal_batch, num_items);
            std::vector<int64_t> pool(static_cast<size_t>(num_items));
            for (int64_t i = 0; i < num_items; ++i) pool[static_cast<size_t>(i)] = i;
            for (int64_t i = 0; i < b; ++i) {
                const int64_t j = i + static_cast<int64_t>(diff_rng.below(static_cast<uint64_t>(num_items - i)));
                std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
            }
            draws.item_batch.assign(pool.begin(), pool.begin() + b);
            for (size_t m = 0; m < params_.modalities.size(); ++m) {
                std::vector<int64_t> ts(static_cast<size_t>(b));
                for (auto& t : ts)
                    t = 1 + static_cast<int64_t>(diff_rng.below(static_cast<uint64_t>(sched_.num_steps)));
                draws.t_steps.push_back(std::move(ts));
                MatD eps(b, data_.raw_features[m].cols);
                for (auto& e : eps.v) e = diff_rng.gaussian();
                draws.eps.push_back(std::move(eps));
            }
        }

        TapeF g;
        ForwardT<float> fwd = model_forward(g, params_, data_, cache_, cfg_.no_ff);

        // confidence weights from the current epoch's modality embeddings,
        // gradient-blocked by construction (plain values)
        if (!cfg_.no_bd) {
            std::vector<MatF> user_views, item_views;
            std::vector<const MatF*> user_ptrs, item_ptrs;
            for (size_t m = 0; m < params_.modalities.size(); ++m) {
                MatF users, items;
                if (opt_.bias_on_raw_features) {
                    // projected raw features on the item side; Eq.-13 aggregation
                    // gives the user side (users carry no raw features)
                    items = matmul(data_.raw_features[m], params_.proj[m].value);
                    users = spmm(data_.agg, items);
                } else {
                    const MatF& src = g.val(fwd.modal[m]);
                    users = MatF(num_users, src.cols);
                    items = MatF(num_items, src.cols);
                    std::copy(src.data(), src.data() + num_users * src.cols, users.data());
                    std::copy(src.row(num_users), src.row(num_users) + num_items * src.cols, items.data());
                }
                user_views.push_back(std::move(users));
                item_views.push_back(std::move(items));
            }
            for (size_t m = 0; m < user_views.size(); ++m) {
                user_ptrs.push_back(&user_views[m]);
                item_ptrs.push_back(&item_views[m]);
            }
            fill_confidences(draws.triples, user_ptrs, item_ptrs, debias_cfg);
        }

        MatF cond;
        if (want_diffusion) {
            const MatF& ec = g.val(fwd.e_c);
            cond = MatF(static_cast<int64_t>(draws.item_batch.size()), ec.cols);
            for (size_t r = 0; r < draws.item_batch.size(); ++r)
                std::copy(ec.row(num_users + draws.item_batch[r]),
                          ec.row(num_users + draws.item_batch[r]) + ec.cols,
                          cond.row(static_cast<int64_t>(r)));
        }

        TotalLossT<float> loss = build_total_loss(g, params_, data_, fwd, draws, cond, sched_, lw);

        for (auto* p : params_list) p->zero_grad();
        g.backward(loss.node);
        AdamConfig adam;
        adam.lr = cfg_.lr;
        for (auto* p : params_list) adam_step(*p, adam);

        report.bpr += loss.bpr;
        report.dm += loss.dm;
        report.mm += loss.mm;
        report.cl += loss.cl;
        report.total += loss.total;
        report.batches += 1;
        last_triples_ = draws.triples;
        last_scores_pos_ = loss.score_pos;
        last_scores_neg_ = loss.score_neg;
    }

    if (report.batches > 0) {
        report.bpr /= static_cast<double>(report.batches);
        report.dm /= static_cast<double>(report.batches);
        report.mm /= static_cast<double>(report.batches);
        report.cl /= static_cast<double>(report.batches);
        report.total /= static_cast<double>(report.batches);
    }
    return report;
}

double Trainer::evaluate_validation() {
    bool any_target = false;
    for (const auto& v : val_pos_.items)
        if (!v.empty()) {
            any_target = true;
            break;
        }
    if (!any_target) return 0.0;  // toy splits without a validation set
    MatF embeddings = compute_embeddings(params_, data_, cache_, cfg_.no_ff);
    RankingResult r = rank_and_score(embeddings, data_.num_users, data_.num_items, opt_.eval_k,
                                     train_pos_, val_pos_, cfg_.eval_batch);
    return r.recall;
}

Checkpoint Trainer::fit() {
    Checkpoint best;
    best.config = cfg_;
    best.best_val_recall = -1.0;
    std::vector<std::string> log_rows;
    log_rows.push_back("epoch,L_bpr,L_dm,L_mm,L_cl,val_recall@20,seconds");

    int64_t bad_epochs = 0;
    for (int64_t epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochReport report;
        try {
            report = run_epoch(epoch);
        } catch (const NumericalError& e) {
            std::fprintf(stderr, "[jbm] training aborted at epoch %lld: %s\n",
                         static_cast<long long>(epoch), e.what());
            best.aborted = true;
            break;
        }
        const double val = evaluate_validation();
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        {
            char row[256];
            std::snprintf(row, sizeof(row), "%lld,%.6f,%.6f,%.6f,%.6f,%.6f,%.3f",
                          static_cast<long long>(epoch), report.bpr, report.dm, report.mm, report.cl,
                          val, seconds);
            log_rows.emplace_back(row);
        }
        if (!opt_.quiet)
            std::fprintf(stderr, "[jbm] epoch %lld: L_bpr=%.4f L_dm=%.4f L_mm=%.4f L_cl=%.4f val_r20=%.4f (%.1fs)\n",
                         static_cast<long long>(epoch), report.bpr, report.dm, report.mm, report.cl,
                         val, seconds);
        if (!opt_.epoch_log_path.empty()) {
            std::string text;
            for (const auto& row : log_rows) text += row + "\n";
            write_text_file(opt_.epoch_log_path, text);
        }
        if (val > best.best_val_recall) {
            best.best_val_recall = val;
            best.best_epoch = epoch;
            best.params = params_;
            best.cache = cache_;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs > cfg_.patience) break;
        }
    }
    if (best.best_epoch == 0) {  // nothing completed; keep current state
        best.params = params_;
        best.cache = cache_;
        best.best_val_recall = 0.0;
    }
    best.epoch_log = std::move(log_rows);
    if (!opt_.epoch_log_path.empty()) {
        std::string text;
        for (const auto& row : best.epoch_log) text += row + "\n";
        write_text_file(opt_.epoch_log_path, text);
    }
    if (!opt_.confidence_hist_path.empty())
        write_text_file(opt_.confidence_hist_path, confidence_histogram_csv(last_triples_));
    return best;
}

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt, uint64_t data_fingerprint) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<const Parameter*> tensors;
    auto& params = const_cast<Checkpoint&>(ckpt).params;
    for (auto* p : params.all()) tensors.push_back(p);
    write_checkpoint_tensors(dir + "/checkpoint.jbmc", tensors);

    json j;
    j["config"] = json::parse(config_to_json(ckpt.config));
    j["best_val_recall"] = ckpt.best_val_recall;
    j["best_epoch"] = ckpt.best_epoch;
    j["aborted"] = ckpt.aborted;
    j["data_fingerprint"] = data_fingerprint;
    j["num_users"] = params.num_users;
    j["num_items"] = params.num_items;
    json cache_files = json::array();
    for (size_t m = 0; m < params.modalities.size(); ++m) {
        const std::string name = std::string("denoised_") + modality_name(params.modalities[m]) + ".jbmf";
        write_feature_file(dir + "/" + name, ckpt.cache.denoised[m], params.modalities[m]);
        cache_files.push_back(name);
    }
    j["denoised_cache"] = cache_files;
    j["cache_omega"] = ckpt.cache.omega;
    write_text_file(dir + "/checkpoint.json", j.dump(2));

    std::ostringstream manifest;
    manifest << "epoch\t" << ckpt.best_epoch << "\n"
             << "omega\t" << ckpt.cache.omega << "\n"
             << "T\t" << ckpt.config.diffusion_steps << "\n"
             << "seed\t" << ckpt.config.seed << "\n";
    write_text_file(dir + "/denoised_manifest.txt", manifest.str());

    if (!ckpt.epoch_log.empty()) {
        std::string text;
        for (const auto& row : ckpt.epoch_log) text += row + "\n";
        write_text_file(dir + "/epochs.csv", text);
    }
}

Checkpoint load_checkpoint(const std::string& dir, uint64_t* data_fingerprint_out) {
    json j;
    try {
        j = json::parse(read_text_file(dir + "/checkpoint.json"));
    } catch (const json::exception& e) {
        throw FormatError(dir + "/checkpoint.json: " + e.what());
    }
    Checkpoint ckpt;
    ckpt.config = config_from_json(j.at("config").dump());
    ckpt.best_val_recall = j.at("best_val_recall").get<double>();
    ckpt.best_epoch = j.at("best_epoch").get<int64_t>();
    ckpt.aborted = j.value("aborted", false);
    if (data_fingerprint_out) *data_fingerprint_out = j.at("data_fingerprint").get<uint64_t>();
    const int64_t num_users = j.at("num_users").get<int64_t>();
    const int64_t num_items = j.at("num_items").get<int64_t>();

    std::vector<Parameter> tensors = read_checkpoint_tensors(dir + "/checkpoint.jbmc");
    std::map<std::string, Parameter*> by_name;
    for (auto& t : tensors) by_name[t.name] = &t;

    // reconstruct shapes/modalities from the cache files
    ckpt.cache.omega = j.value("cache_omega", 0.0);
    std::map<Modality, int64_t> dims;
    for (const auto& f : j.at("denoised_cache")) {
        FeatureFile ff = read_feature_file(dir + "/" + f.get<std::string>());
        dims[ff.tag] = ff.matrix.cols;
        ckpt.cache.denoised.push_back(std::move(ff.matrix));
    }
    Rng dummy(0);
    ckpt.params.init(num_users, num_items, ckpt.config.embed_dim, dims,
                     ckpt.config.diffusion_steps, !ckpt.config.no_mmd, dummy);
    for (auto* p : ckpt.params.all()) {
        auto it = by_name.find(p->name);
        if (it == by_name.end()) throw FormatError("checkpoint missing tensor: " + p->name);
        require_shape(it->second->value.rows, it->second->value.cols, p->value.rows, p->value.cols,
                      "checkpoint tensor " + p->name);
        p->value = it->second->value;
    }
    return ckpt;
}

MatF checkpoint_embeddings(Checkpoint& ckpt, const Dataset& dataset,
                           const std::vector<Interaction>& train) {
    ModelData data = build_model_data(dataset, train, ckpt.config);
    return compute_embeddings(ckpt.params, data, ckpt.cache, ckpt.config.no_ff);
}

namespace {

const std::map<std::string, std::vector<double>>& paper_grids() {
    static const std::map<std::string, std::vector<double>> grids = {
        {"T", {5, 10, 15, 20}},
        {"K", {5, 10, 15, 20}},
        {"omega", {0.1, 0.3, 0.5, 0.7, 0.9}},
        {"lambda_dm", {0.0001, 0.0005, 0.001, 0.005, 0.1, 0.5}},
        {"lambda_mm", {0.0001, 0.0005, 0.001, 0.005, 0.1, 0.5}},
        {"lambda_cl", {0.0001, 0.0005, 0.001, 0.005, 0.1, 0.5}},
        {"lambda", {0.1, 0.2, 0.5, 1.0, 2.0, 3.0}},
        {"gamma", {0.1, 0.2, 0.5, 1.0, 2.0, 3.0}},
    };
    return grids;
}

void apply_grid_value(TrainConfig& cfg, const std::string& key, double value) {
    if (key == "T") cfg.diffusion_steps = static_cast<int64_t>(value);
    else if (key == "K") cfg.knn_k = static_cast<int64_t>(value);
    else if (key == "omega") cfg.omega = value;
    else if (key == "lambda_dm") cfg.lambda_dm = value;
    else if (key == "lambda_mm") cfg.lambda_mm = value;
    else if (key == "lambda_cl") cfg.lambda_cl = value;
    else if (key == "lambda") cfg.lambda = value;
    else if (key == "gamma") cfg.gamma = value;
    else throw ConfigError("unknown grid key: " + key);
}

}  // namespace

GridSpec grid_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid grid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("grid must be a JSON object");
    GridSpec spec;
    for (const auto& [key, values] : j.items()) {
        auto it = paper_grids().find(key);
        if (it == paper_grids().end()) throw ConfigError("unknown grid key: " + key);
        if (!values.is_array() || values.empty()) throw ConfigError("grid values must be a nonempty array");
        std::vector<double> vs;
        for (const auto& v : values) {
            const double x = v.get<double>();
            bool allowed = false;
            for (double g : it->second)
                if (std::abs(g - x) < 1e-12) allowed = true;
            if (!allowed)
                throw ConfigError("grid value " + std::to_string(x) + " not in the published grid for " + key);
            vs.push_back(x);
        }
        spec.emplace_back(key, std::move(vs));
    }
    return spec;
}

std::vector<GridRow> grid_search(const Dataset& dataset, const Split& split,
                                 const TrainConfig& base, const GridSpec& grid,
                                 const TrainOptions& opt) {
    std::vector<GridRow> rows;
    std::vector<size_t> cursor(grid.size(), 0);
    const UserPositives test_pos = build_user_positives(split.test, dataset.num_users);
    const UserPositives train_pos = build_user_positives(split.train, dataset.num_users);
    while (true) {
        TrainConfig cfg = base;
        std::ostringstream combo;
        for (size_t i = 0; i < grid.size(); ++i) {
            apply_grid_value(cfg, grid[i].first, grid[i].second[cursor[i]]);
            if (i) combo << " ";
            combo << grid[i].first << "=" << grid[i].second[cursor[i]];
        }
        Trainer trainer(dataset, split, cfg, opt);
        Checkpoint ckpt = trainer.fit();
        MatF embeddings = compute_embeddings(ckpt.params, trainer.data(), ckpt.cache, cfg.no_ff);
        RankingResult test = rank_and_score(embeddings, dataset.num_users, dataset.num_items, 20,
                                            train_pos, test_pos, cfg.eval_batch);
        rows.push_back({combo.str(), ckpt.best_val_recall, test.recall});

        // advance the cartesian cursor
        size_t i = 0;
        for (; i < grid.size(); ++i) {
            if (++cursor[i] < grid[i].second.size()) break;
            cursor[i] = 0;
        }
        if (i == grid.size()) break;
    }
    return rows;
}

std::string grid_csv(const std::vector<GridRow>& rows) {
    std::ostringstream os;
    os << "combo,val_recall@20,test_recall@20\n";
    for (const auto& r : rows) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), ",%.6f,%.6f\n", r.val_recall, r.test_recall);
        os << (r.combo.empty() ? "defaults" : r.combo) << buf;
    }
    return os.str();
}

}  // namespace jbm
