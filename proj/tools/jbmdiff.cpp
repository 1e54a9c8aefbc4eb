// jbmdiff: behavior-conditioned multimodal recommendation toolkit.
// Subcommands: synth, prepare, train, evaluate, noise, grid.
// Exit codes: 0 success, 1 usage, 2 input error, 3 consistency error,
// 4 numerical failure.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "jbm/baselines.hpp"
#include "jbm/errors.hpp"
#include "jbm/io.hpp"
#include "jbm/noiselab.hpp"
#include "jbm/prepared.hpp"
#include "jbm/runtime.hpp"
#include "jbm/synthdata.hpp"
#include "jbm/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

// Every command drops a manifest that is sufficient to replay it.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::string& config_json, uint64_t seed,
                    const std::map<std::string, uint64_t>& fingerprints,
                    const std::vector<std::string>& artifacts) {
    json j;
    j["command"] = command;
    if (!config_json.empty()) j["config"] = json::parse(config_json);
    j["seed"] = seed;
    json fp = json::object();
    for (const auto& [name, hash] : fingerprints) fp[name] = hash;
    j["dataset_fingerprints"] = fp;
    j["timestamp"] = iso_timestamp();
    j["artifacts"] = artifacts;
    jbm::write_text_file(out_dir + "/manifest.json", j.dump(2));
}

std::string join_args(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += " ";
        s += argv[i];
    }
    return s;
}

void require_file(const std::string& path, const std::string& flag) {
    if (!fs::exists(path)) throw jbm::FormatError("file for " + flag + " not found: " + path);
}

jbm::TrainConfig load_config(const std::string& path) {
    if (path.empty()) return jbm::TrainConfig{};
    require_file(path, "--config");
    return jbm::config_from_json(jbm::read_text_file(path));
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (!part.empty()) out.push_back(std::stod(part));
    }
    return out;
}

std::vector<std::string> parse_string_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

int cmd_synth(const std::string& out_dir, jbm::SynthSpec spec, const std::string& command) {
    jbm::write_synthetic_dataset(out_dir, spec);
    write_manifest(out_dir, command, "", spec.seed, {},
                   {"interactions.tsv", "visual.jbmf", "textual.jbmf"});
    std::printf("wrote synthetic dataset (%lld users, %lld items, %lld interactions) to %s\n",
                static_cast<long long>(spec.num_users), static_cast<long long>(spec.num_items),
                static_cast<long long>(spec.num_interactions), out_dir.c_str());
    return 0;
}

int cmd_prepare(const std::string& interactions, const std::string& visual,
                const std::string& textual, const std::string& out_dir, uint64_t seed,
                const std::string& command) {
    require_file(interactions, "--interactions");
    require_file(visual, "--visual");
    require_file(textual, "--textual");

    jbm::PreparedDataset prep;
    prep.seed = seed;
    prep.dataset = jbm::load_interactions(interactions);
    prep.dataset.features[jbm::Modality::Visual] =
        jbm::load_features(visual, jbm::Modality::Visual, prep.dataset.num_items);
    prep.dataset.features[jbm::Modality::Textual] =
        jbm::load_features(textual, jbm::Modality::Textual, prep.dataset.num_items);
    jbm::Rng split_rng(jbm::mix_seed(seed, jbm::seed_tag::kSplit));
    prep.split = jbm::split_dataset(prep.dataset, prep.ratios, split_rng);

    std::map<std::string, uint64_t> fingerprints{
        {"interactions", jbm::file_fingerprint(interactions)},
        {"visual", jbm::file_fingerprint(visual)},
        {"textual", jbm::file_fingerprint(textual)},
    };
    jbm::save_prepared(out_dir, prep, fingerprints);
    write_manifest(out_dir, command, "", seed, fingerprints,
                   {"dataset.json", "train.tsv", "val.tsv", "test.tsv", "split_manifest.txt",
                    "visual.jbmf", "textual.jbmf", "summary.txt"});
    std::printf("%s", jbm::read_text_file(out_dir + "/summary.txt").c_str());
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_dir, const std::vector<std::string>& ablations,
              bool literal_eq15, bool bias_raw, bool quiet, const std::string& command) {
    jbm::TrainConfig cfg = load_config(config_path);
    for (const auto& a : ablations) {
        if (a == "no-mmd") cfg.no_mmd = true;
        else if (a == "no-ff") cfg.no_ff = true;
        else if (a == "no-bd") cfg.no_bd = true;
        else throw jbm::ConfigError("unknown ablation: " + a + " (use no-mmd, no-ff, no-bd)");
    }
    jbm::PreparedDataset prep = jbm::load_prepared(data_dir);

    fs::create_directories(out_dir);
    jbm::TrainOptions opt;
    opt.literal_eq15 = literal_eq15;
    opt.bias_on_raw_features = bias_raw;
    opt.quiet = quiet;
    opt.epoch_log_path = out_dir + "/epochs.csv";
    opt.confidence_hist_path = out_dir + "/confidence_hist.csv";

    jbm::Trainer trainer(prep.dataset, prep.split, cfg, opt);
    jbm::Checkpoint ckpt = trainer.fit();
    const uint64_t fp = jbm::prepared_fingerprint(data_dir);
    jbm::save_checkpoint(out_dir, ckpt, fp);
    write_manifest(out_dir, command, jbm::config_to_json(cfg), cfg.seed, {{"prepared", fp}},
                   {"checkpoint.jbmc", "checkpoint.json", "epochs.csv", "confidence_hist.csv"});
    std::printf("best validation recall@20 = %.6f at epoch %lld%s\n", ckpt.best_val_recall,
                static_cast<long long>(ckpt.best_epoch), ckpt.aborted ? " (aborted)" : "");
    if (ckpt.aborted) throw jbm::NumericalError("training diverged; best checkpoint kept");
    return 0;
}

int cmd_evaluate(const std::string& data_dir, const std::string& ckpt_dir, const std::string& ks,
                 const std::string& out_path, const std::string& per_user_path,
                 const std::string& command) {
    jbm::PreparedDataset prep = jbm::load_prepared(data_dir);
    uint64_t stored_fp = 0;
    jbm::Checkpoint ckpt = jbm::load_checkpoint(ckpt_dir, &stored_fp);
    const uint64_t actual_fp = jbm::prepared_fingerprint(data_dir);
    if (stored_fp != actual_fp)
        throw jbm::ConsistencyError("checkpoint was trained on a different dataset (fingerprint " +
                                    std::to_string(stored_fp) + " vs " + std::to_string(actual_fp) + ")");

    jbm::MatF embeddings = jbm::checkpoint_embeddings(ckpt, prep.dataset, prep.split.train);
    const jbm::UserPositives mask = jbm::build_user_positives(prep.split.train, prep.dataset.num_users);
    const jbm::UserPositives targets = jbm::build_user_positives(prep.split.test, prep.dataset.num_users);

    std::ostringstream csv;
    csv << "metric,K,value,seed\n";
    std::ostringstream per_user;
    for (double kd : parse_double_list(ks)) {
        const int64_t k = static_cast<int64_t>(kd);
        jbm::RankingResult r = jbm::rank_and_score(embeddings, prep.dataset.num_users,
                                                   prep.dataset.num_items, k, mask, targets,
                                                   ckpt.config.eval_batch);
        char row[128];
        std::snprintf(row, sizeof(row), "recall,%lld,%.6f,%llu\nndcg,%lld,%.6f,%llu\n",
                      static_cast<long long>(k), r.recall,
                      static_cast<unsigned long long>(ckpt.config.seed), static_cast<long long>(k),
                      r.ndcg, static_cast<unsigned long long>(ckpt.config.seed));
        csv << row;
        if (!per_user_path.empty() && k == 20) {
            for (size_t i = 0; i < r.users.size(); ++i) {
                json j;
                j["user"] = r.users[i];
                j["topk"] = r.topk[i];
                per_user << j.dump() << "\n";
            }
        }
    }
    std::printf("%s", csv.str().c_str());
    if (!out_path.empty()) {
        jbm::write_text_file(out_path, csv.str());
        const std::string out_dir = fs::path(out_path).parent_path().string();
        if (!out_dir.empty())
            write_manifest(out_dir, command, jbm::config_to_json(ckpt.config), ckpt.config.seed,
                           {{"prepared", actual_fp}}, {fs::path(out_path).filename().string()});
    }
    if (!per_user_path.empty()) jbm::write_text_file(per_user_path, per_user.str());
    return 0;
}

int cmd_noise(const std::string& data_dir, const std::string& kind_name,
              const std::string& modality_name_arg, const std::string& ratios_text,
              const std::string& models_text, const std::string& config_path,
              const std::string& out_dir, const std::string& command) {
    jbm::TrainConfig cfg = load_config(config_path);
    jbm::PreparedDataset prep = jbm::load_prepared(data_dir);

    jbm::CorruptionKind kind;
    if (kind_name == "modality-replace") kind = jbm::CorruptionKind::ModalityReplace;
    else if (kind_name == "feedback-add") kind = jbm::CorruptionKind::FeedbackAdd;
    else if (kind_name == "feedback-remove") kind = jbm::CorruptionKind::FeedbackRemove;
    else throw jbm::ConfigError("unknown corruption kind: " + kind_name);
    const jbm::Modality modality =
        modality_name_arg == "textual" ? jbm::Modality::Textual : jbm::Modality::Visual;

    std::vector<jbm::CorruptionSpec> specs;
    for (double ratio : parse_double_list(ratios_text)) {
        jbm::CorruptionSpec spec{kind, modality, ratio, cfg.seed};
        spec.validate();
        specs.push_back(spec);
    }
    const std::vector<std::string> models = parse_string_list(models_text);
    if (models.empty() || specs.empty()) throw jbm::ConfigError("need at least one model and ratio");

    fs::create_directories(out_dir);
    jbm::TrainOptions opt;
    opt.quiet = true;
    std::string corruption_log;
    auto cells = jbm::run_noise_grid(prep.dataset, prep.split, models, specs, cfg, opt, &corruption_log);
    jbm::write_text_file(out_dir + "/noise_results.csv", jbm::noise_csv(cells));
    jbm::write_text_file(out_dir + "/corruption_log.jsonl", corruption_log);
    write_manifest(out_dir, command, jbm::config_to_json(cfg), cfg.seed,
                   {{"prepared", jbm::prepared_fingerprint(data_dir)}},
                   {"noise_results.csv", "corruption_log.jsonl"});
    std::printf("%s", jbm::noise_csv(cells).c_str());
    return 0;
}

int cmd_grid(const std::string& data_dir, const std::string& grid_path,
             const std::string& config_path, const std::string& out_dir,
             const std::string& command) {
    jbm::TrainConfig cfg = load_config(config_path);
    require_file(grid_path, "--grid");
    jbm::GridSpec grid = jbm::grid_from_json(jbm::read_text_file(grid_path));
    jbm::PreparedDataset prep = jbm::load_prepared(data_dir);

    fs::create_directories(out_dir);
    jbm::TrainOptions opt;
    opt.quiet = true;
    auto rows = jbm::grid_search(prep.dataset, prep.split, cfg, grid, opt);
    jbm::write_text_file(out_dir + "/grid_results.csv", jbm::grid_csv(rows));
    write_manifest(out_dir, command, jbm::config_to_json(cfg), cfg.seed,
                   {{"prepared", jbm::prepared_fingerprint(data_dir)}}, {"grid_results.csv"});
    std::printf("%s", jbm::grid_csv(rows).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    jbm::init_runtime();
    CLI::App app{"JBM-Diff: joint behavior-guided multimodal denoising recommender"};
    app.require_subcommand(1);
    const std::string command = join_args(argc, argv);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark-shaped dataset");
    jbm::SynthSpec synth_spec;
    std::string synth_out;
    synth->add_option("--users", synth_spec.num_users, "user count");
    synth->add_option("--items", synth_spec.num_items, "item count");
    synth->add_option("--interactions", synth_spec.num_interactions, "unique interaction count");
    synth->add_option("--visual-dim", synth_spec.visual_dim, "visual feature dimension");
    synth->add_option("--textual-dim", synth_spec.textual_dim, "textual feature dimension");
    synth->add_option("--visual-noise", synth_spec.visual_noise, "visual noise sd");
    synth->add_option("--textual-noise", synth_spec.textual_noise, "textual noise sd");
    synth->add_option("--click-noise", synth_spec.random_click_rate, "random interaction fraction");
    synth->add_option("--seed", synth_spec.seed, "generator seed");
    synth->add_option("--out", synth_out, "output directory")->required();

    // prepare
    auto* prepare = app.add_subcommand("prepare", "ingest, validate and split a dataset");
    std::string p_inter, p_visual, p_textual, p_out;
    uint64_t p_seed = 42;
    prepare->add_option("--interactions", p_inter, "user_id<TAB>item_id file")->required();
    prepare->add_option("--visual", p_visual, "visual JBMF feature file")->required();
    prepare->add_option("--textual", p_textual, "textual JBMF feature file")->required();
    prepare->add_option("--out", p_out, "output directory")->required();
    prepare->add_option("--seed", p_seed, "split seed");

    // train
    auto* train = app.add_subcommand("train", "train the full model or an ablation");
    std::string t_data, t_config, t_out;
    std::vector<std::string> t_ablate;
    bool t_literal = false, t_bias_raw = false, t_quiet = false;
    train->add_option("--data", t_data, "prepared dataset directory")->required();
    train->add_option("--config", t_config, "JSON config (defaults when omitted)");
    train->add_option("--out", t_out, "output directory")->required();
    train->add_option("--ablate", t_ablate, "no-mmd, no-ff, no-bd (repeatable)");
    train->add_flag("--literal-eq15", t_literal, "raw cross-view dot products (no norm/temperature)");
    train->add_flag("--bias-raw-features", t_bias_raw, "debias on projected raw features");
    train->add_flag("--quiet", t_quiet, "suppress per-epoch stderr lines");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "full-ranking evaluation of a checkpoint");
    std::string e_data, e_ckpt, e_ks = "10,20", e_out, e_per_user;
    evaluate->add_option("--data", e_data, "prepared dataset directory")->required();
    evaluate->add_option("--checkpoint", e_ckpt, "checkpoint directory")->required();
    evaluate->add_option("--k", e_ks, "comma-separated cutoffs");
    evaluate->add_option("--out", e_out, "metrics CSV path");
    evaluate->add_option("--per-user", e_per_user, "per-user JSON-lines dump");

    // noise
    auto* noise = app.add_subcommand("noise", "robustness grid under injected corruption");
    std::string n_data, n_kind, n_modality = "visual", n_ratios, n_models, n_config, n_out;
    noise->add_option("--data", n_data, "prepared dataset directory")->required();
    noise->add_option("--kind", n_kind, "modality-replace | feedback-add | feedback-remove")->required();
    noise->add_option("--modality", n_modality, "visual | textual (modality-replace only)");
    noise->add_option("--ratios", n_ratios, "comma-separated ratios, each <= 0.2")->required();
    noise->add_option("--models", n_models, "subset of jbm-diff,lightgcn,bpr-mf")->required();
    noise->add_option("--config", n_config, "JSON config");
    noise->add_option("--out", n_out, "output directory")->required();

    // grid
    auto* grid = app.add_subcommand("grid", "hyperparameter grid search");
    std::string g_data, g_grid, g_config, g_out;
    grid->add_option("--data", g_data, "prepared dataset directory")->required();
    grid->add_option("--grid", g_grid, "JSON grid spec (subset of the published grids)")->required();
    grid->add_option("--config", g_config, "base JSON config");
    grid->add_option("--out", g_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_out, synth_spec, command);
        if (prepare->parsed()) return cmd_prepare(p_inter, p_visual, p_textual, p_out, p_seed, command);
        if (train->parsed())
            return cmd_train(t_data, t_config, t_out, t_ablate, t_literal, t_bias_raw, t_quiet, command);
        if (evaluate->parsed()) return cmd_evaluate(e_data, e_ckpt, e_ks, e_out, e_per_user, command);
        if (noise->parsed())
            return cmd_noise(n_data, n_kind, n_modality, n_ratios, n_models, n_config, n_out, command);
        if (grid->parsed()) return cmd_grid(g_data, g_grid, g_config, g_out, command);
    } catch (const jbm::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const jbm::ConsistencyError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const jbm::NumericalError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const jbm::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
