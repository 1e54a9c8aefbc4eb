#include "jbm/prepared.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "jbm/errors.hpp"
#include "jbm/io.hpp"

namespace jbm {

using nlohmann::json;

namespace {

void write_pairs(const std::string& path, const std::vector<Interaction>& pairs) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path);
    for (const auto& it : pairs) out << it.user << "\t" << it.item << "\n";
    if (!out) throw FormatError("write failed: " + path);
}

std::vector<Interaction> read_pairs(const std::string& path, int64_t num_users, int64_t num_items) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open: " + path);
    std::vector<Interaction> out;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream is(line);
        int64_t u, i;
        if (!(is >> u >> i) || u < 0 || u >= num_users || i < 0 || i >= num_items)
            throw FormatError(path + ":" + std::to_string(line_no) + ": bad index pair");
        out.push_back({static_cast<int32_t>(u), static_cast<int32_t>(i)});
    }
    return out;
}

void write_ids(const std::string& path, const std::vector<std::string>& ids) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for write: " + path);
    for (const auto& id : ids) out << id << "\n";
    if (!out) throw FormatError("write failed: " + path);
}

std::vector<std::string> read_ids(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open: " + path);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

}  // namespace

void save_prepared(const std::string& dir, const PreparedDataset& prep,
                   const std::map<std::string, uint64_t>& input_fingerprints) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const Dataset& ds = prep.dataset;

    write_pairs(dir + "/train.tsv", prep.split.train);
    write_pairs(dir + "/val.tsv", prep.split.validation);
    write_pairs(dir + "/test.tsv", prep.split.test);
    write_ids(dir + "/user_ids.txt", ds.user_ids);
    write_ids(dir + "/item_ids.txt", ds.item_ids);
    for (const auto& [m, feats] : ds.features)
        write_feature_file(dir + "/" + modality_name(m) + ".jbmf", feats, m);

    json j;
    j["num_users"] = ds.num_users;
    j["num_items"] = ds.num_items;
    j["num_interactions"] = ds.interactions.size();
    j["density"] = ds.density();
    j["seed"] = prep.seed;
    j["ratios"] = {prep.ratios.train, prep.ratios.validation, prep.ratios.test};
    json fp = json::object();
    for (const auto& [name, hash] : input_fingerprints) fp[name] = hash;
    j["input_fingerprints"] = fp;
    json mods = json::array();
    for (const auto& [m, feats] : ds.features) {
        mods.push_back({{"modality", modality_name(m)}, {"dim", feats.cols}});
    }
    j["modalities"] = mods;
    write_text_file(dir + "/dataset.json", j.dump(2));

    write_text_file(dir + "/split_manifest.txt", format_split_manifest(prep.seed, prep.ratios, prep.split));

    char density_str[32];
    std::snprintf(density_str, sizeof(density_str), "%.3f%%", ds.density() * 100.0);
    std::ostringstream summary;
    summary << "users\t" << ds.num_users << "\n"
            << "items\t" << ds.num_items << "\n"
            << "interactions\t" << ds.interactions.size() << "\n"
            << "density\t" << density_str << "\n";
    write_text_file(dir + "/summary.txt", summary.str());
}

PreparedDataset load_prepared(const std::string& dir) {
    json j;
    try {
        j = json::parse(read_text_file(dir + "/dataset.json"));
    } catch (const json::exception& e) {
        throw FormatError(dir + "/dataset.json: " + e.what());
    }
    PreparedDataset prep;
    Dataset& ds = prep.dataset;
    ds.num_users = j.at("num_users").get<int64_t>();
    ds.num_items = j.at("num_items").get<int64_t>();
    prep.seed = j.at("seed").get<uint64_t>();
    const auto ratios = j.at("ratios");
    prep.ratios = {ratios.at(0).get<double>(), ratios.at(1).get<double>(), ratios.at(2).get<double>()};
    ds.user_ids = read_ids(dir + "/user_ids.txt");
    ds.item_ids = read_ids(dir + "/item_ids.txt");
    if (static_cast<int64_t>(ds.user_ids.size()) != ds.num_users ||
        static_cast<int64_t>(ds.item_ids.size()) != ds.num_items)
        throw FormatError(dir + ": id maps do not match recorded counts");
    prep.split.train = read_pairs(dir + "/train.tsv", ds.num_users, ds.num_items);
    prep.split.validation = read_pairs(dir + "/val.tsv", ds.num_users, ds.num_items);
    prep.split.test = read_pairs(dir + "/test.tsv", ds.num_users, ds.num_items);
    ds.interactions = prep.split.train;
    ds.interactions.insert(ds.interactions.end(), prep.split.validation.begin(), prep.split.validation.end());
    ds.interactions.insert(ds.interactions.end(), prep.split.test.begin(), prep.split.test.end());
    std::sort(ds.interactions.begin(), ds.interactions.end());
    for (const auto& mod : j.at("modalities")) {
        const std::string name = mod.at("modality").get<std::string>();
        const Modality m = name == "visual" ? Modality::Visual : Modality::Textual;
        ds.features[m] = load_features(dir + "/" + name + ".jbmf", m, ds.num_items);
    }
    return prep;
}

uint64_t prepared_fingerprint(const std::string& dir) {
    uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (const char* name : {"train.tsv", "val.tsv", "test.tsv"})
        h = mix_seed(h, file_fingerprint(dir + "/" + name));
    namespace fs = std::filesystem;
    for (const char* name : {"visual.jbmf", "textual.jbmf"})
        if (fs::exists(dir + "/" + std::string(name))) h = mix_seed(h, file_fingerprint(dir + "/" + name));
    return h;
}

}  // namespace jbm
