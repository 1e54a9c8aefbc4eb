#include "jbm/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "jbm/errors.hpp"

namespace jbm {

Dataset load_interactions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open: " + path);
    Dataset ds;
    std::unordered_map<std::string, int32_t> user_index, item_index;
    std::vector<std::pair<int32_t, int32_t>> pairs;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw FormatError(path + ":" + std::to_string(line_no) + ": expected user_id<TAB>item_id");
        const size_t tab2 = line.find('\t', tab + 1);
        const std::string user_id = line.substr(0, tab);
        const std::string item_id =
            tab2 == std::string::npos ? line.substr(tab + 1) : line.substr(tab + 1, tab2 - tab - 1);
        if (item_id.empty())
            throw FormatError(path + ":" + std::to_string(line_no) + ": empty item id");
        auto [uit, unew] = user_index.try_emplace(user_id, static_cast<int32_t>(ds.user_ids.size()));
        if (unew) ds.user_ids.push_back(user_id);
        auto [iit, inew] = item_index.try_emplace(item_id, static_cast<int32_t>(ds.item_ids.size()));
        if (inew) ds.item_ids.push_back(item_id);
        pairs.emplace_back(uit->second, iit->second);
    }
    if (pairs.empty()) throw FormatError(path + ": no interactions");
    // collapse duplicates; O is binary
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    ds.num_users = static_cast<int64_t>(ds.user_ids.size());
    ds.num_items = static_cast<int64_t>(ds.item_ids.size());
    ds.interactions.reserve(pairs.size());
    for (auto [u, i] : pairs) ds.interactions.push_back({u, i});
    return ds;
}

MatF load_features(const std::string& path, Modality expected_tag, int64_t expected_rows) {
    FeatureFile f = read_feature_file(path);
    if (f.tag != expected_tag)
        throw FormatError(path + ": modality tag is " + modality_name(f.tag) + ", expected " +
                          modality_name(expected_tag));
    if (f.matrix.rows != expected_rows)
        throw FormatError(path + ": expected " + std::to_string(expected_rows) + " rows, got " +
                          std::to_string(f.matrix.rows));
    if (f.matrix.cols < 1) throw FormatError(path + ": feature dimension must be >= 1");
    if (!f.matrix.all_finite()) throw FormatError(path + ": non-finite feature values");
    return std::move(f.matrix);
}

Split split_dataset(const Dataset& ds, const SplitRatios& ratios, Rng& rng) {
    const double sum = ratios.train + ratios.validation + ratios.test;
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    std::vector<std::vector<int32_t>> by_user(static_cast<size_t>(ds.num_users));
    for (const auto& it : ds.interactions) by_user[static_cast<size_t>(it.user)].push_back(it.item);

    Split split;
    for (int32_t u = 0; u < ds.num_users; ++u) {
        auto& items = by_user[static_cast<size_t>(u)];
        const int64_t n = static_cast<int64_t>(items.size());
        if (n < 3) {
            for (int32_t i : items) split.train.push_back({u, i});
            continue;
        }
        rng.shuffle(items);
        const int64_t n_val = static_cast<int64_t>(ratios.validation * static_cast<double>(n));
        const int64_t n_test = static_cast<int64_t>(ratios.test * static_cast<double>(n));
        const int64_t n_train = n - n_val - n_test;
        for (int64_t k = 0; k < n; ++k) {
            const Interaction it{u, items[static_cast<size_t>(k)]};
            if (k < n_train) split.train.push_back(it);
            else if (k < n_train + n_val) split.validation.push_back(it);
            else split.test.push_back(it);
        }
    }
    return split;
}

InteractionMatrix build_interaction_matrix(const std::vector<Interaction>& train, int64_t num_users,
                                           int64_t num_items) {
    InteractionMatrix out;
    out.user_degree.assign(static_cast<size_t>(num_users), 0);
    out.item_degree.assign(static_cast<size_t>(num_items), 0);
    std::vector<std::tuple<int32_t, int32_t, float>> trips;
    trips.reserve(train.size());
    for (const auto& it : train) trips.emplace_back(it.user, it.item, 1.0f);
    out.matrix = csr_from_triplets<float>(num_users, num_items, std::move(trips));
    // duplicates would have summed; clamp back to binary
    for (auto& v : out.matrix.values) v = 1.0f;
    // degrees count distinct pairs
    for (int64_t u = 0; u < num_users; ++u) {
        for (int64_t k = out.matrix.indptr[static_cast<size_t>(u)]; k < out.matrix.indptr[static_cast<size_t>(u) + 1]; ++k) {
            out.user_degree[static_cast<size_t>(u)]++;
            out.item_degree[static_cast<size_t>(out.matrix.indices[static_cast<size_t>(k)])]++;
        }
    }
    return out;
}

UserPositives build_user_positives(const std::vector<Interaction>& inter, int64_t num_users) {
    UserPositives pos;
    pos.items.resize(static_cast<size_t>(num_users));
    for (const auto& it : inter) pos.items[static_cast<size_t>(it.user)].push_back(it.item);
    for (auto& v : pos.items) std::sort(v.begin(), v.end());
    return pos;
}

std::vector<WeightedTriple> sample_triples(const std::vector<Interaction>& train,
                                           const UserPositives& train_pos, int64_t num_items,
                                           int64_t batch_size, Rng& rng) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (train.empty()) return {};
    std::vector<WeightedTriple> out;
    out.reserve(static_cast<size_t>(batch_size));
    bool warned = false;
    while (static_cast<int64_t>(out.size()) < batch_size) {
        const auto& it = train[static_cast<size_t>(rng.below(train.size()))];
        const auto& pos = train_pos.items[static_cast<size_t>(it.user)];
        if (static_cast<int64_t>(pos.size()) >= num_items) {
            if (!warned) {
                std::fprintf(stderr, "[jbm] warning: user %d interacts with every item; skipping\n", it.user);
                warned = true;
            }
            continue;
        }
        int32_t neg;
        do {
            neg = static_cast<int32_t>(rng.below(static_cast<uint64_t>(num_items)));
        } while (train_pos.contains(it.user, neg));
        out.push_back({it.user, it.item, neg, 1.0f});
    }
    return out;
}

std::string format_split_manifest(uint64_t seed, const SplitRatios& ratios, const Split& split) {
    std::ostringstream os;
    os << "seed\t" << seed << "\n";
    os << "ratios\t" << ratios.train << "\t" << ratios.validation << "\t" << ratios.test << "\n";
    os << "train\t" << split.train.size() << "\n";
    os << "validation\t" << split.validation.size() << "\n";
    os << "test\t" << split.test.size() << "\n";
    return os.str();
}

}  // namespace jbm
