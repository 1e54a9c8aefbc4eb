#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "jbm/io.hpp"
#include "jbm/rng.hpp"
#include "jbm/sparse.hpp"

namespace jbm {

struct Interaction {
    int32_t user;
    int32_t item;
    bool operator==(const Interaction& o) const { return user == o.user && item == o.item; }
    bool operator<(const Interaction& o) const {
        return user != o.user ? user < o.user : item < o.item;
    }
};

// Implicit-feedback dataset: binary interactions plus per-modality item
// feature matrices. Indices are contiguous, assigned in first-appearance
// order of the input file, so index maps are stable across runs.
struct Dataset {
    int64_t num_users = 0;
    int64_t num_items = 0;
    std::vector<Interaction> interactions;  // deduplicated
    std::vector<std::string> user_ids;      // index -> original id
    std::vector<std::string> item_ids;
    std::map<Modality, MatF> features;

    double density() const {
        if (num_users == 0 || num_items == 0) return 0.0;
        return static_cast<double>(interactions.size()) /
               (static_cast<double>(num_users) * static_cast<double>(num_items));
    }
};

struct Split {
    std::vector<Interaction> train, validation, test;
};

struct WeightedTriple {
    int32_t user;
    int32_t item_pos;
    int32_t item_neg;
    float w = 1.0f;  // confidence; filled by the debias stage, 1 until then
};

// Parses `user_id<TAB>item_id[<TAB>ignored...]` lines. Duplicate pairs
// collapse to one. Throws FormatError naming the offending line, or on an
// empty interaction set.
Dataset load_interactions(const std::string& path);

// Reads a JBMF feature file and validates row count and modality tag.
MatF load_features(const std::string& path, Modality expected_tag, int64_t expected_rows);

struct SplitRatios {
    double train = 0.8, validation = 0.1, test = 0.1;
};

// Per-user random partition. Users with fewer than 3 interactions keep
// everything in train; otherwise floor(ratio*n) go to validation and test.
Split split_dataset(const Dataset& ds, const SplitRatios& ratios, Rng& rng);

struct InteractionMatrix {
    CsrF matrix;                       // binary |U| x |I|
    std::vector<int64_t> user_degree;  // |N_u|
    std::vector<int64_t> item_degree;  // |N_i|
};

InteractionMatrix build_interaction_matrix(const std::vector<Interaction>& train, int64_t num_users,
                                           int64_t num_items);

// Per-user positive sets with O(log) membership; shared by the sampler and
// the evaluation mask.
struct UserPositives {
    std::vector<std::vector<int32_t>> items;  // sorted per user

    bool contains(int32_t user, int32_t item) const {
        const auto& v = items[static_cast<size_t>(user)];
        return std::binary_search(v.begin(), v.end(), item);
    }
};

UserPositives build_user_positives(const std::vector<Interaction>& inter, int64_t num_users);

// BPR sampling: (u, i+) uniform over train interactions, i- uniform over
// items the user has not interacted with in train (rejection-resampled).
// Users interacting with every item are skipped with a warning.
std::vector<WeightedTriple> sample_triples(const std::vector<Interaction>& train,
                                           const UserPositives& train_pos, int64_t num_items,
                                           int64_t batch_size, Rng& rng);

// Split manifest: deterministic text block (seed, ratios, counts).
std::string format_split_manifest(uint64_t seed, const SplitRatios& ratios, const Split& split);

}  // namespace jbm
