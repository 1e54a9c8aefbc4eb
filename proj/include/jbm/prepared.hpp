#pragma once

#include <string>

#include "jbm/data.hpp"

namespace jbm {

// On-disk layout of a prepared dataset directory (output of `prepare`):
//   dataset.json      counts, density, seed, ratios, input fingerprints
//   train.tsv / val.tsv / test.tsv    index pairs
//   user_ids.txt / item_ids.txt       index -> original id
//   visual.jbmf / textual.jbmf        validated feature copies
//   split_manifest.txt                seed, ratios, per-split counts
//   summary.txt                       human-readable shape line
struct PreparedDataset {
    Dataset dataset;
    Split split;
    uint64_t seed = 0;
    SplitRatios ratios;
};

void save_prepared(const std::string& dir, const PreparedDataset& prep,
                   const std::map<std::string, uint64_t>& input_fingerprints);

PreparedDataset load_prepared(const std::string& dir);

// Combined fingerprint of the prepared artifacts; stored in checkpoints and
// rechecked before evaluation.
uint64_t prepared_fingerprint(const std::string& dir);

}  // namespace jbm
