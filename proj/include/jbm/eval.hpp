#pragma once

#include <cstdint>
#include <vector>

#include "jbm/data.hpp"
#include "jbm/mat.hpp"

namespace jbm {

// scores[r][i] = <E[user_r], E[|U| + i]> for every item i; users are
// processed in batches of eval_batch rows by the ranking driver.
MatF score_users(const MatF& embeddings, const std::vector<int32_t>& users, int64_t num_users,
                 int64_t num_items);

// Top-K lists for the users that have at least one target interaction.
// Masked positives (the user's training items) never appear; ties break
// toward the smaller item index; list length is min(K, unmasked items).
struct RankingResult {
    std::vector<int32_t> users;
    std::vector<std::vector<int32_t>> topk;
    double recall = 0.0;
    double ndcg = 0.0;
};

RankingResult rank_and_score(const MatF& embeddings, int64_t num_users, int64_t num_items,
                             int64_t k, const UserPositives& mask, const UserPositives& targets,
                             int64_t eval_batch = 1024);

// Recall@K = mean_u |topk_u ∩ targets_u| / |targets_u| over users with
// targets. Throws DomainError when no user has a target.
double recall_at_k(const std::vector<int32_t>& users, const std::vector<std::vector<int32_t>>& topk,
                   const UserPositives& targets);

// Binary-relevance NDCG@K, log base 2, ranks starting at 1.
double ndcg_at_k(const std::vector<int32_t>& users, const std::vector<std::vector<int32_t>>& topk,
                 const UserPositives& targets, int64_t k);

}  // namespace jbm
