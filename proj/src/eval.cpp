#include "jbm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "jbm/errors.hpp"

namespace jbm {

MatF score_users(const MatF& embeddings, const std::vector<int32_t>& users, int64_t num_users,
                 int64_t num_items) {
    const int64_t d = embeddings.cols;
    if (embeddings.rows != num_users + num_items)
        throw DimensionError("score_users: embedding table must have |U|+|I| rows");
    MatF user_rows(static_cast<int64_t>(users.size()), d);
    for (size_t r = 0; r < users.size(); ++r)
        std::copy(embeddings.row(users[r]), embeddings.row(users[r]) + d,
                  user_rows.row(static_cast<int64_t>(r)));
    MatF item_rows(num_items, d);
    std::copy(embeddings.row(num_users), embeddings.row(num_users) + num_items * d, item_rows.data());
    return matmul(user_rows, item_rows, false, true);
}

RankingResult rank_and_score(const MatF& embeddings, int64_t num_users, int64_t num_items,
                             int64_t k, const UserPositives& mask, const UserPositives& targets,
                             int64_t eval_batch) {
    RankingResult out;
    std::vector<int32_t> eval_users;
    for (int32_t u = 0; u < num_users; ++u)
        if (!targets.items[static_cast<size_t>(u)].empty()) eval_users.push_back(u);
    if (eval_users.empty()) throw DomainError("no users with target interactions to evaluate");

    std::vector<int32_t> order(static_cast<size_t>(num_items));
    for (size_t b = 0; b < eval_users.size(); b += static_cast<size_t>(eval_batch)) {
        const size_t e = std::min(eval_users.size(), b + static_cast<size_t>(eval_batch));
        std::vector<int32_t> batch(eval_users.begin() + static_cast<int64_t>(b),
                                   eval_users.begin() + static_cast<int64_t>(e));
        MatF scores = score_users(embeddings, batch, num_users, num_items);
        for (size_t r = 0; r < batch.size(); ++r) {
            float* s = scores.row(static_cast<int64_t>(r));
            const auto& masked = mask.items[static_cast<size_t>(batch[r])];
            for (int32_t i : masked) s[i] = -std::numeric_limits<float>::infinity();
            const int64_t take = std::min<int64_t>(k, num_items - static_cast<int64_t>(masked.size()));
            std::iota(order.begin(), order.end(), 0);
            const auto better = [s](int32_t a, int32_t c) {
                if (s[a] != s[c]) return s[a] > s[c];
                return a < c;
            };
            std::partial_sort(order.begin(), order.begin() + std::max<int64_t>(take, 0), order.end(), better);
            out.users.push_back(batch[r]);
            out.topk.emplace_back(order.begin(), order.begin() + std::max<int64_t>(take, 0));
        }
    }
    out.recall = recall_at_k(out.users, out.topk, targets);
    out.ndcg = ndcg_at_k(out.users, out.topk, targets, k);
    return out;
}

double recall_at_k(const std::vector<int32_t>& users, const std::vector<std::vector<int32_t>>& topk,
                   const UserPositives& targets) {
    double sum = 0;
    int64_t counted = 0;
    for (size_t r = 0; r < users.size(); ++r) {
        const auto& tgt = targets.items[static_cast<size_t>(users[r])];
        if (tgt.empty()) continue;
        int64_t hits = 0;
        for (int32_t i : topk[r])
            if (std::binary_search(tgt.begin(), tgt.end(), i)) ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(tgt.size());
        ++counted;
    }
    if (counted == 0) throw DomainError("recall_at_k: no users with target interactions");
    return sum / static_cast<double>(counted);
}

double ndcg_at_k(const std::vector<int32_t>& users, const std::vector<std::vector<int32_t>>& topk,
                 const UserPositives& targets, int64_t k) {
    double sum = 0;
    int64_t counted = 0;
    for (size_t r = 0; r < users.size(); ++r) {
        const auto& tgt = targets.items[static_cast<size_t>(users[r])];
        if (tgt.empty()) continue;
        double dcg = 0;
        for (size_t rank = 0; rank < topk[r].size(); ++rank)
            if (std::binary_search(tgt.begin(), tgt.end(), topk[r][rank]))
                dcg += 1.0 / std::log2(static_cast<double>(rank) + 2.0);
        const int64_t ideal = std::min<int64_t>(static_cast<int64_t>(tgt.size()), k);
        double idcg = 0;
        for (int64_t rank = 0; rank < ideal; ++rank) idcg += 1.0 / std::log2(static_cast<double>(rank) + 2.0);
        sum += dcg / idcg;
        ++counted;
    }
    if (counted == 0) throw DomainError("ndcg_at_k: no users with target interactions");
    return sum / static_cast<double>(counted);
}

}  // namespace jbm
