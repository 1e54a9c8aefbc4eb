#pragma once

#include <vector>

#include "jbm/data.hpp"
#include "jbm/mat.hpp"
#include "jbm/tape.hpp"

namespace jbm {

// Per-pair preference gaps across modalities plus their first two moments.
// Gaps live in (-1, 1) (difference of two sigmoids); the variance is the
// population variance over modalities (zero when |M| = 1).
struct ModalityBias {
    std::vector<double> gaps;  // R^m per modality, fixed order (visual, textual)
    double mean = 0.0;         // mu_R
    double variance = 0.0;     // eps_R
};

struct DebiasConfig {
    double lambda = 1.0;  // weight of preference consistency, > 0
    double gamma = 1.0;   // weight of modal conflict, > 0
};

// R^m = sigmoid(<e_u^m, e_i+^m>) - sigmoid(<e_u^m, e_i-^m>). Computed from
// plain value matrices: confidences are data, not a gradient path.
// modal_user[m] is |U| x d, modal_item[m] is |I| x d, matching order.
ModalityBias modality_bias(int32_t user, int32_t item_pos, int32_t item_neg,
                           const std::vector<const MatF*>& modal_user,
                           const std::vector<const MatF*>& modal_item);

// w = sigmoid(lambda * mu_R) * exp(-gamma * eps_R), always in (0, 1).
double confidence(const ModalityBias& bias, const DebiasConfig& cfg);

// Fills triple confidences in place from current modality embeddings.
void fill_confidences(std::vector<WeightedTriple>& triples,
                      const std::vector<const MatF*>& modal_user,
                      const std::vector<const MatF*>& modal_item, const DebiasConfig& cfg);

// Confidence-weighted BPR, averaged over the batch:
//   mean_k w_k * softplus(-(s+_k - s-_k))
// Weights enter as constants (no gradient flows through w).
template <typename S>
typename Tape<S>::Id weighted_bpr(Tape<S>& g, typename Tape<S>::Id score_pos,
                                  typename Tape<S>::Id score_neg, const std::vector<float>& w) {
    if (g.val(score_pos).rows != static_cast<int64_t>(w.size()))
        throw DimensionError("weighted_bpr: one weight per triple required");
    Mat<S> wm(static_cast<int64_t>(w.size()), 1);
    for (size_t i = 0; i < w.size(); ++i) wm.v[i] = static_cast<S>(w[i]);
    auto margin = g.sub(score_pos, score_neg);
    auto loss = g.softplus(g.scale(margin, S(-1)));
    return g.mean_all(g.hadamard(loss, g.constant(std::move(wm))));
}

// Reference plain BPR on raw score values, accumulated in double. Used by
// the reduction-identity checks; independent of the tape path.
double plain_bpr_loss(const std::vector<float>& score_pos, const std::vector<float>& score_neg);

// Histogram of confidences over (0, 1] as CSV rows `bucket_upper,count`.
std::string confidence_histogram_csv(const std::vector<WeightedTriple>& triples, int buckets = 20);

}  // namespace jbm
