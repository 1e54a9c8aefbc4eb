#include "jbm/debias.hpp"

#include <cmath>
#include <sstream>

#include "jbm/errors.hpp"
#include "jbm/tape.hpp"

namespace jbm {

namespace {

double row_dot(const MatF& a, int64_t ra, const MatF& b, int64_t rb) {
    double s = 0;
    const float* x = a.row(ra);
    const float* y = b.row(rb);
    for (int64_t j = 0; j < a.cols; ++j) s += static_cast<double>(x[j]) * static_cast<double>(y[j]);
    return s;
}

}  // namespace

ModalityBias modality_bias(int32_t user, int32_t item_pos, int32_t item_neg,
                           const std::vector<const MatF*>& modal_user,
                           const std::vector<const MatF*>& modal_item) {
    if (modal_user.empty() || modal_user.size() != modal_item.size())
        throw DimensionError("modality_bias: user/item embedding lists must align");
    ModalityBias bias;
    bias.gaps.reserve(modal_user.size());
    for (size_t m = 0; m < modal_user.size(); ++m) {
        const double pos = stable_sigmoid(row_dot(*modal_user[m], user, *modal_item[m], item_pos));
        const double neg = stable_sigmoid(row_dot(*modal_user[m], user, *modal_item[m], item_neg));
        bias.gaps.push_back(pos - neg);
    }
    double sum = 0;
    for (double r : bias.gaps) sum += r;
    bias.mean = sum / static_cast<double>(bias.gaps.size());
    double var = 0;
    for (double r : bias.gaps) var += (r - bias.mean) * (r - bias.mean);
    bias.variance = var / static_cast<double>(bias.gaps.size());
    return bias;
}

double confidence(const ModalityBias& bias, const DebiasConfig& cfg) {
    if (!(cfg.lambda > 0.0) || !(cfg.gamma > 0.0))
        throw ConfigError("debias temperatures must be positive");
    return stable_sigmoid(cfg.lambda * bias.mean) * std::exp(-cfg.gamma * bias.variance);
}

void fill_confidences(std::vector<WeightedTriple>& triples,
                      const std::vector<const MatF*>& modal_user,
                      const std::vector<const MatF*>& modal_item, const DebiasConfig& cfg) {
    for (auto& t : triples) {
        const ModalityBias bias = modality_bias(t.user, t.item_pos, t.item_neg, modal_user, modal_item);
        t.w = static_cast<float>(confidence(bias, cfg));
    }
}

double plain_bpr_loss(const std::vector<float>& score_pos, const std::vector<float>& score_neg) {
    if (score_pos.size() != score_neg.size()) throw DimensionError("plain_bpr_loss: size mismatch");
    double sum = 0;
    for (size_t k = 0; k < score_pos.size(); ++k) {
        const double margin = static_cast<double>(score_pos[k]) - static_cast<double>(score_neg[k]);
        sum += stable_softplus(-margin);  // -log sigmoid(margin)
    }
    return score_pos.empty() ? 0.0 : sum / static_cast<double>(score_pos.size());
}

std::string confidence_histogram_csv(const std::vector<WeightedTriple>& triples, int buckets) {
    std::vector<int64_t> counts(static_cast<size_t>(buckets), 0);
    for (const auto& t : triples) {
        int b = static_cast<int>(static_cast<double>(t.w) * buckets);
        if (b >= buckets) b = buckets - 1;
        if (b < 0) b = 0;
        counts[static_cast<size_t>(b)]++;
    }
    std::ostringstream os;
    os << "bucket_upper,count\n";
    for (int b = 0; b < buckets; ++b)
        os << (static_cast<double>(b + 1) / buckets) << "," << counts[static_cast<size_t>(b)] << "\n";
    return os.str();
}

}  // namespace jbm
