#include "jbm/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "jbm/errors.hpp"
#include "jbm/io.hpp"
#include "jbm/mat.hpp"
#include "jbm/rng.hpp"

namespace jbm {

namespace {

// Noisy linear view of the item latents: Z (|I| x k) times a mixing matrix
// with sd 1/sqrt(k) gives unit signal variance per output dim.
MatF make_features(const MatF& latents, int64_t out_dim, double noise_sd, Rng& rng) {
    const int64_t k = latents.cols;
    MatF mix(k, out_dim);
    const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(k)));
    for (auto& v : mix.v) v = static_cast<float>(rng.gaussian()) * scale;
    MatF out = matmul(latents, mix);
    for (auto& v : out.v) v += static_cast<float>(noise_sd * rng.gaussian());
    return out;
}

}  // namespace

void write_synthetic_dataset(const std::string& dir, const SynthSpec& spec) {
    const int64_t U = spec.num_users, I = spec.num_items, E = spec.num_interactions;
    if (U < 1 || I < 2 || E < U || E < I)
        throw ConfigError("synthetic shape must satisfy |U|>=1, |I|>=2, E >= max(|U|, |I|)");
    if (E > U * I) throw ConfigError("more interactions than (user, item) slots");
    if (E > U * std::min<int64_t>(I - 1, 200))
        throw ConfigError("interaction count exceeds the per-user capacity cap");
    Rng rng(spec.seed);

    MatF user_latents(U, spec.latent_dim), item_latents(I, spec.latent_dim);
    for (auto& v : user_latents.v) v = static_cast<float>(rng.gaussian());
    for (auto& v : item_latents.v) v = static_cast<float>(rng.gaussian());
    std::vector<float> popularity(static_cast<size_t>(I));
    for (auto& v : popularity) v = static_cast<float>(0.8 * rng.gaussian());

    // Per-user capacities: lognormal-ish, >= 1, fixed total.
    const int64_t cap_max = std::min<int64_t>(I - 1, 200);
    std::vector<int64_t> capacity(static_cast<size_t>(U));
    double weight_sum = 0;
    std::vector<double> weights(static_cast<size_t>(U));
    for (int64_t u = 0; u < U; ++u) {
        weights[static_cast<size_t>(u)] = std::exp(0.9 * rng.gaussian());
        weight_sum += weights[static_cast<size_t>(u)];
    }
    int64_t assigned = 0;
    for (int64_t u = 0; u < U; ++u) {
        int64_t c = static_cast<int64_t>(std::llround(static_cast<double>(E) * weights[static_cast<size_t>(u)] / weight_sum));
        c = std::clamp<int64_t>(c, 1, cap_max);
        capacity[static_cast<size_t>(u)] = c;
        assigned += c;
    }
    // fix the total exactly
    int64_t guard = 0;
    while (assigned != E) {
        const int64_t u = static_cast<int64_t>(rng.below(static_cast<uint64_t>(U)));
        if (assigned < E && capacity[static_cast<size_t>(u)] < cap_max) {
            capacity[static_cast<size_t>(u)]++;
            assigned++;
        } else if (assigned > E && capacity[static_cast<size_t>(u)] > 1) {
            capacity[static_cast<size_t>(u)]--;
            assigned--;
        }
        if (++guard > 100 * E) throw NumericalError("synthetic capacity fixup did not converge");
    }

    std::vector<std::vector<int32_t>> chosen(static_cast<size_t>(U));
    std::vector<int64_t> remaining = capacity;

    // Phase A: every item gets one interaction from a random user with room.
    {
        std::vector<int32_t> items(static_cast<size_t>(I));
        std::iota(items.begin(), items.end(), 0);
        rng.shuffle(items);
        for (int32_t i : items) {
            for (;;) {
                const int64_t u = static_cast<int64_t>(rng.below(static_cast<uint64_t>(U)));
                if (remaining[static_cast<size_t>(u)] <= 0) continue;
                auto& mine = chosen[static_cast<size_t>(u)];
                if (std::find(mine.begin(), mine.end(), i) != mine.end()) continue;
                mine.push_back(i);
                remaining[static_cast<size_t>(u)]--;
                break;
            }
        }
    }

    // Phase B: fill per-user capacity by affinity + popularity with Gumbel
    // noise; a slice of the picks is uniformly random (accidental clicks).
    std::vector<float> scores(static_cast<size_t>(I));
    std::vector<int32_t> order(static_cast<size_t>(I));
    const float inv_sqrt_k = static_cast<float>(1.0 / std::sqrt(static_cast<double>(spec.latent_dim)));
    for (int64_t u = 0; u < U; ++u) {
        int64_t need = remaining[static_cast<size_t>(u)];
        if (need <= 0) continue;
        auto& mine = chosen[static_cast<size_t>(u)];
        for (int64_t i = 0; i < I; ++i) {
            float dot = 0;
            const float* zu = user_latents.row(u);
            const float* zi = item_latents.row(i);
            for (int64_t k = 0; k < spec.latent_dim; ++k) dot += zu[k] * zi[k];
            double noise_u = rng.uniform();
            if (noise_u <= 0.0) noise_u = 1e-12;
            const float gumbel = static_cast<float>(-std::log(-std::log(noise_u)));
            scores[static_cast<size_t>(i)] = dot * inv_sqrt_k + popularity[static_cast<size_t>(i)] + 0.7f * gumbel;
        }
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
            if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
                return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
            return a < b;
        });
        size_t cursor = 0;
        while (need > 0) {
            int32_t pick = -1;
            if (rng.uniform() < spec.random_click_rate) {
                // accidental click: uniform over items not yet chosen
                for (int attempt = 0; attempt < 64 && pick < 0; ++attempt) {
                    const int32_t cand = static_cast<int32_t>(rng.below(static_cast<uint64_t>(I)));
                    if (std::find(mine.begin(), mine.end(), cand) == mine.end()) pick = cand;
                }
            }
            while (pick < 0) {
                const int32_t cand = order[cursor++];
                if (std::find(mine.begin(), mine.end(), cand) == mine.end()) pick = cand;
            }
            mine.push_back(pick);
            --need;
        }
    }

    // Interactions file: user-major, per-user order as chosen.
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream out(dir + "/interactions.tsv");
    if (!out) throw FormatError("cannot open for write: " + dir + "/interactions.tsv");
    std::vector<int32_t> appearance(static_cast<size_t>(I), -1);
    int32_t next_index = 0;
    for (int64_t u = 0; u < U; ++u) {
        for (int32_t i : chosen[static_cast<size_t>(u)]) {
            if (appearance[static_cast<size_t>(i)] < 0) appearance[static_cast<size_t>(i)] = next_index++;
            out << "u" << u << "\t" << "i" << i << "\n";
        }
    }
    if (!out) throw FormatError("write failed: " + dir + "/interactions.tsv");
    out.close();
    if (next_index != I) throw NumericalError("synthetic generator failed to cover every item");

    // Feature rows permuted to the file's first-appearance item order.
    MatF visual = make_features(item_latents, spec.visual_dim, spec.visual_noise, rng);
    MatF textual = make_features(item_latents, spec.textual_dim, spec.textual_noise, rng);
    MatF visual_perm(I, spec.visual_dim), textual_perm(I, spec.textual_dim);
    for (int64_t i = 0; i < I; ++i) {
        const int64_t row = appearance[static_cast<size_t>(i)];
        std::copy(visual.row(i), visual.row(i) + visual.cols, visual_perm.row(row));
        std::copy(textual.row(i), textual.row(i) + textual.cols, textual_perm.row(row));
    }
    write_feature_file(dir + "/visual.jbmf", visual_perm, Modality::Visual);
    write_feature_file(dir + "/textual.jbmf", textual_perm, Modality::Textual);
}

}  // namespace jbm
