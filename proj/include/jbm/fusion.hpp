#pragma once

#include <cstdio>
#include <vector>

#include "jbm/param.hpp"
#include "jbm/tape.hpp"

namespace jbm {

// Behavior-gated fusion:
//   E_s = (1/|M|) sum_m E_m ⊙ sigmoid(E_c W^T + bias)
// The gate is computed once from the propagated collaborative embeddings and
// shared across modalities.
template <typename S>
typename Tape<S>::Id gated_fuse(Tape<S>& g, const std::vector<typename Tape<S>::Id>& modal_embeds,
                                typename Tape<S>::Id e_c, ParameterT<S>& gate_w,
                                ParameterT<S>& gate_b) {
    if (modal_embeds.empty()) throw DimensionError("gated_fuse: at least one modality required");
    auto gate = g.sigmoid(g.add_rowvec(g.matmul(e_c, g.leaf(gate_w), false, true), g.leaf(gate_b)));
    typename Tape<S>::Id acc = -1;
    for (auto em : modal_embeds) {
        if (g.val(em).rows != g.val(e_c).rows || g.val(em).cols != g.val(e_c).cols)
            throw DimensionError("gated_fuse: modal embedding shape mismatch");
        auto gated = g.hadamard(em, gate);
        acc = (acc < 0) ? gated : g.add(acc, gated);
    }
    return g.scale(acc, static_cast<S>(1.0 / static_cast<double>(modal_embeds.size())));
}

// E = E_s + E_c.
template <typename S>
typename Tape<S>::Id final_embed(Tape<S>& g, typename Tape<S>::Id e_s, typename Tape<S>::Id e_c) {
    return g.add(e_s, e_c);
}

// Cross-view InfoNCE between the semantic and collaborative views, both
// directions summed, in-batch negatives. By default rows are L2-normalized
// and a temperature is applied; literal mode keeps the raw dot products
// (the printed formula), which is numerically fragile at d=64 and off by
// default.
template <typename S>
typename Tape<S>::Id cross_view_loss(Tape<S>& g, typename Tape<S>::Id e_s, typename Tape<S>::Id e_c,
                                     double tau_cl, const std::vector<int64_t>& user_rows,
                                     const std::vector<int64_t>& item_rows, bool literal = false) {
    if (!(tau_cl > 0.0)) throw ConfigError("cross-view temperature must be positive");
    if (user_rows.empty() || item_rows.empty())
        throw DimensionError("cross_view_loss: batches must be nonempty");
    auto term = [&](const std::vector<int64_t>& rows) -> typename Tape<S>::Id {
        if (rows.size() < 2) {
            std::fprintf(stderr, "[jbm] warning: cross-view batch of size 1 has no contrast; term = 0\n");
            return g.constant(Mat<S>(1, 1));
        }
        auto a = g.gather_rows(e_s, rows);
        auto b = g.gather_rows(e_c, rows);
        if (!literal) {
            a = g.row_l2_normalize(a);
            b = g.row_l2_normalize(b);
        }
        auto logits = g.matmul(a, b, false, true);
        if (!literal) logits = g.scale(logits, static_cast<S>(1.0 / tau_cl));
        return g.diag_softmax_xent(logits);
    };
    return g.add(term(user_rows), term(item_rows));
}

}  // namespace jbm
