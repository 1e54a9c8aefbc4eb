#pragma once

#include <string>
#include <vector>

#include "jbm/data.hpp"
#include "jbm/io.hpp"
#include "jbm/sparse.hpp"
#include "jbm/tape.hpp"

namespace jbm {

// User-item bipartite graph A = [[0, O], [O^T, 0]], symmetrically normalized
// with nonzero-count degrees. Nodes 0..|U|-1 are users, |U|.. are items.
struct CollabGraph {
    CsrF adj;  // (|U|+|I|)^2, normalized
    int64_t num_users = 0;
    int64_t num_items = 0;
    int64_t layers = 2;
};

CollabGraph build_collab_graph(const InteractionMatrix& interactions, int64_t num_users,
                               int64_t num_items, int64_t layers);

// Per-modality item-item affinity: directed cosine top-K per row (ties to the
// smaller index), symmetrized by union, then normalized with value-sum
// degrees. Similarities are computed in 64-bit.
struct SemanticGraph {
    Modality modality = Modality::Visual;
    CsrF adj;        // normalized, symmetric support
    int64_t k = 0;   // K actually used (clamped to |I|-1)
    std::vector<std::vector<std::pair<int32_t, float>>> topk;  // directed kNN, pre-symmetrization
};

SemanticGraph build_semantic_graph(const MatF& features, Modality modality, int64_t k);

// Eq.-13 aggregation matrix: entry (u, i) = 1/sqrt(|N_u| * |N_i|) for each
// training interaction. The transpose is kept for the backward pass.
struct UserAggregator {
    CsrF forward;    // |U| x |I|
    CsrF transpose;  // |I| x |U|
};

UserAggregator build_user_aggregator(const InteractionMatrix& interactions, int64_t num_users,
                                     int64_t num_items);

// Mean over propagation layers: (1/(L+1)) * sum_l A^l E0. Linear in E0.
template <typename S>
typename Tape<S>::Id propagate_collab(Tape<S>& g, const Csr<S>* adj, int64_t layers,
                                      typename Tape<S>::Id e0) {
    auto acc = e0;
    auto cur = e0;
    for (int64_t l = 0; l < layers; ++l) {
        cur = g.spmm(adj, adj, cur);  // adjacency is symmetric
        acc = g.add(acc, cur);
    }
    return g.scale(acc, static_cast<S>(1.0 / static_cast<double>(layers + 1)));
}

// One graph-convolution layer on the semantic adjacency.
template <typename S>
typename Tape<S>::Id propagate_semantic(Tape<S>& g, const Csr<S>* adj, typename Tape<S>::Id items) {
    return g.spmm(adj, adj, items);  // symmetric support
}

// User-side aggregation of propagated item features (zero rows for users
// without training interactions).
template <typename S>
typename Tape<S>::Id aggregate_user_modal(Tape<S>& g, const Csr<S>* agg, const Csr<S>* agg_t,
                                          typename Tape<S>::Id item_embed) {
    return g.spmm(agg, agg_t, item_embed);
}

// Triplet text round-trip for inspection: `a<TAB>b<TAB>weight` of the
// directed kNN edges. Loading validates the per-row K bound.
void save_semantic_topk(const std::string& path, const SemanticGraph& graph);
std::vector<std::vector<std::pair<int32_t, float>>> load_semantic_topk(const std::string& path,
                                                                       int64_t num_items, int64_t k);

}  // namespace jbm
