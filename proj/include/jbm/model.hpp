#pragma once

#include <map>
#include <vector>

#include "jbm/data.hpp"
#include "jbm/debias.hpp"
#include "jbm/diffusion.hpp"
#include "jbm/fusion.hpp"
#include "jbm/graphs.hpp"
#include "jbm/tape.hpp"

namespace jbm {

// All learnable tensors of the full model. The denoiser list is empty when
// multimodal denoising is ablated.
template <typename S>
struct JbmParamsT {
    int64_t num_users = 0;
    int64_t num_items = 0;
    int64_t dim = 0;
    std::vector<Modality> modalities;

    ParameterT<S> embed;   // (|U|+|I|) x d id embeddings
    ParameterT<S> gate_w;  // d x d
    ParameterT<S> gate_b;  // 1 x d
    std::vector<ParameterT<S>> proj;           // per modality: d_m x d
    std::vector<DenoiserParamsT<S>> denoiser;  // per modality; empty if no_mmd

    void init(int64_t users, int64_t items, int64_t d, const std::map<Modality, int64_t>& feature_dims,
              int64_t diffusion_steps, bool with_denoiser, Rng& rng) {
        num_users = users;
        num_items = items;
        dim = d;
        modalities.clear();
        embed = ParameterT<S>("embed", users + items, d);
        embed.value = xavier_init<S>(users + items, d, rng);
        gate_w = ParameterT<S>("gate_w", d, d);
        gate_w.value = xavier_init<S>(d, d, rng);
        gate_b = ParameterT<S>("gate_b", 1, d);
        proj.clear();
        denoiser.clear();
        for (const auto& [m, d_m] : feature_dims) {
            modalities.push_back(m);
            ParameterT<S> pm(std::string("proj_") + modality_name(m), d_m, d);
            pm.value = xavier_init<S>(d_m, d, rng);
            proj.push_back(std::move(pm));
            if (with_denoiser) {
                DenoiserParamsT<S> den;
                den.init(std::string("den_") + modality_name(m), d_m, d, diffusion_steps, rng);
                denoiser.push_back(std::move(den));
            }
        }
    }

    std::vector<ParameterT<S>*> all() {
        std::vector<ParameterT<S>*> out{&embed, &gate_w, &gate_b};
        for (auto& p : proj) out.push_back(&p);
        for (auto& den : denoiser)
            for (auto* p : den.all()) out.push_back(p);
        return out;
    }

    template <typename T>
    JbmParamsT<T> cast() const {
        JbmParamsT<T> out;
        out.num_users = num_users;
        out.num_items = num_items;
        out.dim = dim;
        out.modalities = modalities;
        out.embed = embed.template cast<T>();
        out.gate_w = gate_w.template cast<T>();
        out.gate_b = gate_b.template cast<T>();
        for (const auto& p : proj) out.proj.push_back(p.template cast<T>());
        for (const auto& den : denoiser) out.denoiser.push_back(den.template cast<T>());
        return out;
    }
};

using JbmParams = JbmParamsT<float>;

// Frozen per-run structures: graphs are built once from raw features and the
// training interactions, and raw features feed the diffusion loss.
template <typename S>
struct ModelDataT {
    int64_t num_users = 0;
    int64_t num_items = 0;
    int64_t layers = 2;
    Csr<S> collab_adj;                // symmetric normalized (|U|+|I|)^2
    std::vector<Csr<S>> semantic_adj; // per modality, symmetric support
    Csr<S> agg;                       // |U| x |I| aggregation weights
    Csr<S> agg_t;                     // transpose
    std::vector<Mat<S>> raw_features; // per modality |I| x d_m

    template <typename T>
    ModelDataT<T> cast() const {
        ModelDataT<T> out;
        out.num_users = num_users;
        out.num_items = num_items;
        out.layers = layers;
        out.collab_adj = collab_adj.template cast<T>();
        for (const auto& s : semantic_adj) out.semantic_adj.push_back(s.template cast<T>());
        out.agg = agg.template cast<T>();
        out.agg_t = agg_t.template cast<T>();
        for (const auto& f : raw_features) out.raw_features.push_back(f.template cast<T>());
        return out;
    }
};

using ModelData = ModelDataT<float>;

// Recomputed once per epoch: denoised (blended) modality features, or the
// raw features when denoising is ablated.
template <typename S>
struct EpochCacheT {
    std::vector<Mat<S>> denoised;  // per modality |I| x d_m
    double omega = 0.0;

    template <typename T>
    EpochCacheT<T> cast() const {
        EpochCacheT<T> out;
        out.omega = omega;
        for (const auto& m : denoised) out.denoised.push_back(m.template cast<T>());
        return out;
    }
};

using EpochCache = EpochCacheT<float>;

// Handles into one forward pass over the tape.
template <typename S>
struct ForwardT {
    typename Tape<S>::Id e_c;                 // propagated collaborative, (|U|+|I|) x d
    std::vector<typename Tape<S>::Id> modal;  // stacked [E_u^m; E_i^m] per modality
    typename Tape<S>::Id e_s;                 // semantic fusion
    typename Tape<S>::Id e;                   // final embeddings
};

// Propagation + fusion. With no_ff the gate is replaced by average pooling
// of the collaborative and modal embeddings (E_s stays the unweighted modal
// mean so the cross-view loss keeps a semantic side).
template <typename S>
ForwardT<S> model_forward(Tape<S>& g, JbmParamsT<S>& p, const ModelDataT<S>& data,
                          const EpochCacheT<S>& cache, bool no_ff) {
    ForwardT<S> fwd;
    auto e_id = g.leaf(p.embed);
    fwd.e_c = propagate_collab(g, &data.collab_adj, data.layers, e_id);
    for (size_t m = 0; m < p.modalities.size(); ++m) {
        auto projected = g.matmul(g.constant(cache.denoised[m]), g.leaf(p.proj[m]));
        auto items = propagate_semantic(g, &data.semantic_adj[m], projected);
        auto users = aggregate_user_modal(g, &data.agg, &data.agg_t, items);
        fwd.modal.push_back(g.concat_rows(users, items));
    }
    if (no_ff) {
        typename Tape<S>::Id modal_sum = fwd.modal[0];
        for (size_t m = 1; m < fwd.modal.size(); ++m) modal_sum = g.add(modal_sum, fwd.modal[m]);
        fwd.e_s = g.scale(modal_sum, static_cast<S>(1.0 / static_cast<double>(fwd.modal.size())));
        fwd.e = g.scale(g.add(fwd.e_c, modal_sum),
                        static_cast<S>(1.0 / static_cast<double>(1 + fwd.modal.size())));
    } else {
        fwd.e_s = gated_fuse(g, fwd.modal, fwd.e_c, p.gate_w, p.gate_b);
        fwd.e = final_embed(g, fwd.e_s, fwd.e_c);
    }
    return fwd;
}

// Randomness for one training step, drawn before the graph is built so the
// loss is a deterministic function of the parameters (required both for
// reproducibility and for finite-difference checking).
struct BatchDraws {
    std::vector<WeightedTriple> triples;   // confidences filled by the caller
    std::vector<int64_t> item_batch;       // distinct item ids for L_dm / L_mm
    std::vector<std::vector<int64_t>> t_steps;  // per modality, one t per batch item
    std::vector<MatD> eps;                 // per modality, |B| x d_m noise
};

struct LossWeights {
    double lambda_dm = 0.005;
    double lambda_mm = 0.001;
    double lambda_cl = 0.01;
    double tau = 0.2;     // inter-modality alignment temperature
    double tau_cl = 0.2;  // cross-view temperature
    double omega = 0.5;   // blend weight for the in-batch denoised estimate
    bool no_mmd = false;
    bool no_ff = false;   // consumed by model_forward; carried for completeness
    bool literal_eq15 = false;
};

template <typename S>
struct TotalLossT {
    typename Tape<S>::Id node;  // scalar graph node
    double total = 0, bpr = 0, dm = 0, mm = 0, cl = 0;
    std::vector<S> score_pos, score_neg;  // per-triple values, for diagnostics
};

// Assembles Eq.-19 style total loss on an existing forward pass:
//   L = L_bpr + lambda_dm (L_dm^v + L_dm^t) + lambda_mm L_mm + lambda_cl L_cl
// `cond` holds the collaborative conditioning rows for the item batch,
// passed by value as a constant (the trainer detaches the current
// propagated embeddings; the gradient check freezes them across probes).
// Throws NumericalError naming the first non-finite component.
template <typename S>
TotalLossT<S> build_total_loss(Tape<S>& g, JbmParamsT<S>& p, const ModelDataT<S>& data,
                               const ForwardT<S>& fwd, const BatchDraws& draws, const Mat<S>& cond,
                               const DiffusionSchedule& sched, const LossWeights& w) {
    TotalLossT<S> out;

    // confidence-weighted BPR on the triple batch
    std::vector<int64_t> u_rows, p_rows, n_rows;
    std::vector<float> conf;
    u_rows.reserve(draws.triples.size());
    for (const auto& t : draws.triples) {
        u_rows.push_back(t.user);
        p_rows.push_back(data.num_users + t.item_pos);
        n_rows.push_back(data.num_users + t.item_neg);
        conf.push_back(t.w);
    }
    auto s_pos = g.rowdot(g.gather_rows(fwd.e, u_rows), g.gather_rows(fwd.e, p_rows));
    auto s_neg = g.rowdot(g.gather_rows(fwd.e, u_rows), g.gather_rows(fwd.e, n_rows));
    out.score_pos = g.val(s_pos).v;
    out.score_neg = g.val(s_neg).v;
    auto l_bpr = weighted_bpr(g, s_pos, s_neg, conf);
    out.bpr = static_cast<double>(g.scalar(l_bpr));
    if (!std::isfinite(out.bpr)) throw NumericalError("L_bpr is non-finite");
    auto total = l_bpr;

    // cross-view alignment on the deduplicated batch users/items
    if (w.lambda_cl != 0.0) {
        std::vector<int64_t> uu = u_rows, ii = p_rows;
        std::sort(uu.begin(), uu.end());
        uu.erase(std::unique(uu.begin(), uu.end()), uu.end());
        std::sort(ii.begin(), ii.end());
        ii.erase(std::unique(ii.begin(), ii.end()), ii.end());
        auto l_cl = cross_view_loss(g, fwd.e_s, fwd.e_c, w.tau_cl, uu, ii, w.literal_eq15);
        out.cl = static_cast<double>(g.scalar(l_cl));
        if (!std::isfinite(out.cl)) throw NumericalError("L_cl is non-finite");
        total = g.add(total, g.scale(l_cl, static_cast<S>(w.lambda_cl)));
    }

    // diffusion reconstruction + inter-modality alignment on the item batch
    const bool want_diffusion = !w.no_mmd && !p.denoiser.empty() &&
                                (w.lambda_dm != 0.0 || w.lambda_mm != 0.0) && !draws.item_batch.empty();
    if (want_diffusion) {
        std::vector<typename Tape<S>::Id> blended(p.modalities.size());
        typename Tape<S>::Id l_dm_sum = -1;
        auto cond_node = g.constant(cond);
        for (size_t m = 0; m < p.modalities.size(); ++m) {
            const Mat<S>& full = data.raw_features[m];
            Mat<S> x0(static_cast<int64_t>(draws.item_batch.size()), full.cols);
            for (size_t r = 0; r < draws.item_batch.size(); ++r)
                std::copy(full.row(draws.item_batch[r]), full.row(draws.item_batch[r]) + full.cols,
                          x0.row(static_cast<int64_t>(r)));
            Mat<S> eps = draws.eps[m].template cast<S>();
            typename Tape<S>::Id x_hat = -1;
            auto l_dm = diffusion_loss_given(g, p.denoiser[m], x0, draws.t_steps[m], eps, sched,
                                             cond_node, &x_hat);
            const double v = static_cast<double>(g.scalar(l_dm));
            if (!std::isfinite(v))
                throw NumericalError(std::string("L_dm^") + modality_name(p.modalities[m]) + " is non-finite");
            out.dm += v;
            l_dm_sum = (l_dm_sum < 0) ? l_dm : g.add(l_dm_sum, l_dm);
            blended[m] = g.add(g.scale(g.constant(std::move(x0)), static_cast<S>(1.0 - w.omega)),
                               g.scale(x_hat, static_cast<S>(w.omega)));
        }
        if (w.lambda_dm != 0.0) total = g.add(total, g.scale(l_dm_sum, static_cast<S>(w.lambda_dm)));
        if (w.lambda_mm != 0.0 && p.modalities.size() >= 2) {
            // fixed order: index 0 = visual, 1 = textual; text anchors the loss
            auto l_mm = modality_align_loss(g, blended[1], blended[0], w.tau, p.proj[1], p.proj[0]);
            out.mm = static_cast<double>(g.scalar(l_mm));
            if (!std::isfinite(out.mm)) throw NumericalError("L_mm is non-finite");
            total = g.add(total, g.scale(l_mm, static_cast<S>(w.lambda_mm)));
        }
    }

    out.node = total;
    out.total = static_cast<double>(g.scalar(total));
    if (!std::isfinite(out.total)) throw NumericalError("total loss is non-finite");
    return out;
}

// Plain-value forward for evaluation and conditioning: returns the final
// embedding matrix (and optionally the propagated collaborative block).
MatF compute_embeddings(JbmParams& params, const ModelData& data, const EpochCache& cache,
                        bool no_ff, MatF* e_c_out = nullptr,
                        std::vector<MatF>* modal_out = nullptr);

// Per-epoch denoised feature cache. Conditioning is the current propagated
// collaborative item block; the reverse chains run in deterministic mode.
EpochCache compute_epoch_cache(JbmParams& params, const ModelData& data,
                               const DiffusionSchedule& sched, double omega, bool no_mmd,
                               Rng& rng);

}  // namespace jbm
