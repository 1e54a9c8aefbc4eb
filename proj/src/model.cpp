#include "jbm/model.hpp"

namespace jbm {

MatF compute_embeddings(JbmParams& params, const ModelData& data, const EpochCache& cache,
                        bool no_ff, MatF* e_c_out, std::vector<MatF>* modal_out) {
    TapeF g;
    ForwardT<float> fwd = model_forward(g, params, data, cache, no_ff);
    if (e_c_out) *e_c_out = g.val(fwd.e_c);
    if (modal_out) {
        modal_out->clear();
        for (auto id : fwd.modal) modal_out->push_back(g.val(id));
    }
    return g.val(fwd.e);
}

EpochCache compute_epoch_cache(JbmParams& params, const ModelData& data,
                               const DiffusionSchedule& sched, double omega, bool no_mmd,
                               Rng& rng) {
    EpochCache cache;
    cache.omega = no_mmd ? 0.0 : omega;
    if (no_mmd || params.denoiser.empty()) {
        cache.denoised = data.raw_features;
        cache.omega = 0.0;
        return cache;
    }
    // conditioning: current propagated collaborative item embeddings
    MatF e_c_items;
    {
        TapeF g;
        auto e_c = propagate_collab(g, &data.collab_adj, data.layers, g.leaf(params.embed));
        const MatF& full = g.val(e_c);
        e_c_items = MatF(data.num_items, full.cols);
        for (int64_t i = 0; i < data.num_items; ++i)
            std::copy(full.row(data.num_users + i), full.row(data.num_users + i) + full.cols,
                      e_c_items.row(i));
    }
    for (size_t m = 0; m < params.modalities.size(); ++m) {
        MatF x_hat = reverse_denoise(data.raw_features[m], sched, e_c_items, params.denoiser[m],
                                     ReverseMode::Deterministic, rng);
        cache.denoised.push_back(blend(data.raw_features[m], x_hat, omega));
    }
    return cache;
}

}  // namespace jbm
