#pragma once

#include <cstdint>
#include <string>

namespace jbm {

// Generator for benchmark-shaped synthetic datasets. Interactions follow a
// latent-factor model with popularity skew plus a slice of random
// "accidental clicks"; modality features are noisy linear views of the same
// item latents (visual noisier than textual). Every user and item appears
// at least once and the interaction count is hit exactly, so ingestion
// reproduces the requested shape.
struct SynthSpec {
    int64_t num_users = 1000;
    int64_t num_items = 400;
    int64_t num_interactions = 8000;
    int64_t latent_dim = 16;
    int64_t visual_dim = 256;
    int64_t textual_dim = 128;
    double visual_noise = 1.0;    // noise sd relative to unit signal variance
    double textual_noise = 0.7;
    double random_click_rate = 0.10;
    uint64_t seed = 7;
};

// Writes interactions.tsv, visual.jbmf and textual.jbmf into dir. Feature
// rows are permuted to the first-appearance item order of the written
// interaction file, so the files are mutually consistent for ingestion.
void write_synthetic_dataset(const std::string& dir, const SynthSpec& spec);

}  // namespace jbm
