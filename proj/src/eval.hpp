#pragma once

#include "adapter.hpp"
#include "backbones.hpp"
#include "common.hpp"
#include "config.hpp"
#include "image.hpp"

#include <string>
#include <vector>

namespace glma {

// Streaming first/second-moment accumulator over feature rows (Welford /
// Chan parallel form). Mergeable and order-stable: split-vs-pooled
// accumulation agrees tightly, enabling parallel evaluation.
struct FeatureStats {
    int64_t count = 0;
    Vector mean; // (d)
    Matrix m2;   // (d x d), sum of outer products of deviations

    explicit FeatureStats(int dim = 0);

    void add(const Vector& x);
    void merge(const FeatureStats& other);

    // Unbiased covariance; requires count >= 2.
    Matrix covariance() const;
};

// Batch fit; needs at least 2 equal-dim vectors.
FeatureStats feature_stats(const std::vector<Vector>& features);

// Fréchet distance between two Gaussians fitted to the accumulated features:
//   |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2).
// Symmetric eigendecompositions throughout; eigenvalues above -1e-8 clamp to
// zero, anything below is a numeric error.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

// Cosine similarity in [-1, 1] between one image feature and one text
// feature. Zero vectors are rejected.
double clip_style_score(const Vector& img_feat, const Vector& txt_feat);

// Feature extractors backed by the frozen nets. Both are (d_pool)-dim so
// image and caption features live in one comparable space.
Vector image_feature(const Backbones& nets, const Image& img);
Vector text_feature(const Backbones& nets, const std::string& caption);

struct EvalReport {
    double fid_stub = 0.0;
    double clip_stub_mean = 0.0;
    int n = 0; // generated samples scored
};

// Stub-relative scores: Fréchet distance between generated and reference
// feature distributions, and the mean cosine score of each generated image
// against its own caption. Useful for regression tracking only; the frozen
// toy encoders make the absolute values incomparable to any published metric.
EvalReport evaluate_sets(const Backbones& nets, const std::vector<Image>& generated,
                         const std::vector<std::string>& captions,
                         const std::vector<Image>& references);

// Hidden-layer depth probe. For each offset k the adapter consumes layer
// L - k of the prompt's hidden stack; the entry records the alignment loss
// of that conditioning against the frozen text targets, plus a sampled image
// (gate fixed at 1 so only the probed layer shapes the output). Offset 0 on
// default settings reproduces the text-to-image path bitwise.
struct SweepEntry {
    int offset = 0;
    int layer = 0;
    double align_loss = 0.0;
    Image image;
};

struct SweepReport {
    std::string prompt;
    std::vector<SweepEntry> entries;
};

SweepReport layer_sweep(const std::string& prompt, const std::vector<int>& offsets,
                        const RunConfig& cfg, const Backbones& nets,
                        const AdapterParams& adapter);

} // namespace glma
