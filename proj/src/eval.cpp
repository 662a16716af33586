#include "eval.hpp"

#include "diffusion.hpp"
#include "losses.hpp"
#include "policies.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace glma {

FeatureStats::FeatureStats(int dim)
    : mean(Vector::Zero(dim)), m2(Matrix::Zero(dim, dim)) {}

void FeatureStats::add(const Vector& x) {
    if (x.size() != mean.size())
        fail(ErrorKind::input, "feature dim mismatch: got " + std::to_string(x.size()) +
                                   ", stats hold " + std::to_string(mean.size()));
    count += 1;
    Vector delta = x - mean;
    mean += delta / static_cast<double>(count);
    Vector delta2 = x - mean;
    m2 += delta * delta2.transpose();
}

void FeatureStats::merge(const FeatureStats& other) {
    if (other.mean.size() != mean.size())
        fail(ErrorKind::input, "cannot merge feature stats of different dims");
    if (other.count == 0) return;
    if (count == 0) {
        *this = other;
        return;
    }
    double na = static_cast<double>(count);
    double nb = static_cast<double>(other.count);
    Vector delta = other.mean - mean;
    mean += delta * (nb / (na + nb));
    m2 += other.m2 + (delta * delta.transpose()) * (na * nb / (na + nb));
    count += other.count;
}

Matrix FeatureStats::covariance() const {
    if (count < 2)
        fail(ErrorKind::input,
             "covariance needs at least 2 samples, have " + std::to_string(count));
    return m2 / static_cast<double>(count - 1);
}

FeatureStats feature_stats(const std::vector<Vector>& features) {
    if (features.size() < 2)
        fail(ErrorKind::input, "feature stats need at least 2 vectors, got " +
                                   std::to_string(features.size()));
    FeatureStats stats(static_cast<int>(features.front().size()));
    for (const Vector& f : features) stats.add(f);
    return stats;
}

namespace {

// Principal square root of a symmetric PSD matrix. Eigenvalues slightly
// below zero are roundoff and clamp to zero; anything clearly negative
// means the input was not a covariance.
Matrix psd_sqrt(const Matrix& s, const char* what) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
    if (eig.info() != Eigen::Success)
        fail(ErrorKind::numeric, std::string("eigendecomposition failed for ") + what);
    Vector ev = eig.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] < -1e-8)
            fail(ErrorKind::numeric, std::string(what) + " has negative eigenvalue " +
                                         std::to_string(ev[i]));
        ev[i] = std::sqrt(std::max(0.0, ev[i]));
    }
    return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

} // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
    if (a.mean.size() != b.mean.size())
        fail(ErrorKind::input, "Frechet distance needs equal feature dims");
    Matrix sa = a.covariance();
    Matrix sb = b.covariance();
    // sqrtm(Sa Sb) via the symmetric form Sa^1/2 Sb Sa^1/2, which keeps every
    // eigensolve on a symmetric matrix.
    Matrix ra = psd_sqrt(sa, "covariance A");
    Matrix inner = psd_sqrt(ra * sb * ra, "covariance product");
    double mean_term = (a.mean - b.mean).squaredNorm();
    double trace_term = sa.trace() + sb.trace() - 2.0 * inner.trace();
    double d = mean_term + trace_term;
    require_finite(d, "frechet distance");
    return d;
}

double clip_style_score(const Vector& img_feat, const Vector& txt_feat) {
    if (img_feat.size() != txt_feat.size())
        fail(ErrorKind::input, "clip-style score needs equal dims, got " +
                                   std::to_string(img_feat.size()) + " vs " +
                                   std::to_string(txt_feat.size()));
    double nu = img_feat.norm();
    double nv = txt_feat.norm();
    if (nu == 0.0 || nv == 0.0)
        fail(ErrorKind::input, "clip-style score is undefined for zero vectors");
    double cs = img_feat.dot(txt_feat) / (nu * nv);
    require_finite(cs, "clip-style score");
    return cs;
}

Vector image_feature(const Backbones& nets, const Image& img) {
    Matrix vis = nets.encode_vision(img);          // (length x d_model)
    Matrix pooled = vis.colwise().mean();          // (1 x d_model)
    return (pooled * nets.eval_proj).transpose();  // (d_pool)
}

Vector text_feature(const Backbones& nets, const std::string& caption) {
    return nets.sd_text_encode(caption).e_pclip.transpose(); // (d_pool)
}

EvalReport evaluate_sets(const Backbones& nets, const std::vector<Image>& generated,
                         const std::vector<std::string>& captions,
                         const std::vector<Image>& references) {
    if (generated.size() != captions.size())
        fail(ErrorKind::input, "evaluation needs one caption per generated image");
    if (generated.size() < 2 || references.size() < 2)
        fail(ErrorKind::input, "evaluation needs at least 2 generated and 2 reference "
                               "images for covariances");

    int d = static_cast<int>(nets.eval_proj.cols());
    FeatureStats gen_stats(d), ref_stats(d);
    double cs_total = 0.0;
    for (size_t i = 0; i < generated.size(); ++i) {
        Vector g = image_feature(nets, generated[i]);
        gen_stats.add(g);
        cs_total += clip_style_score(g, text_feature(nets, captions[i]));
    }
    for (const Image& r : references) ref_stats.add(image_feature(nets, r));

    EvalReport report;
    report.fid_stub = frechet_distance(gen_stats, ref_stats);
    report.clip_stub_mean = cs_total / static_cast<double>(generated.size());
    report.n = static_cast<int>(generated.size());
    return report;
}

SweepReport layer_sweep(const std::string& prompt, const std::vector<int>& offsets,
                        const RunConfig& cfg, const Backbones& nets,
                        const AdapterParams& adapter) {
    if (offsets.empty()) fail(ErrorKind::input, "layer sweep needs at least one offset");
    int L = nets.prof.n_layers;
    for (size_t i = 0; i < offsets.size(); ++i) {
        int k = offsets[i];
        if (k < 0 || L - k < 0)
            fail(ErrorKind::input,
                 "sweep offset " + std::to_string(k) + " leaves no valid layer (L = " +
                     std::to_string(L) + ")");
        if (std::count(offsets.begin(), offsets.end(), k) != 1)
            fail(ErrorKind::input, "sweep offsets must be distinct");
    }

    // Same extraction as the text-to-image path so offset 0 is its bitwise twin.
    std::vector<RoundState> rounds{
        run_round(nets, cfg, ConversationTurn{prompt, std::nullopt}, cfg.max_new)};
    ExtractResult ext = extract_for_task(TaskKind::text_to_image, rounds, nets, cfg);
    const HiddenStack& stack = ext.stacks.front();
    ReferenceEmbeddings ref = nets.sd_text_encode(prompt);
    LayerChoice layers = select_layers(TaskKind::text_to_image, L);
    AlignedEmbeddings emb_base =
        adapter_apply(adapter, stack.layer(layers.base_layer), layers.base_layer);
    NoiseSchedule sched =
        build_schedule(cfg.profile.timesteps, cfg.beta_start, cfg.beta_end);
    int steps = cfg.resolved_sample_steps();

    SweepReport report;
    report.prompt = prompt;
    for (int k : offsets) {
        SweepEntry entry;
        entry.offset = k;
        entry.layer = L - k;
        AlignedEmbeddings emb = adapter_apply(adapter, stack.layer(entry.layer), entry.layer);
        entry.align_loss = loss_align_value(emb, ref, cfg.align_mode);
        // Every offset replays the text-to-image sampler stream: the probed
        // layer is the only thing that changes between entries.
        RngStream rng(cfg.seed, "sample/0");
        Matrix latent = sample_latent(nets, sched, emb_base, emb, 1.0, steps, rng);
        entry.image = nets.vae_decode(latent);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace glma
