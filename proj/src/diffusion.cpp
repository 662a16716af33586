#include "diffusion.hpp"

#include <cmath>

namespace glma {

NoiseSchedule build_schedule(int timesteps, double beta_start, double beta_end) {
    if (timesteps < 1) fail(ErrorKind::validation, "schedule: timesteps must be positive");
    if (!(beta_start > 0.0 && beta_start < 1.0))
        fail(ErrorKind::validation, "schedule: beta_start must lie in (0, 1)");
    if (!(beta_end > beta_start && beta_end < 1.0))
        fail(ErrorKind::validation, "schedule: beta_end must lie in (beta_start, 1)");

    NoiseSchedule s;
    s.timesteps = timesteps;
    s.betas.resize(timesteps);
    s.alphas.resize(timesteps);
    s.alpha_bars.resize(timesteps);
    double running = 1.0;
    for (int i = 0; i < timesteps; ++i) {
        double frac = timesteps == 1 ? 0.0
                                     : static_cast<double>(i) / static_cast<double>(timesteps - 1);
        s.betas(i) = beta_start + (beta_end - beta_start) * frac;
        s.alphas(i) = 1.0 - s.betas(i);
        running *= s.alphas(i);
        s.alpha_bars(i) = running;
    }
    return s;
}

NoisedLatent f_noise(const Matrix& latent, int lambda, const NoiseSchedule& sched,
                     RngStream& rng) {
    if (lambda < 0 || lambda >= sched.timesteps)
        fail(ErrorKind::input, "f_noise: lambda " + std::to_string(lambda) +
                                   " outside [0, " + std::to_string(sched.timesteps) + ")");
    require_finite(latent, "f_noise latent");
    NoisedLatent out;
    out.lambda = lambda;
    out.noise = randn_matrix(rng, latent.rows(), latent.cols(), 1.0);
    double ab = sched.alpha_bars(lambda);
    out.values = std::sqrt(ab) * latent + std::sqrt(1.0 - ab) * out.noise;
    return out;
}

ad::Var unet_score(ad::Tape& t, const Backbones& nets, const NoisedLatent& noised,
                   ad::Var h_align, ad::Var h_palign) {
    return nets.base.forward(t, noised.values, h_align, h_palign, noised.lambda);
}

TFFOutput tff_fuse(const Matrix& pred_base, const Matrix& pred_refiner, double epsilon) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
        fail(ErrorKind::input, "tff_fuse: epsilon must lie in [0, 1]");
    if (pred_base.rows() != pred_refiner.rows() || pred_base.cols() != pred_refiner.cols())
        fail(ErrorKind::input, "tff_fuse: prediction shape mismatch");
    TFFOutput out;
    out.epsilon = epsilon;
    if (epsilon == 0.0) out.h_sdxl = pred_base;
    else if (epsilon == 1.0) out.h_sdxl = pred_refiner;
    else out.h_sdxl = (1.0 - epsilon) * pred_base + epsilon * pred_refiner;
    return out;
}

Matrix sample(const NoiseSchedule& sched, const DenoiseFn& base, const DenoiseFn& refiner,
              double epsilon, int steps, Eigen::Index lat_rows, Eigen::Index lat_cols,
              RngStream& rng) {
    if (steps < 1 || steps > sched.timesteps)
        fail(ErrorKind::input, "sample: steps must lie in [1, timesteps]");
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
        fail(ErrorKind::input, "sample: epsilon must lie in [0, 1]");

    // Evenly thinned descending timestep ladder, always ending at 0.
    std::vector<int> ts;
    ts.reserve(static_cast<size_t>(steps));
    int hi = sched.timesteps - 1;
    for (int j = 0; j < steps; ++j) {
        int t = steps == 1 ? hi
                           : static_cast<int>(std::llround(
                                 static_cast<double>(hi) * (steps - 1 - j) / (steps - 1)));
        if (ts.empty() || t < ts.back()) ts.push_back(t);
    }

    Matrix x = randn_matrix(rng, lat_rows, lat_cols, 1.0);
    for (size_t j = 0; j < ts.size(); ++j) {
        int t = ts[j];
        Matrix pb = base(x, t);
        Matrix pr = refiner(x, t);
        Matrix eps_hat = tff_fuse(pb, pr, epsilon).h_sdxl;
        double beta = sched.betas(t);
        double ab = sched.alpha_bars(t);
        Matrix mean = (x - (beta / std::sqrt(1.0 - ab)) * eps_hat) / std::sqrt(1.0 - beta);
        if (t > 0) {
            Matrix z = randn_matrix(rng, lat_rows, lat_cols, 1.0);
            x = mean + std::sqrt(beta) * z;
        } else {
            x = mean;
        }
    }
    require_finite(x, "sample output latent");
    return x;
}

Matrix sample_latent(const Backbones& nets, const NoiseSchedule& sched,
                     const AlignedEmbeddings& emb_base, const AlignedEmbeddings& emb_refiner,
                     double epsilon, int steps, RngStream& rng) {
    DenoiseFn base = [&](const Matrix& x, int lambda) {
        return nets.base.forward_value(x, emb_base.h_align, emb_base.h_palign, lambda);
    };
    DenoiseFn refiner = [&](const Matrix& x, int lambda) {
        return nets.refiner.forward_value(x, emb_refiner.h_align, emb_refiner.h_palign, lambda);
    };
    return sample(sched, base, refiner, epsilon, steps,
                  static_cast<Eigen::Index>(nets.prof.lat_h) * nets.prof.lat_w,
                  nets.prof.lat_c, rng);
}

} // namespace glma
