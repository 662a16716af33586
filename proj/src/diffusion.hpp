#pragma once

#include "adapter.hpp"
#include "backbones.hpp"
#include "config.hpp"
#include "rng.hpp"

#include <functional>

namespace glma {

// Linear beta schedule with exact running products for the closed-form
// forward noising.
struct NoiseSchedule {
    Vector betas;      // strictly increasing, in (0, 1)
    Vector alphas;     // 1 - beta
    Vector alpha_bars; // cumulative product of alphas
    int timesteps = 0;
};

NoiseSchedule build_schedule(int timesteps, double beta_start, double beta_end);

struct NoisedLatent {
    Matrix values; // sqrt(abar) * latent + sqrt(1 - abar) * noise
    Matrix noise;  // the exact standard-normal draw used
    int lambda = -1;
};

// Closed-form forward noising at timestep lambda in [0, T).
NoisedLatent f_noise(const Matrix& latent, int lambda, const NoiseSchedule& sched,
                     RngStream& rng);

// Frozen conditional UNet prediction for a noised latent; delegates to the
// base denoiser. Gradients flow into the conditioning vars only.
ad::Var unet_score(ad::Tape& t, const Backbones& nets, const NoisedLatent& noised,
                   ad::Var h_align, ad::Var h_palign);

// Temperature-gated feature fusion of the base and refiner predictions:
// (1 - eps) * base + eps * refiner. Endpoints return the inputs bitwise.
struct TFFOutput {
    Matrix h_sdxl;
    double epsilon = 0.0;
};

TFFOutput tff_fuse(const Matrix& pred_base, const Matrix& pred_refiner, double epsilon);

// One conditional prediction at (x, lambda); value-only.
using DenoiseFn = std::function<Matrix(const Matrix& x, int lambda)>;

// Ancestral reverse-diffusion loop. Both paths are evaluated every step and
// fused with tff_fuse; the fused output is treated as a noise prediction.
// `steps` in [1, T] thins the timestep ladder evenly. Returns the final
// latent (lat_h*lat_w x lat_c).
Matrix sample(const NoiseSchedule& sched, const DenoiseFn& base, const DenoiseFn& refiner,
              double epsilon, int steps, Eigen::Index lat_rows, Eigen::Index lat_cols,
              RngStream& rng);

// Convenience: wires the two frozen denoisers to their conditioning pairs.
Matrix sample_latent(const Backbones& nets, const NoiseSchedule& sched,
                     const AlignedEmbeddings& emb_base, const AlignedEmbeddings& emb_refiner,
                     double epsilon, int steps, RngStream& rng);

} // namespace glma
