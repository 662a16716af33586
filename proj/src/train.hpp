#pragma once

#include "adapter.hpp"
#include "backbones.hpp"
#include "config.hpp"
#include "diffusion.hpp"
#include "image.hpp"
#include "losses.hpp"

#include <string>
#include <vector>

namespace glma {

// Adam moment buffers, parallel to AdapterParams::named_blocks order.
struct AdamState {
    std::vector<Matrix> m, v;
    static AdamState init_like(const AdapterParams& params);
};

// One Adam update; `t` is the 1-based update ordinal for bias correction.
// lr = 0 leaves parameters bitwise unchanged (moments still advance).
void adam_update(AdapterParams& params, AdamState& adam, const std::vector<Matrix>& grads,
                 double lr, int64_t t, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);

// Everything the optimizer evolves, plus the cursors needed for an exact
// resume: re-deriving the training rng stream and discarding `rng_cursor`
// raw draws reproduces the uninterrupted run bitwise.
struct TrainState {
    AdapterParams adapter;
    AdamState adam;
    uint64_t step = 0; // completed optimizer updates
    uint32_t epoch = 0;
    double phi = 0.0;
    uint64_t rng_cursor = 0;
};

struct TrainSample {
    Image image;
    std::string caption;
};

// Per-sample quantities captured before the adapter runs, making the overall
// loss a deterministic function of the adapter parameters. Shared by the
// training step and the finite-difference gradient checks.
struct StepContext {
    struct Sample {
        Matrix hidden; // (length x d_model), layer fed to the adapter
        ReferenceEmbeddings ref;
        NoisedLatent noised;
    };
    std::vector<Sample> samples;
    double phi = 0.0;
};

StepContext build_step_context(const std::vector<TrainSample>& batch, const RunConfig& cfg,
                               const Backbones& nets, const NoiseSchedule& sched,
                               double phi, RngStream& rng);

struct LossEval {
    LossBreakdown breakdown;
    std::vector<Matrix> grads; // empty unless requested
};

// Batch-mean dual objective; gradients cover every adapter block.
LossEval eval_loss(const AdapterParams& params, const StepContext& ctx,
                   const RunConfig& cfg, const Backbones& nets, bool want_grads);

// One optimizer step over a batch. Draws lambda and noise from `rng`,
// updates state counters and phi, and returns the loss breakdown.
LossBreakdown train_step(const std::vector<TrainSample>& batch, TrainState& state,
                         const RunConfig& cfg, const Backbones& nets,
                         const NoiseSchedule& sched, RngStream& rng);

struct FreezeCheck {
    std::string component;
    uint64_t expected = 0;
    uint64_t actual = 0;
    bool ok = false;
};

// Recomputes every frozen component checksum against its construction-time
// value. `strict` converts any mismatch into a freeze error.
std::vector<FreezeCheck> enforce_freeze(const Backbones& nets, bool strict = false);

} // namespace glma
