#pragma once

#include "backbones.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "eval.hpp"
#include "policies.hpp"
#include "train.hpp"

#include <optional>
#include <string>
#include <vector>

namespace glma {

// One fully wired run: config, frozen nets, and the trainable state. The
// construction is deterministic in (cfg, cfg.seed); every operation below is
// deterministic given the context and its options.
struct Context {
    RunConfig cfg;
    Backbones nets;
    TrainState state;

    explicit Context(const RunConfig& config);

    // Replaces the trainable state with a checkpoint's.
    void load_adapter(const std::string& ckpt_path, bool force);
};

struct TrainOptions {
    std::string manifest_path; // empty: synthesize a corpus under out_dir/synth
    std::string out_dir;
    int steps = 0;       // total step target; 0 = epochs * steps_per_epoch
    int ckpt_every = 0;  // 0 = final checkpoint only
    std::string resume_path;
    bool force = false;  // accept a checkpoint written under a different config
    int synth_n = 8;
};

struct TrainSummary {
    uint64_t steps_run = 0;
    uint64_t final_step = 0;
    uint32_t final_epoch = 0;
    double final_phi = 0.0;
    LossBreakdown first;
    LossBreakdown last;
    int dataset_size = 0;
    std::string metrics_path;
    std::string checkpoint_path;
};

TrainSummary train_run(Context& ctx, const TrainOptions& opts);

struct GenerateOptions {
    std::string prompt;          // generate/story text, edit instruction
    std::string image_path;      // edit source image
    std::optional<double> epsilon;
    int max_sentences = 0;       // story budget; 0 = unlimited
    std::string out_dir;
};

struct GenerateSummary {
    int n_images = 0;
    double epsilon = 0.0;
    std::string transcript;
    std::vector<std::string> image_paths;
    std::string transcript_path; // storytelling only
};

GenerateSummary generate_run(Context& ctx, const GenerateOptions& opts);
GenerateSummary edit_run(Context& ctx, TaskKind kind, const GenerateOptions& opts);
GenerateSummary story_run(Context& ctx, const GenerateOptions& opts);

struct EvalRunSummary {
    EvalReport report;
    std::string record_path;
};

EvalRunSummary eval_run(Context& ctx, const std::string& gen_manifest,
                        const std::string& ref_manifest, const std::string& out_dir);

struct SweepRunSummary {
    SweepReport report;
    std::vector<std::string> image_paths;
    std::string table_path;
};

SweepRunSummary sweep_run(Context& ctx, const std::string& prompt,
                          const std::vector<int>& offsets, const std::string& out_dir);

struct SynthSummary {
    int count = 0;
    std::string manifest_path;
};

SynthSummary synth_run(Context& ctx, int count, const std::string& out_dir);

// Loads images for every record; each must match the profile's image size.
std::vector<TrainSample> load_samples(const Manifest& manifest, const ScaleProfile& prof);

// Stateless per-epoch shuffle: a Fisher-Yates permutation drawn from the
// stream "shuffle/<epoch>", so a resumed run rebuilds the same order.
std::vector<size_t> epoch_permutation(size_t n, uint64_t seed, uint32_t epoch);

} // namespace glma
