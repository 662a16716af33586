#include "pipeline.hpp"

#include "image_io.hpp"
#include "losses.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace glma {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create directory '" + dir + "': " + ec.message());
}

std::string join(const std::string& dir, const std::string& leaf) {
    return (fs::path(dir) / leaf).string();
}

std::string zero_pad(uint64_t v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%0*llu", width, static_cast<unsigned long long>(v));
    return buf;
}

TrainState fresh_state(const RunConfig& cfg) {
    RngStream init(cfg.seed, "adapter_init");
    TrainState state;
    state.adapter = init_adapter(cfg, init);
    state.adam = AdamState::init_like(state.adapter);
    state.phi = cfg.phi0;
    return state;
}

// Dominant frozen-weight terms only; a coarse lower bound used to refuse
// profiles whose construction would exhaust desk memory (the full-scale
// registry is documentation, not a runnable target here).
uint64_t frozen_weight_bytes_estimate(const ScaleProfile& p) {
    uint64_t d = static_cast<uint64_t>(p.d_model);
    uint64_t params = 2 * static_cast<uint64_t>(p.vocab) * d   // embed + unembed
                      + static_cast<uint64_t>(p.n_layers) * 8 * d * d // attn + ffn
                      + static_cast<uint64_t>(p.vocab) * p.d_sd;
    return 8 * params;
}

constexpr uint64_t kMaxFrozenBytes = 1ull << 32; // 4 GiB

const RunConfig& check_runnable(const RunConfig& cfg) {
    cfg.validate();
    uint64_t est = frozen_weight_bytes_estimate(cfg.profile);
    if (est > kMaxFrozenBytes)
        fail(ErrorKind::validation,
             "profile needs at least " + std::to_string(est >> 30) +
                 " GiB of frozen weights; the full-scale profile is a dimension "
                 "reference, run the desk profile instead");
    return cfg;
}

} // namespace

Context::Context(const RunConfig& config)
    : cfg(check_runnable(config)), nets(cfg.profile, cfg.seed), state(fresh_state(cfg)) {}

void Context::load_adapter(const std::string& ckpt_path, bool force) {
    state = load_checkpoint(ckpt_path, cfg, force);
}

std::vector<TrainSample> load_samples(const Manifest& manifest, const ScaleProfile& prof) {
    std::vector<TrainSample> samples;
    samples.reserve(manifest.records.size());
    for (size_t i = 0; i < manifest.records.size(); ++i) {
        TrainSample s;
        s.image = read_png(manifest.resolve(i));
        s.caption = manifest.records[i].caption;
        if (s.image.h != prof.img_size || s.image.w != prof.img_size)
            fail(ErrorKind::input, "record " + std::to_string(i) + " image '" +
                                       manifest.resolve(i) + "' is " +
                                       std::to_string(s.image.w) + "x" +
                                       std::to_string(s.image.h) + ", profile expects " +
                                       std::to_string(prof.img_size) + "x" +
                                       std::to_string(prof.img_size));
        samples.push_back(std::move(s));
    }
    return samples;
}

std::vector<size_t> epoch_permutation(size_t n, uint64_t seed, uint32_t epoch) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    RngStream rng(seed, "shuffle/" + std::to_string(epoch));
    for (size_t i = n; i > 1; --i) {
        size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int>(i)));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

TrainSummary train_run(Context& ctx, const TrainOptions& opts) {
    if (opts.out_dir.empty()) fail(ErrorKind::input, "train needs an output directory");
    ensure_dir(opts.out_dir);

    Manifest manifest;
    if (!opts.manifest_path.empty()) {
        manifest = load_manifest(opts.manifest_path);
    } else {
        if (opts.synth_n < 1)
            fail(ErrorKind::input, "synthetic dataset size must be at least 1");
        RngStream synth_rng(ctx.cfg.seed, "synth");
        manifest = synth_dataset(join(opts.out_dir, "synth"), opts.synth_n,
                                 ctx.cfg.profile.img_size, synth_rng);
    }
    std::vector<TrainSample> samples = load_samples(manifest, ctx.cfg.profile);
    size_t n = samples.size();
    size_t batch_size = static_cast<size_t>(ctx.cfg.batch_size);
    size_t steps_per_epoch = (n + batch_size - 1) / batch_size;

    bool resuming = !opts.resume_path.empty();
    if (resuming)
        ctx.state = load_checkpoint(opts.resume_path, ctx.cfg, opts.force);
    else
        ctx.state = fresh_state(ctx.cfg);

    uint64_t total_steps = opts.steps > 0
                               ? static_cast<uint64_t>(opts.steps)
                               : steps_per_epoch * static_cast<uint64_t>(ctx.cfg.epochs);

    RngStream train_rng(ctx.cfg.seed, "train");
    train_rng.discard_raw(ctx.state.rng_cursor);

    NoiseSchedule sched = build_schedule(ctx.cfg.profile.timesteps, ctx.cfg.beta_start,
                                         ctx.cfg.beta_end);

    std::string metrics_path = join(opts.out_dir, "metrics.jsonl");
    std::ofstream metrics(metrics_path,
                          resuming ? std::ios::app : std::ios::trunc);
    if (!metrics) fail(ErrorKind::io, "cannot open metrics file '" + metrics_path + "'");

    TrainSummary summary;
    summary.dataset_size = static_cast<int>(n);
    summary.metrics_path = metrics_path;

    std::vector<size_t> perm;
    uint32_t perm_epoch = 0;
    bool have_perm = false;
    bool have_first = false;

    while (ctx.state.step < total_steps) {
        uint64_t s = ctx.state.step;
        uint32_t epoch = static_cast<uint32_t>(s / steps_per_epoch);
        if (!have_perm || perm_epoch != epoch) {
            perm = epoch_permutation(n, ctx.cfg.seed, epoch);
            perm_epoch = epoch;
            have_perm = true;
        }
        ctx.state.epoch = epoch;
        ctx.state.phi = phi_schedule(static_cast<int>(epoch), ctx.cfg.phi0,
                                     ctx.cfg.phi_decay);

        size_t slot = static_cast<size_t>(s % steps_per_epoch);
        size_t begin = slot * batch_size;
        size_t end = std::min(n, begin + batch_size);
        std::vector<TrainSample> batch;
        batch.reserve(end - begin);
        for (size_t i = begin; i < end; ++i) batch.push_back(samples[perm[i]]);

        auto t0 = std::chrono::steady_clock::now();
        LossBreakdown bd = train_step(batch, ctx.state, ctx.cfg, ctx.nets, sched, train_rng);
        auto t1 = std::chrono::steady_clock::now();
        int64_t wall_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();

        ordered_json line;
        line["step"] = ctx.state.step; // 1-based: completed updates
        line["epoch"] = epoch;
        line["phi"] = bd.phi;
        line["l_align"] = bd.l_align;
        line["l_ddpm"] = bd.l_ddpm;
        line["l_overall"] = bd.l_overall;
        line["wall_ms"] = wall_ms;
        metrics << line.dump() << "\n";
        if (!metrics) fail(ErrorKind::io, "write failure on '" + metrics_path + "'");

        if (!have_first) {
            summary.first = bd;
            have_first = true;
        }
        summary.last = bd;
        summary.steps_run += 1;

        if (opts.ckpt_every > 0 &&
            ctx.state.step % static_cast<uint64_t>(opts.ckpt_every) == 0) {
            save_checkpoint(join(opts.out_dir, "step_" + zero_pad(ctx.state.step, 6) + ".ckpt"),
                            ctx.state, ctx.cfg);
        }
    }
    metrics.flush();

    // The adapter trains; everything else must come out bitwise untouched.
    enforce_freeze(ctx.nets, true);

    summary.final_step = ctx.state.step;
    summary.final_epoch = ctx.state.epoch;
    summary.final_phi = ctx.state.phi;
    summary.checkpoint_path = join(opts.out_dir, "final.ckpt");
    save_checkpoint(summary.checkpoint_path, ctx.state, ctx.cfg);
    return summary;
}

namespace {

GenerateSummary run_task(Context& ctx, TaskKind task,
                         const std::vector<ConversationTurn>& conversation,
                         const GenerateOptions& opts, const std::string& stem) {
    if (opts.out_dir.empty()) fail(ErrorKind::input, "generation needs an output directory");
    ensure_dir(opts.out_dir);

    InterleaveOptions iopts;
    iopts.epsilon = opts.epsilon;
    iopts.max_sentences = opts.max_sentences;
    InterleaveResult res =
        interleave_generate(conversation, task, ctx.cfg, ctx.nets, ctx.state.adapter, iopts);

    GenerateSummary out;
    out.n_images = res.n_images;
    out.epsilon = res.epsilon;
    out.transcript = res.transcript;

    int img_index = 0;
    for (const GenerationEvent& ev : res.events) {
        if (ev.kind != GenerationEvent::Kind::image) continue;
        std::string path =
            res.n_images == 1 && task != TaskKind::storytelling
                ? join(opts.out_dir, stem + ".png")
                : join(opts.out_dir, stem + "_" + zero_pad(img_index, 3) + ".png");
        write_png(path, ev.image);
        out.image_paths.push_back(path);
        ++img_index;
    }

    if (task == TaskKind::storytelling) {
        out.transcript_path = join(opts.out_dir, stem + "_transcript.txt");
        std::ofstream tf(out.transcript_path, std::ios::trunc | std::ios::binary);
        if (!tf) fail(ErrorKind::io, "cannot write transcript '" + out.transcript_path + "'");
        tf << res.transcript;
    }
    return out;
}

} // namespace

GenerateSummary generate_run(Context& ctx, const GenerateOptions& opts) {
    std::vector<ConversationTurn> conv{{opts.prompt, std::nullopt}};
    return run_task(ctx, TaskKind::text_to_image, conv, opts, "generate");
}

GenerateSummary edit_run(Context& ctx, TaskKind kind, const GenerateOptions& opts) {
    if (kind != TaskKind::edit_default && kind != TaskKind::edit_layout &&
        kind != TaskKind::edit_color_texture)
        fail(ErrorKind::input, "edit_run needs an edit task kind");
    if (opts.image_path.empty()) fail(ErrorKind::input, "edit needs a source image");
    Image src = read_png(opts.image_path);
    std::vector<ConversationTurn> conv{{opts.prompt, src}};
    return run_task(ctx, kind, conv, opts, "edit");
}

GenerateSummary story_run(Context& ctx, const GenerateOptions& opts) {
    std::vector<ConversationTurn> conv{{opts.prompt, std::nullopt}};
    return run_task(ctx, TaskKind::storytelling, conv, opts, "story");
}

EvalRunSummary eval_run(Context& ctx, const std::string& gen_manifest,
                        const std::string& ref_manifest, const std::string& out_dir) {
    if (out_dir.empty()) fail(ErrorKind::input, "eval needs an output directory");
    ensure_dir(out_dir);

    Manifest gen = load_manifest(gen_manifest);
    Manifest ref = load_manifest(ref_manifest);
    std::vector<TrainSample> gen_samples = load_samples(gen, ctx.cfg.profile);
    std::vector<TrainSample> ref_samples = load_samples(ref, ctx.cfg.profile);

    std::vector<Image> gen_images, ref_images;
    std::vector<std::string> captions;
    for (auto& s : gen_samples) {
        gen_images.push_back(std::move(s.image));
        captions.push_back(s.caption);
    }
    for (auto& s : ref_samples) ref_images.push_back(std::move(s.image));

    EvalRunSummary out;
    out.report = evaluate_sets(ctx.nets, gen_images, captions, ref_images);
    out.record_path = (fs::path(out_dir) / "eval.jsonl").string();

    ordered_json rec;
    rec["fid_stub"] = out.report.fid_stub;
    rec["clip_stub_mean"] = out.report.clip_stub_mean;
    rec["n"] = out.report.n;
    std::ofstream f(out.record_path, std::ios::trunc);
    if (!f) fail(ErrorKind::io, "cannot write eval record '" + out.record_path + "'");
    f << rec.dump() << "\n";
    return out;
}

SweepRunSummary sweep_run(Context& ctx, const std::string& prompt,
                          const std::vector<int>& offsets, const std::string& out_dir) {
    if (out_dir.empty()) fail(ErrorKind::input, "layer sweep needs an output directory");
    ensure_dir(out_dir);

    SweepRunSummary out;
    out.report = layer_sweep(prompt, offsets, ctx.cfg, ctx.nets, ctx.state.adapter);

    out.table_path = join(out_dir, "sweep_table.tsv");
    std::ofstream table(out.table_path, std::ios::trunc);
    if (!table) fail(ErrorKind::io, "cannot write sweep table '" + out.table_path + "'");
    table << "offset\tlayer\talign_loss\n";
    char buf[64];
    for (const SweepEntry& e : out.report.entries) {
        std::string path = join(out_dir, "sweep_L-" + std::to_string(e.offset) + ".png");
        write_png(path, e.image);
        out.image_paths.push_back(path);
        std::snprintf(buf, sizeof(buf), "%.17g", e.align_loss);
        table << e.offset << "\t" << e.layer << "\t" << buf << "\n";
    }
    return out;
}

SynthSummary synth_run(Context& ctx, int count, const std::string& out_dir) {
    if (out_dir.empty()) fail(ErrorKind::input, "synth-data needs an output directory");
    if (count < 1) fail(ErrorKind::input, "synthetic dataset size must be at least 1");
    RngStream rng(ctx.cfg.seed, "synth");
    Manifest m = synth_dataset(out_dir, count, ctx.cfg.profile.img_size, rng);
    SynthSummary out;
    out.count = static_cast<int>(m.records.size());
    out.manifest_path = join(out_dir, "manifest.jsonl");
    return out;
}

} // namespace glma
