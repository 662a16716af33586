// Command-line front end. Links only the public C API; the one-line summary
// each subcommand prints is deterministic for a fixed (config, seed).

#include "glma/glma.h"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace {

const char* status_name(glma_status s) {
    switch (s) {
        case GLMA_OK: return "ok";
        case GLMA_ERR_INVALID_ARG: return "invalid_arg";
        case GLMA_ERR_PARSE: return "parse";
        case GLMA_ERR_VALIDATION: return "validation";
        case GLMA_ERR_INPUT: return "input";
        case GLMA_ERR_IO: return "io";
        case GLMA_ERR_FORMAT: return "format";
        case GLMA_ERR_CONFIG_HASH: return "config_hash";
        case GLMA_ERR_NUMERIC: return "numeric";
        case GLMA_ERR_FREEZE: return "freeze";
        case GLMA_ERR_SEQUENCE: return "sequence";
        case GLMA_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

struct ContextHandle {
    glma_context* ctx = nullptr;
    ~ContextHandle() { glma_context_destroy(ctx); }
};

// Default output root: --out flag, else $GLMA_OUT_ROOT/<subcommand>, else
// ./out/<subcommand>.
std::string resolve_out(const std::string& flag, const std::string& sub) {
    if (!flag.empty()) return flag;
    const char* root = std::getenv("GLMA_OUT_ROOT");
    std::string base = (root && *root) ? root : "out";
    return base + "/" + sub;
}

int fail_status(const glma_context* ctx, glma_status s) {
    std::fprintf(stderr, "error (%s): %s\n", status_name(s),
                 ctx ? glma_last_error(ctx) : "");
    return static_cast<int>(s);
}

int fail_create(glma_status s, const char* msg) {
    std::fprintf(stderr, "error (%s): %s\n", status_name(s), msg);
    return static_cast<int>(s);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chat-conditioned diffusion adapter pipeline"};
    app.require_subcommand(1);
    app.fallthrough(true);

    std::string config_path, profile, out_dir;
    unsigned long long seed = 0;
    bool has_seed = false;
    app.add_option("--config", config_path, "Config file (key = value lines)");
    app.add_option("--profile", profile, "Dimension profile")
        ->check(CLI::IsMember({"desk", "paper"}));
    app.add_option("--seed", seed, "Seed override")->each([&](const std::string&) {
        has_seed = true;
    });
    app.add_option("--out", out_dir, "Output directory (default $GLMA_OUT_ROOT/<cmd>)");

    // train
    auto* train = app.add_subcommand("train", "Train the adapter");
    std::string manifest, resume, ckpt_path;
    int steps = 0, ckpt_every = 0, synth_n = 8;
    bool force = false;
    train->add_option("--manifest", manifest, "Dataset manifest (default: synthesize)");
    train->add_option("--steps", steps, "Total optimizer step target");
    train->add_option("--ckpt-every", ckpt_every, "Periodic checkpoint interval");
    train->add_option("--resume", resume, "Checkpoint to resume from");
    train->add_flag("--force", force, "Accept checkpoints from a different config");
    train->add_option("--synth-n", synth_n, "Synthetic dataset size when no manifest");

    // generation family
    std::string prompt, instruction, image_path, edit_kind = "edit";
    double epsilon = 0.0;
    bool has_epsilon = false;
    int max_sentences = 0;
    auto add_eps = [&](CLI::App* cmd) {
        cmd->add_option("--epsilon", epsilon, "Fusion gate override in [0,1]")
            ->each([&](const std::string&) { has_epsilon = true; });
        cmd->add_option("--ckpt", ckpt_path, "Adapter checkpoint to load");
        cmd->add_flag("--force", force, "Accept checkpoints from a different config");
    };
    auto* generate = app.add_subcommand("generate", "Text-to-image generation");
    generate->add_option("--prompt", prompt, "Text prompt")->required();
    add_eps(generate);

    auto* edit = app.add_subcommand("edit", "Instruction-based image editing");
    edit->add_option("--image", image_path, "Source image (PNG)")->required();
    edit->add_option("--instruction", instruction, "Edit instruction")->required();
    edit->add_option("--kind", edit_kind, "Edit subtype")
        ->check(CLI::IsMember({"edit", "layout", "color_texture"}));
    add_eps(edit);

    auto* story = app.add_subcommand("story", "Interleaved storytelling");
    story->add_option("--prompt", prompt, "Story prompt")->required();
    story->add_option("--max-sentences", max_sentences, "Image budget (0 = unlimited)");
    add_eps(story);

    // eval
    auto* eval = app.add_subcommand("eval", "Score generated images");
    std::string gen_manifest, ref_manifest;
    eval->add_option("--gen-manifest", gen_manifest, "Generated image manifest")->required();
    eval->add_option("--ref-manifest", ref_manifest, "Reference image manifest")->required();

    // layer-sweep
    auto* sweep = app.add_subcommand("layer-sweep", "Hidden-layer depth probe");
    std::vector<int> offsets{0, 1, 2, 4};
    sweep->add_option("--prompt", prompt, "Probe prompt")->required();
    sweep->add_option("--offsets", offsets, "Layer offsets k (adapter reads L-k)");
    sweep->add_option("--ckpt", ckpt_path, "Adapter checkpoint to load");
    sweep->add_flag("--force", force, "Accept checkpoints from a different config");

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "Generate a synthetic corpus");
    int synth_count = 8;
    synth->add_option("--n", synth_count, "Record count");

    // inspect-ckpt
    auto* inspect = app.add_subcommand("inspect-ckpt", "Print checkpoint header");
    std::string inspect_path;
    inspect->add_option("file", inspect_path, "Checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n\n%s", e.what(), app.help().c_str());
        return 2;
    }

    glma_options opts{};
    opts.config_path = config_path.c_str();
    opts.profile = profile.c_str();
    opts.has_seed = has_seed ? 1 : 0;
    opts.seed = seed;

    char err[512];
    ContextHandle handle;
    glma_status st = glma_context_create(&opts, &handle.ctx, err, sizeof(err));
    if (st != GLMA_OK) return fail_create(st, err);
    glma_context* ctx = handle.ctx;

    if (!ckpt_path.empty()) {
        st = glma_load_adapter(ctx, ckpt_path.c_str(), force ? 1 : 0);
        if (st != GLMA_OK) return fail_status(ctx, st);
    }

    if (*train) {
        std::string out = resolve_out(out_dir, "train");
        glma_train_params p{};
        p.manifest_path = manifest.c_str();
        p.out_dir = out.c_str();
        p.steps = steps;
        p.ckpt_every = ckpt_every;
        p.resume_path = resume.c_str();
        p.force = force ? 1 : 0;
        p.synth_n = synth_n;
        glma_train_result r{};
        st = glma_train(ctx, &p, &r);
        if (st != GLMA_OK) return fail_status(ctx, st);
        std::printf("train steps_run=%llu final_step=%llu epoch=%u phi=%.6g "
                    "l_overall=%.6g l_align=%.6g l_ddpm=%.6g n=%d metrics=%s ckpt=%s\n",
                    r.steps_run, r.final_step, r.final_epoch, r.final_phi,
                    r.last_l_overall, r.last_l_align, r.last_l_ddpm, r.dataset_size,
                    r.metrics_path, r.checkpoint_path);
        return 0;
    }

    if (*generate || *edit || *story) {
        const char* sub = *generate ? "generate" : (*edit ? "edit" : "story");
        std::string out = resolve_out(out_dir, sub);
        glma_generate_params p{};
        std::string task = *generate ? "t2i" : (*story ? "story" : edit_kind);
        p.task = task.c_str();
        p.prompt = *edit ? instruction.c_str() : prompt.c_str();
        p.image_path = image_path.c_str();
        p.out_dir = out.c_str();
        p.has_epsilon = has_epsilon ? 1 : 0;
        p.epsilon = epsilon;
        p.max_sentences = max_sentences;
        glma_generate_result r{};
        st = glma_generate(ctx, &p, &r);
        if (st != GLMA_OK) return fail_status(ctx, st);
        if (*story)
            std::printf("story images=%d epsilon=%.6g transcript_bytes=%llu "
                        "transcript=%s out=%s\n",
                        r.n_images, r.epsilon, r.transcript_bytes, r.transcript_path,
                        out.c_str());
        else
            std::printf("%s images=%d epsilon=%.6g image=%s\n", sub, r.n_images,
                        r.epsilon, r.first_image_path);
        return 0;
    }

    if (*eval) {
        std::string out = resolve_out(out_dir, "eval");
        glma_eval_params p{};
        p.gen_manifest = gen_manifest.c_str();
        p.ref_manifest = ref_manifest.c_str();
        p.out_dir = out.c_str();
        glma_eval_result r{};
        st = glma_eval(ctx, &p, &r);
        if (st != GLMA_OK) return fail_status(ctx, st);
        std::printf("eval fid_stub=%.17g clip_stub_mean=%.17g n=%d record=%s\n",
                    r.fid_stub, r.clip_stub_mean, r.n, r.record_path);
        return 0;
    }

    if (*sweep) {
        std::string out = resolve_out(out_dir, "layer-sweep");
        glma_sweep_params p{};
        p.prompt = prompt.c_str();
        p.offsets = offsets.data();
        p.n_offsets = static_cast<int>(offsets.size());
        p.out_dir = out.c_str();
        std::vector<double> losses(offsets.size(), 0.0);
        glma_sweep_result r{};
        st = glma_layer_sweep(ctx, &p, losses.data(), &r);
        if (st != GLMA_OK) return fail_status(ctx, st);
        std::string pairs;
        char buf[64];
        for (size_t i = 0; i < offsets.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%s%d:%.6g", i ? "," : "", offsets[i],
                          losses[i]);
            pairs += buf;
        }
        std::printf("layer-sweep entries=%d align_loss[offset]=%s table=%s\n",
                    r.n_entries, pairs.c_str(), r.table_path);
        return 0;
    }

    if (*synth) {
        std::string out = resolve_out(out_dir, "synth-data");
        glma_synth_result r{};
        st = glma_synth_data(ctx, synth_count, out.c_str(), &r);
        if (st != GLMA_OK) return fail_status(ctx, st);
        std::printf("synth-data n=%d manifest=%s\n", r.count, r.manifest_path);
        return 0;
    }

    if (*inspect) {
        glma_ckpt_info info{};
        st = glma_inspect_checkpoint(ctx, inspect_path.c_str(), &info);
        if (st != GLMA_OK) return fail_status(ctx, st);
        std::printf("ckpt version=%u step=%llu epoch=%u phi=%.17g seed=%llu "
                    "config_hash=%016llx rng_cursor=%llu blocks=%u "
                    "profile=d%d/L%d/len%d/seq%d/sd%d/pool%d/lat%dx%dx%d/T%d/v%d/img%d\n",
                    info.version, info.step, info.epoch, info.phi, info.seed,
                    info.config_hash, info.rng_cursor, info.n_blocks, info.d_model,
                    info.n_layers, info.length, info.seq_sd, info.d_sd, info.d_pool,
                    info.lat_c, info.lat_h, info.lat_w, info.timesteps, info.vocab,
                    info.img_size);
        return 0;
    }

    std::fprintf(stderr, "%s", app.help().c_str());
    return 2;
}
