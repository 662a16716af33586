#include "glma/glma.h"

#include "pipeline.hpp"

#include <cstring>
#include <memory>
#include <string>

using namespace glma;

struct glma_context {
    std::unique_ptr<Context> impl;
    std::string last_error;
};

namespace {

glma_status map_kind(ErrorKind k) {
    switch (k) {
        case ErrorKind::parse: return GLMA_ERR_PARSE;
        case ErrorKind::validation: return GLMA_ERR_VALIDATION;
        case ErrorKind::input: return GLMA_ERR_INPUT;
        case ErrorKind::numeric: return GLMA_ERR_NUMERIC;
        case ErrorKind::io: return GLMA_ERR_IO;
        case ErrorKind::format: return GLMA_ERR_FORMAT;
        case ErrorKind::config_hash: return GLMA_ERR_CONFIG_HASH;
        case ErrorKind::freeze: return GLMA_ERR_FREEZE;
        case ErrorKind::sequence: return GLMA_ERR_SEQUENCE;
        case ErrorKind::internal: return GLMA_ERR_INTERNAL;
    }
    return GLMA_ERR_INTERNAL;
}

void copy_str(char* dst, size_t cap, const std::string& src) {
    if (!dst || cap == 0) return;
    size_t n = std::min(cap - 1, src.size());
    std::memcpy(dst, src.data(), n);
    dst[n] = '\0';
}

// Runs `f`, translating exceptions into status codes and the context's
// last_error message. Nothing may throw across the C boundary.
template <typename F>
glma_status guarded(glma_context* ctx, F&& f) {
    if (!ctx) return GLMA_ERR_INVALID_ARG;
    ctx->last_error.clear();
    try {
        f();
        return GLMA_OK;
    } catch (const Error& e) {
        ctx->last_error = e.what();
        return map_kind(e.kind());
    } catch (const std::exception& e) {
        ctx->last_error = e.what();
        return GLMA_ERR_INTERNAL;
    } catch (...) {
        ctx->last_error = "unknown failure";
        return GLMA_ERR_INTERNAL;
    }
}

std::string opt_str(const char* s) { return s ? std::string(s) : std::string(); }

RunConfig config_from_options(const glma_options* opts) {
    RunConfig cfg;
    if (opts && opts->config_path && opts->config_path[0] != '\0')
        cfg = load_config(opts->config_path);
    if (opts && opts->profile && opts->profile[0] != '\0') {
        std::string p = opts->profile;
        if (p == "desk") cfg.profile = ScaleProfile::desk();
        else if (p == "paper") cfg.profile = ScaleProfile::paper();
        else fail(ErrorKind::input, "unknown profile '" + p + "' (expected desk or paper)");
    }
    if (opts && opts->has_seed) cfg.seed = opts->seed;
    cfg.validate();
    return cfg;
}

} // namespace

extern "C" {

const char* glma_version(void) { return "0.1.0"; }

glma_status glma_context_create(const glma_options* opts, glma_context** out_ctx,
                                char* err, size_t err_cap) {
    if (err && err_cap) err[0] = '\0';
    if (!out_ctx) return GLMA_ERR_INVALID_ARG;
    *out_ctx = nullptr;
    try {
        RunConfig cfg = config_from_options(opts);
        auto ctx = std::make_unique<glma_context>();
        ctx->impl = std::make_unique<Context>(cfg);
        *out_ctx = ctx.release();
        return GLMA_OK;
    } catch (const Error& e) {
        copy_str(err, err_cap, e.what());
        return map_kind(e.kind());
    } catch (const std::exception& e) {
        copy_str(err, err_cap, e.what());
        return GLMA_ERR_INTERNAL;
    } catch (...) {
        copy_str(err, err_cap, "unknown failure");
        return GLMA_ERR_INTERNAL;
    }
}

void glma_context_destroy(glma_context* ctx) { delete ctx; }

const char* glma_last_error(const glma_context* ctx) {
    return ctx ? ctx->last_error.c_str() : "";
}

glma_status glma_load_adapter(glma_context* ctx, const char* ckpt_path, int force) {
    return guarded(ctx, [&] {
        if (!ckpt_path) fail(ErrorKind::input, "checkpoint path is null");
        ctx->impl->load_adapter(ckpt_path, force != 0);
    });
}

glma_status glma_train(glma_context* ctx, const glma_train_params* params,
                       glma_train_result* out) {
    return guarded(ctx, [&] {
        if (!params || !out) fail(ErrorKind::input, "null params or result");
        TrainOptions topts;
        topts.manifest_path = opt_str(params->manifest_path);
        topts.out_dir = opt_str(params->out_dir);
        topts.steps = params->steps;
        topts.ckpt_every = params->ckpt_every;
        topts.resume_path = opt_str(params->resume_path);
        topts.force = params->force != 0;
        topts.synth_n = params->synth_n > 0 ? params->synth_n : 8;

        TrainSummary s = train_run(*ctx->impl, topts);
        *out = glma_train_result{};
        out->steps_run = s.steps_run;
        out->final_step = s.final_step;
        out->final_epoch = s.final_epoch;
        out->final_phi = s.final_phi;
        out->first_l_align = s.first.l_align;
        out->first_l_ddpm = s.first.l_ddpm;
        out->first_l_overall = s.first.l_overall;
        out->last_l_align = s.last.l_align;
        out->last_l_ddpm = s.last.l_ddpm;
        out->last_l_overall = s.last.l_overall;
        out->dataset_size = s.dataset_size;
        copy_str(out->metrics_path, sizeof(out->metrics_path), s.metrics_path);
        copy_str(out->checkpoint_path, sizeof(out->checkpoint_path), s.checkpoint_path);
    });
}

glma_status glma_generate(glma_context* ctx, const glma_generate_params* params,
                          glma_generate_result* out) {
    return guarded(ctx, [&] {
        if (!params || !out) fail(ErrorKind::input, "null params or result");
        TaskKind task = parse_task(opt_str(params->task));
        GenerateOptions gopts;
        gopts.prompt = opt_str(params->prompt);
        gopts.image_path = opt_str(params->image_path);
        if (params->has_epsilon) gopts.epsilon = params->epsilon;
        gopts.max_sentences = params->max_sentences;
        gopts.out_dir = opt_str(params->out_dir);

        GenerateSummary s;
        switch (task) {
            case TaskKind::text_to_image:
                s = generate_run(*ctx->impl, gopts);
                break;
            case TaskKind::storytelling:
                s = story_run(*ctx->impl, gopts);
                break;
            default:
                s = edit_run(*ctx->impl, task, gopts);
                break;
        }
        *out = glma_generate_result{};
        out->n_images = s.n_images;
        out->epsilon = s.epsilon;
        out->transcript_bytes = s.transcript.size();
        copy_str(out->first_image_path, sizeof(out->first_image_path),
                 s.image_paths.empty() ? std::string() : s.image_paths.front());
        copy_str(out->transcript_path, sizeof(out->transcript_path), s.transcript_path);
    });
}

glma_status glma_eval(glma_context* ctx, const glma_eval_params* params,
                      glma_eval_result* out) {
    return guarded(ctx, [&] {
        if (!params || !out) fail(ErrorKind::input, "null params or result");
        EvalRunSummary s = eval_run(*ctx->impl, opt_str(params->gen_manifest),
                                    opt_str(params->ref_manifest), opt_str(params->out_dir));
        *out = glma_eval_result{};
        out->fid_stub = s.report.fid_stub;
        out->clip_stub_mean = s.report.clip_stub_mean;
        out->n = s.report.n;
        copy_str(out->record_path, sizeof(out->record_path), s.record_path);
    });
}

glma_status glma_layer_sweep(glma_context* ctx, const glma_sweep_params* params,
                             double* align_losses, glma_sweep_result* out) {
    return guarded(ctx, [&] {
        if (!params || !out) fail(ErrorKind::input, "null params or result");
        if (!params->offsets || params->n_offsets < 1)
            fail(ErrorKind::input, "layer sweep needs at least one offset");
        std::vector<int> offsets(params->offsets, params->offsets + params->n_offsets);
        SweepRunSummary s =
            sweep_run(*ctx->impl, opt_str(params->prompt), offsets, opt_str(params->out_dir));
        *out = glma_sweep_result{};
        out->n_entries = static_cast<int>(s.report.entries.size());
        copy_str(out->table_path, sizeof(out->table_path), s.table_path);
        if (align_losses)
            for (size_t i = 0; i < s.report.entries.size(); ++i)
                align_losses[i] = s.report.entries[i].align_loss;
    });
}

glma_status glma_synth_data(glma_context* ctx, int count, const char* out_dir,
                            glma_synth_result* out) {
    return guarded(ctx, [&] {
        if (!out) fail(ErrorKind::input, "null result");
        SynthSummary s = synth_run(*ctx->impl, count, opt_str(out_dir));
        *out = glma_synth_result{};
        out->count = s.count;
        copy_str(out->manifest_path, sizeof(out->manifest_path), s.manifest_path);
    });
}

glma_status glma_inspect_checkpoint(glma_context* ctx, const char* path,
                                    glma_ckpt_info* out) {
    return guarded(ctx, [&] {
        if (!path || !out) fail(ErrorKind::input, "null path or result");
        CheckpointHeader h = read_checkpoint_header(path);
        *out = glma_ckpt_info{};
        out->version = h.version;
        out->config_hash = h.config_hash;
        out->seed = h.seed;
        out->epoch = h.epoch;
        out->step = h.step;
        out->phi = h.phi;
        out->rng_cursor = h.rng_cursor;
        out->n_blocks = h.n_blocks;
        out->d_model = h.profile.d_model;
        out->n_layers = h.profile.n_layers;
        out->length = h.profile.length;
        out->seq_sd = h.profile.seq_sd;
        out->d_sd = h.profile.d_sd;
        out->d_pool = h.profile.d_pool;
        out->lat_c = h.profile.lat_c;
        out->lat_h = h.profile.lat_h;
        out->lat_w = h.profile.lat_w;
        out->timesteps = h.profile.timesteps;
        out->vocab = h.profile.vocab;
        out->img_size = h.profile.img_size;
    });
}

} // extern "C"
