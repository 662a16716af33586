/* C interface to the adapter-alignment pipeline. All functions are
 * synchronous and deterministic for a fixed (config, seed). A context owns
 * the frozen networks plus one trainable adapter state; contexts are
 * independent and may be used from different threads, but a single context
 * must not be shared across threads concurrently.
 *
 * Every operation returns GLMA_OK or a category from glma_status; the
 * human-readable detail of the most recent failure on a context is available
 * through glma_last_error(). Paths written into result structs are truncated
 * to the buffer size if necessary (never unterminated). */

#ifndef GLMA_H
#define GLMA_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct glma_context glma_context;

typedef enum glma_status {
    GLMA_OK = 0,
    GLMA_ERR_INVALID_ARG = 1, /* null pointer / malformed call */
    GLMA_ERR_PARSE = 2,       /* malformed config, manifest or input text */
    GLMA_ERR_VALIDATION = 3,  /* well-formed input with an illegal value */
    GLMA_ERR_INPUT = 4,       /* bad runtime argument (shape, range, content) */
    GLMA_ERR_IO = 5,          /* filesystem failure */
    GLMA_ERR_FORMAT = 6,      /* binary container violation (magic, version,
                                 truncation, corruption) */
    GLMA_ERR_CONFIG_HASH = 7, /* checkpoint written under a different config */
    GLMA_ERR_NUMERIC = 8,     /* non-finite value where finite is required */
    GLMA_ERR_FREEZE = 9,      /* frozen-weight checksum mismatch */
    GLMA_ERR_SEQUENCE = 10,   /* operation out of order */
    GLMA_ERR_INTERNAL = 11
} glma_status;

/* Library version, "major.minor.patch". */
const char* glma_version(void);

typedef struct glma_options {
    const char* config_path; /* NULL or "": built-in defaults */
    const char* profile;     /* NULL: as configured; else "desk" or "paper" */
    int has_seed;            /* nonzero: `seed` overrides the config's seed */
    unsigned long long seed;
} glma_options;

/* Creates a fully wired context (frozen nets + fresh adapter). On failure
 * returns the error category and, when err/err_cap are provided, copies the
 * detail message into err. opts may be NULL for all-defaults. */
glma_status glma_context_create(const glma_options* opts, glma_context** out_ctx,
                                char* err, size_t err_cap);
void glma_context_destroy(glma_context* ctx);

/* Detail message of the most recent failing call on this context; empty
 * string if none. Owned by the context, valid until the next call on it. */
const char* glma_last_error(const glma_context* ctx);

/* Replaces the context's adapter/optimizer state with a checkpoint's.
 * force != 0 accepts a checkpoint written under a different config. */
glma_status glma_load_adapter(glma_context* ctx, const char* ckpt_path, int force);

/* ---- training ---------------------------------------------------------- */

typedef struct glma_train_params {
    const char* manifest_path; /* NULL or "": synthesize a corpus in out_dir */
    const char* out_dir;       /* required */
    int steps;                 /* total step target; 0 = epochs * steps/epoch */
    int ckpt_every;            /* periodic checkpoint interval; 0 = final only */
    const char* resume_path;   /* NULL or "": fresh start */
    int force;                 /* accept resume checkpoint from other config */
    int synth_n;               /* synthetic corpus size; 0 = default (8) */
} glma_train_params;

typedef struct glma_train_result {
    unsigned long long steps_run;
    unsigned long long final_step;
    unsigned int final_epoch;
    double final_phi;
    double first_l_align, first_l_ddpm, first_l_overall;
    double last_l_align, last_l_ddpm, last_l_overall;
    int dataset_size;
    char metrics_path[1024];
    char checkpoint_path[1024];
} glma_train_result;

glma_status glma_train(glma_context* ctx, const glma_train_params* params,
                       glma_train_result* out);

/* ---- generation -------------------------------------------------------- */

typedef struct glma_generate_params {
    const char* task;       /* "t2i", "edit", "layout", "color_texture", "story" */
    const char* prompt;     /* prompt / edit instruction */
    const char* image_path; /* edit source image; NULL otherwise */
    const char* out_dir;    /* required */
    int has_epsilon;        /* nonzero: epsilon overrides the task default */
    double epsilon;
    int max_sentences;      /* story image budget; 0 = unlimited */
} glma_generate_params;

typedef struct glma_generate_result {
    int n_images;
    double epsilon;
    unsigned long long transcript_bytes;
    char first_image_path[1024];
    char transcript_path[1024]; /* storytelling only, else "" */
} glma_generate_result;

glma_status glma_generate(glma_context* ctx, const glma_generate_params* params,
                          glma_generate_result* out);

/* ---- evaluation -------------------------------------------------------- */

typedef struct glma_eval_params {
    const char* gen_manifest; /* generated images + their captions */
    const char* ref_manifest; /* reference images */
    const char* out_dir;      /* required */
} glma_eval_params;

typedef struct glma_eval_result {
    double fid_stub;       /* stub-relative Frechet distance */
    double clip_stub_mean; /* mean image/caption cosine, in [-1, 1] */
    int n;
    char record_path[1024];
} glma_eval_result;

glma_status glma_eval(glma_context* ctx, const glma_eval_params* params,
                      glma_eval_result* out);

/* ---- layer sweep ------------------------------------------------------- */

typedef struct glma_sweep_params {
    const char* prompt;
    const int* offsets; /* adapter reads hidden layer L - offsets[i] */
    int n_offsets;
    const char* out_dir; /* required */
} glma_sweep_params;

typedef struct glma_sweep_result {
    int n_entries;
    char table_path[1024];
} glma_sweep_result;

/* align_losses: optional caller buffer of n_offsets doubles, filled in
 * offset order; pass NULL to skip. */
glma_status glma_layer_sweep(glma_context* ctx, const glma_sweep_params* params,
                             double* align_losses, glma_sweep_result* out);

/* ---- dataset synthesis ------------------------------------------------- */

typedef struct glma_synth_result {
    int count;
    char manifest_path[1024];
} glma_synth_result;

glma_status glma_synth_data(glma_context* ctx, int count, const char* out_dir,
                            glma_synth_result* out);

/* ---- checkpoint inspection --------------------------------------------- */

typedef struct glma_ckpt_info {
    unsigned int version;
    unsigned long long config_hash;
    unsigned long long seed;
    unsigned int epoch;
    unsigned long long step;
    double phi;
    unsigned long long rng_cursor;
    unsigned int n_blocks;
    /* profile dims, in container order */
    int d_model, n_layers, length, seq_sd, d_sd, d_pool;
    int lat_c, lat_h, lat_w, timesteps, vocab, img_size;
} glma_ckpt_info;

glma_status glma_inspect_checkpoint(glma_context* ctx, const char* path,
                                    glma_ckpt_info* out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* GLMA_H */
