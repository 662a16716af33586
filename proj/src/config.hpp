#pragma once

#include "common.hpp"

#include <cstdint>
#include <string>

namespace glma {

// Dimension registry for one end-to-end wiring of the pipeline. `desk` is the
// runnable default; `paper` records full-scale dimensions for reference and is
// far too large to train on a desktop.
struct ScaleProfile {
    int d_model = 64;  // LM hidden width
    int n_layers = 6;  // LM block count L; hidden stack has L+1 entries
    int length = 16;   // LM context window (byte tokens)
    int seq_sd = 8;    // conditioning sequence length
    int d_sd = 32;     // per-token conditioning width
    int d_pool = 16;   // pooled conditioning width
    int lat_c = 4;     // latent channels
    int lat_h = 8;     // latent height
    int lat_w = 8;     // latent width
    int timesteps = 32; // diffusion steps T
    int vocab = 256;   // byte-level tokenizer
    int img_size = 16; // square pixel input edge

    static ScaleProfile desk();
    static ScaleProfile paper();

    int lat_dim() const { return lat_c * lat_h * lat_w; }
    void validate() const;
};

enum class DdpmMode { verbatim, eps_pred };
enum class AlignMode { squared, literal };

const char* ddpm_mode_name(DdpmMode m);
const char* align_mode_name(AlignMode m);
DdpmMode parse_ddpm_mode(const std::string& s);
AlignMode parse_align_mode(const std::string& s);

// Full run configuration: profile dims plus training/inference hyperparameters.
// Defaults reproduce the reference training recipe (lr 1e-4, batch 8, 4 epochs,
// phi decaying from 1 by 10x per epoch) on desk dimensions.
struct RunConfig {
    ScaleProfile profile = ScaleProfile::desk();
    uint64_t seed = 42;

    double lr = 1e-4;
    int batch_size = 8;
    int epochs = 4;
    double phi0 = 1.0;
    double phi_decay = 0.1;
    DdpmMode ddpm_mode = DdpmMode::verbatim;
    AlignMode align_mode = AlignMode::squared;

    int train_layer = -1; // hidden layer fed to the adapter; -1 = deepest (L)
    int adapter_layers = 4;
    int adapter_dq = 32;
    int adapter_ffn_mult = 2;

    double beta_start = 1e-4;
    double beta_end = 0.02;
    int sample_steps = 0; // 0 = use all T timesteps
    int max_new = 16;       // greedy decode budget per round
    int story_max_new = 64; // byte budget for story continuation

    // Per-task fusion gate defaults; CLI --epsilon overrides these.
    double eps_text_to_image = 1.0;
    double eps_edit_default = 0.8;
    double eps_edit_layout = 0.95;
    double eps_edit_color_texture = 0.7;
    double eps_storytelling = 1.0;

    void validate() const;
    int resolved_train_layer() const { return train_layer < 0 ? profile.n_layers : train_layer; }
    int resolved_sample_steps() const { return sample_steps <= 0 ? profile.timesteps : sample_steps; }
};

// Parse a `key = value` config file ('#' comments, blank lines allowed).
// An empty path or empty file yields the defaults above. `preset = <name>`
// applies a named recipe before the remaining keys. Errors carry line numbers.
RunConfig load_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

// Named recipes: "paper-recipe" (the reference training hyperparameters),
// "desk" (alias of the defaults).
void apply_preset(RunConfig& cfg, const std::string& name);

// Canonical serialization; hashed into checkpoints so a resume under a
// different config is detectable.
std::string canonical_config_string(const RunConfig& cfg);
uint64_t config_hash(const RunConfig& cfg);

} // namespace glma
