#pragma once

#include "config.hpp"
#include "image.hpp"
#include "rng.hpp"
#include "tape.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace glma {

// Byte-level token window: ids are raw byte values, padded with 0 to the
// profile context length. `occupied` counts real (non-pad) positions.
struct TokenSequence {
    std::vector<int> ids;
    int occupied = 0;
};

TokenSequence tokenize(const std::string& text, int length);

// Residual-stream states of one forward pass: layers[0] is the embedding
// layer, layers[L] the final block output. All entries are (length x d_model).
struct HiddenStack {
    std::vector<Matrix> layers;
    int depth() const { return static_cast<int>(layers.size()) - 1; }
    const Matrix& layer(int l) const;
};

// Conditioning targets produced by the frozen text-image encoder stand-in.
struct ReferenceEmbeddings {
    Matrix e_clip;  // (seq_sd x d_sd)
    Matrix e_pclip; // (1 x d_pool)
};

struct MllmResult {
    std::vector<int> generated; // greedy continuation, byte ids
    TokenSequence window;       // final context window
    HiddenStack stack;          // stack of the final forward pass
};

// Frozen conditional denoiser over spatial latent tokens. Parameters never
// receive gradients, but the forward pass is recorded on a Tape so gradients
// flow into h_align (through cross-attention keys/values) and h_palign
// (through the timestep-embedding pathway).
struct Denoiser {
    int lat_c = 0, d_u = 0, d_attn = 0, d_hidden = 0, d_pool = 0, timesteps = 0;
    Matrix w_in, b_in;  // (lat_c x d_u), (1 x d_u)
    Matrix w_t;         // (d_pool x d_u)
    Matrix wq, wk, wv, wo; // (d_u x d_attn), (d_sd x d_attn), (d_sd x d_attn), (d_attn x d_u)
    Matrix w_mid, b_mid;   // (d_u x d_hidden), (1 x d_hidden)
    Matrix w_out, b_out;   // (d_hidden x lat_c), (1 x lat_c)

    // x: (lat_h*lat_w x lat_c) noised latent tokens; returns same shape.
    ad::Var forward(ad::Tape& t, const Matrix& x, ad::Var h_align, ad::Var h_palign,
                    int lambda) const;
    // Convenience value-only evaluation.
    Matrix forward_value(const Matrix& x, const Matrix& h_align, const Matrix& h_palign,
                         int lambda) const;
};

// Sinusoidal embedding of an integer timestep, (1 x d).
Matrix timestep_embedding(int lambda, int d);

// All frozen networks, constructed deterministically from (profile, seed).
// Weights are plain public matrices in the interest of testability; nothing
// in the pipeline mutates them after construction, and `checksums()` lets the
// training loop prove it.
struct Backbones {
    ScaleProfile prof;

    // language model
    Matrix tok_emb; // (vocab x d_model), shared by encode_text and the LM
    struct LmBlock {
        Matrix wq, wk, wv, wo;   // (d_model x d_model)
        Matrix w1, b1, w2, b2;   // FFN d -> 2d -> d
        Matrix ln1_g, ln1_b, ln2_g, ln2_b; // (1 x d_model)
    };
    std::vector<LmBlock> blocks;
    Matrix lnf_g, lnf_b; // final pre-logits layernorm
    Matrix unemb;        // (d_model x vocab)

    // multimodal front end
    Matrix vis_w, vis_b; // patch projection (patch_dim x d_model), (1 x d_model)
    Matrix prompt_w;     // visual prompt adapter (d_model x d_model), bias-free

    // conditioning encoder stand-in
    Matrix sd_tok_emb;  // (vocab x d_sd)
    Matrix sd_pos_mix;  // (seq_sd x length)
    Matrix sd_pool_w;   // (d_sd x d_pool)

    // latent autoencoder
    Matrix vae_enc_w, vae_enc_b; // (block_dim x lat_c), (1 x lat_c)
    Matrix vae_dec_w, vae_dec_b; // (lat_c x block_dim), (1 x block_dim)

    Denoiser base;    // coarse path, conditioned on shallow-layer embeddings
    Denoiser refiner; // detail path, conditioned on deep-layer embeddings

    Matrix eval_proj; // (d_model x d_pool), evaluation feature projection

    explicit Backbones(const ScaleProfile& profile, uint64_t seed);

    int patch_grid() const;  // vision tokens per image edge
    int vis_patch_dim() const;

    Matrix encode_text(const std::string& caption) const;   // (length x d_model)
    Matrix encode_vision(const Image& img) const;           // (length x d_model)
    HiddenStack forward_hidden(const TokenSequence& window,
                               const std::optional<Matrix>& f_image) const;
    MllmResult mllm_forward(const TokenSequence& prompt,
                            const std::optional<Matrix>& f_image, int max_new) const;
    ReferenceEmbeddings sd_text_encode(const std::string& caption) const;
    Matrix vae_encode(const Image& img) const;  // (lat_h*lat_w x lat_c)
    Image vae_decode(const Matrix& latent) const;

    // Component-name -> FNV checksum over raw weight bytes.
    std::map<std::string, uint64_t> checksums() const;
    const std::map<std::string, uint64_t>& initial_checksums() const { return init_sums_; }

private:
    std::map<std::string, uint64_t> init_sums_;
};

} // namespace glma
