#pragma once

#include "backbones.hpp"
#include "config.hpp"
#include "rng.hpp"
#include "tape.hpp"

#include <string>
#include <utility>
#include <vector>

namespace glma {

// Conditioning pair produced from one hidden-state layer.
struct AlignedEmbeddings {
    Matrix h_align;  // (seq_sd x d_sd)
    Matrix h_palign; // (1 x d_pool)
    int source_layer = -1;
};

// Trainable adapter mapping one LM hidden layer (length x d_model) into the
// denoiser conditioning space. A learned query bank cross-attends over the
// hidden states through a stack of attention layers (x += layernorm(branch);
// normalizing the residual stream itself collapses the query rows into one
// another and caps how well distinct per-row targets can be fit), then two
// feed-forward heads emit the sequence and pooled embeddings.
struct AdapterParams {
    struct Layer {
        Matrix wq, wk, wv; // (d_q x d_q), (d_model x d_q), (d_model x d_q)
        Matrix wo, bo;     // (d_q x d_q), (1 x d_q)
        Matrix ln_g, ln_b; // (1 x d_q)
    };

    Matrix query_bank; // (seq_sd x d_q)
    std::vector<Layer> layers;
    Matrix f_w1, f_b1, f_w2, f_b2; // sequence head: d_q -> ffn -> d_sd
    Matrix p_w1, p_b1, p_w2, p_b2; // pooled head:   d_q -> ffn -> d_pool

    int d_q = 0;
    int d_model = 0;

    // Stable named ordering shared by the optimizer and the checkpoint format.
    std::vector<std::pair<std::string, Matrix*>> named_blocks();
    std::vector<std::pair<std::string, const Matrix*>> named_blocks() const;
    size_t param_count() const;
    uint64_t checksum() const;
};

AdapterParams init_adapter(const RunConfig& cfg, RngStream& rng);

// Tape-lifted view of the parameters; `ordered` matches named_blocks order.
struct AdapterVars {
    struct Layer {
        ad::Var wq, wk, wv, wo, bo, ln_g, ln_b;
    };
    ad::Var query_bank;
    std::vector<Layer> layers;
    ad::Var f_w1, f_b1, f_w2, f_b2, p_w1, p_b1, p_w2, p_b2;
    std::vector<ad::Var> ordered;
};

AdapterVars lift_adapter(ad::Tape& t, const AdapterParams& params, bool requires_grad);

// Attention internals of one layer, for inspection in tests.
struct AttnProbe {
    Matrix weights;  // (seq_sd x length), rows sum to 1
    Matrix attn_out; // softmax(QK^T/sqrt(d)) V, before the output projection
};

struct AdapterForward {
    ad::Var h_align;
    ad::Var h_palign;
};

// h: one hidden layer (length x d_model). Non-finite input is rejected.
AdapterForward adapter_forward(ad::Tape& t, const AdapterVars& vars, const Matrix& h,
                               std::vector<AttnProbe>* probes = nullptr);

// Value-only convenience: evaluates on a private tape.
AlignedEmbeddings adapter_apply(const AdapterParams& params, const Matrix& h,
                                int source_layer);

// Per-sample application over a batch of hidden layers.
std::vector<AlignedEmbeddings> adapter_apply_batch(const AdapterParams& params,
                                                   const std::vector<Matrix>& batch,
                                                   int source_layer);

// Gradients in named_blocks order after a backward pass on `t`.
std::vector<Matrix> collect_gradients(const ad::Tape& t, const AdapterVars& vars);

} // namespace glma
