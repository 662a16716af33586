#include "adapter.hpp"

#include <cmath>

namespace glma {

std::vector<std::pair<std::string, Matrix*>> AdapterParams::named_blocks() {
    std::vector<std::pair<std::string, Matrix*>> out;
    out.emplace_back("query_bank", &query_bank);
    for (size_t i = 0; i < layers.size(); ++i) {
        std::string p = "layer" + std::to_string(i) + "/";
        Layer& l = layers[i];
        out.emplace_back(p + "wq", &l.wq);
        out.emplace_back(p + "wk", &l.wk);
        out.emplace_back(p + "wv", &l.wv);
        out.emplace_back(p + "wo", &l.wo);
        out.emplace_back(p + "bo", &l.bo);
        out.emplace_back(p + "ln_g", &l.ln_g);
        out.emplace_back(p + "ln_b", &l.ln_b);
    }
    out.emplace_back("ffn_head/w1", &f_w1);
    out.emplace_back("ffn_head/b1", &f_b1);
    out.emplace_back("ffn_head/w2", &f_w2);
    out.emplace_back("ffn_head/b2", &f_b2);
    out.emplace_back("pool_head/w1", &p_w1);
    out.emplace_back("pool_head/b1", &p_b1);
    out.emplace_back("pool_head/w2", &p_w2);
    out.emplace_back("pool_head/b2", &p_b2);
    return out;
}

std::vector<std::pair<std::string, const Matrix*>> AdapterParams::named_blocks() const {
    auto mut = const_cast<AdapterParams*>(this)->named_blocks();
    std::vector<std::pair<std::string, const Matrix*>> out;
    out.reserve(mut.size());
    for (auto& [name, m] : mut) out.emplace_back(name, m);
    return out;
}

size_t AdapterParams::param_count() const {
    size_t n = 0;
    for (auto& [name, m] : named_blocks()) n += static_cast<size_t>(m->size());
    return n;
}

uint64_t AdapterParams::checksum() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (auto& [name, m] : named_blocks()) {
        h = fnv1a64(name, h);
        h = matrix_checksum(*m, h);
    }
    return h;
}

AdapterParams init_adapter(const RunConfig& cfg, RngStream& rng) {
    const ScaleProfile& p = cfg.profile;
    const int dq = cfg.adapter_dq;
    const int dff = cfg.adapter_ffn_mult * dq;
    constexpr double kInitStd = 0.02;

    AdapterParams a;
    a.d_q = dq;
    a.d_model = p.d_model;
    a.query_bank = randn_matrix(rng, p.seq_sd, dq, kInitStd);
    a.layers.resize(static_cast<size_t>(cfg.adapter_layers));
    for (auto& l : a.layers) {
        l.wq = randn_matrix(rng, dq, dq, kInitStd);
        l.wk = randn_matrix(rng, p.d_model, dq, kInitStd);
        l.wv = randn_matrix(rng, p.d_model, dq, kInitStd);
        l.wo = randn_matrix(rng, dq, dq, kInitStd);
        l.bo = Matrix::Zero(1, dq);
        l.ln_g = Matrix::Ones(1, dq);
        l.ln_b = Matrix::Zero(1, dq);
    }
    a.f_w1 = randn_matrix(rng, dq, dff, kInitStd);
    a.f_b1 = Matrix::Zero(1, dff);
    a.f_w2 = randn_matrix(rng, dff, p.d_sd, kInitStd);
    a.f_b2 = Matrix::Zero(1, p.d_sd);
    a.p_w1 = randn_matrix(rng, dq, dff, kInitStd);
    a.p_b1 = Matrix::Zero(1, dff);
    a.p_w2 = randn_matrix(rng, dff, p.d_pool, kInitStd);
    a.p_b2 = Matrix::Zero(1, p.d_pool);
    return a;
}

AdapterVars lift_adapter(ad::Tape& t, const AdapterParams& params, bool requires_grad) {
    AdapterVars v;
    auto lift = [&](const Matrix& m) {
        ad::Var var = requires_grad ? t.param(m) : t.constant(m);
        v.ordered.push_back(var);
        return var;
    };
    v.query_bank = lift(params.query_bank);
    v.layers.reserve(params.layers.size());
    for (const auto& l : params.layers) {
        AdapterVars::Layer lv;
        lv.wq = lift(l.wq);
        lv.wk = lift(l.wk);
        lv.wv = lift(l.wv);
        lv.wo = lift(l.wo);
        lv.bo = lift(l.bo);
        lv.ln_g = lift(l.ln_g);
        lv.ln_b = lift(l.ln_b);
        v.layers.push_back(lv);
    }
    v.f_w1 = lift(params.f_w1);
    v.f_b1 = lift(params.f_b1);
    v.f_w2 = lift(params.f_w2);
    v.f_b2 = lift(params.f_b2);
    v.p_w1 = lift(params.p_w1);
    v.p_b1 = lift(params.p_b1);
    v.p_w2 = lift(params.p_w2);
    v.p_b2 = lift(params.p_b2);
    return v;
}

AdapterForward adapter_forward(ad::Tape& t, const AdapterVars& vars, const Matrix& h,
                               std::vector<AttnProbe>* probes) {
    require_finite(h, "adapter_forward hidden states");
    if (h.cols() != t.val(vars.layers.at(0).wk).rows())
        fail(ErrorKind::input, "adapter_forward: hidden width mismatch");

    ad::Var ctx = t.constant(h);
    ad::Var x = vars.query_bank;
    const double inv_sqrt_dq =
        1.0 / std::sqrt(static_cast<double>(t.val(vars.query_bank).cols()));

    for (const auto& l : vars.layers) {
        ad::Var q = ad::matmul(x, l.wq);
        ad::Var k = ad::matmul(ctx, l.wk);
        ad::Var v = ad::matmul(ctx, l.wv);
        ad::Var attn = ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)),
                                                  inv_sqrt_dq));
        ad::Var ao = ad::matmul(attn, v);
        if (probes) probes->push_back(AttnProbe{t.val(attn), t.val(ao)});
        ad::Var proj = ad::add_rowvec(ad::matmul(ao, l.wo), l.bo);
        x = ad::add(x, ad::layernorm_rows(proj, l.ln_g, l.ln_b));
    }

    AdapterForward out;
    ad::Var fmid = ad::gelu(ad::add_rowvec(ad::matmul(x, vars.f_w1), vars.f_b1));
    out.h_align = ad::add_rowvec(ad::matmul(fmid, vars.f_w2), vars.f_b2);

    ad::Var pooled = ad::mean_rows(x);
    ad::Var pmid = ad::gelu(ad::add_rowvec(ad::matmul(pooled, vars.p_w1), vars.p_b1));
    out.h_palign = ad::add_rowvec(ad::matmul(pmid, vars.p_w2), vars.p_b2);
    return out;
}

AlignedEmbeddings adapter_apply(const AdapterParams& params, const Matrix& h,
                                int source_layer) {
    ad::Tape t;
    AdapterVars vars = lift_adapter(t, params, false);
    AdapterForward f = adapter_forward(t, vars, h);
    AlignedEmbeddings e;
    e.h_align = t.val(f.h_align);
    e.h_palign = t.val(f.h_palign);
    e.source_layer = source_layer;
    return e;
}

std::vector<AlignedEmbeddings> adapter_apply_batch(const AdapterParams& params,
                                                   const std::vector<Matrix>& batch,
                                                   int source_layer) {
    std::vector<AlignedEmbeddings> out;
    out.reserve(batch.size());
    for (const Matrix& h : batch) out.push_back(adapter_apply(params, h, source_layer));
    return out;
}

std::vector<Matrix> collect_gradients(const ad::Tape& t, const AdapterVars& vars) {
    std::vector<Matrix> grads;
    grads.reserve(vars.ordered.size());
    for (ad::Var v : vars.ordered) grads.push_back(t.grad(v));
    return grads;
}

} // namespace glma
