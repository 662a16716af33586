#include "train.hpp"

#include <cmath>

namespace glma {

AdamState AdamState::init_like(const AdapterParams& params) {
    AdamState s;
    for (auto& [name, m] : params.named_blocks()) {
        s.m.push_back(Matrix::Zero(m->rows(), m->cols()));
        s.v.push_back(Matrix::Zero(m->rows(), m->cols()));
    }
    return s;
}

void adam_update(AdapterParams& params, AdamState& adam, const std::vector<Matrix>& grads,
                 double lr, int64_t t, double beta1, double beta2, double eps) {
    auto blocks = params.named_blocks();
    if (grads.size() != blocks.size() || adam.m.size() != blocks.size())
        fail(ErrorKind::internal, "adam_update: gradient/moment block count mismatch");
    if (t < 1) fail(ErrorKind::internal, "adam_update: update ordinal must be >= 1");
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < blocks.size(); ++i) {
        const Matrix& g = grads[i];
        Matrix& m = adam.m[i];
        Matrix& v = adam.v[i];
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v.array().matrix() + (1.0 - beta2) * g.array().square().matrix();
        Matrix mhat = m / bc1;
        Matrix vhat = v / bc2;
        *blocks[i].second -=
            lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
    }
}

StepContext build_step_context(const std::vector<TrainSample>& batch, const RunConfig& cfg,
                               const Backbones& nets, const NoiseSchedule& sched,
                               double phi, RngStream& rng) {
    if (batch.empty()) fail(ErrorKind::input, "train batch must be non-empty");
    StepContext ctx;
    ctx.phi = phi;
    const int layer = cfg.resolved_train_layer();
    ctx.samples.reserve(batch.size());
    for (const TrainSample& s : batch) {
        StepContext::Sample out;
        Matrix f_image = nets.encode_vision(s.image);
        TokenSequence ids = tokenize(s.caption, cfg.profile.length);
        MllmResult mllm = nets.mllm_forward(ids, f_image, 0);
        out.hidden = mllm.stack.layer(layer);
        out.ref = nets.sd_text_encode(s.caption);
        Matrix latent = nets.vae_encode(s.image);
        int lambda = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(sched.timesteps)));
        out.noised = f_noise(latent, lambda, sched, rng);
        ctx.samples.push_back(std::move(out));
    }
    return ctx;
}

LossEval eval_loss(const AdapterParams& params, const StepContext& ctx,
                   const RunConfig& cfg, const Backbones& nets, bool want_grads) {
    ad::Tape t;
    AdapterVars vars = lift_adapter(t, params, want_grads);

    ad::Var align_sum, ddpm_sum;
    for (size_t i = 0; i < ctx.samples.size(); ++i) {
        const auto& s = ctx.samples[i];
        AdapterForward fwd = adapter_forward(t, vars, s.hidden);
        ad::Var la = loss_align(t, fwd.h_align, fwd.h_palign, s.ref, cfg.align_mode);
        ad::Var hu = unet_score(t, nets, s.noised, fwd.h_align, fwd.h_palign);
        ad::Var ld = loss_ddpm(t, s.noised, hu, cfg.ddpm_mode);
        align_sum = i == 0 ? la : ad::add(align_sum, la);
        ddpm_sum = i == 0 ? ld : ad::add(ddpm_sum, ld);
    }
    double inv_b = 1.0 / static_cast<double>(ctx.samples.size());
    ad::Var l_align = ad::scale(align_sum, inv_b);
    ad::Var l_ddpm = ad::scale(ddpm_sum, inv_b);
    ad::Var l_overall = ad::add(l_ddpm, ad::scale(l_align, ctx.phi));

    LossEval ev;
    ev.breakdown.l_align = t.val(l_align)(0, 0);
    ev.breakdown.l_ddpm = t.val(l_ddpm)(0, 0);
    ev.breakdown.phi = ctx.phi;
    ev.breakdown.l_overall = ev.breakdown.l_ddpm + ev.breakdown.phi * ev.breakdown.l_align;

    if (!std::isfinite(ev.breakdown.l_align))
        fail(ErrorKind::numeric, "train_step aborted: l_align is non-finite");
    if (!std::isfinite(ev.breakdown.l_ddpm))
        fail(ErrorKind::numeric, "train_step aborted: l_ddpm is non-finite");
    if (!std::isfinite(ev.breakdown.l_overall))
        fail(ErrorKind::numeric, "train_step aborted: l_overall is non-finite");

    if (want_grads) {
        t.backward(l_overall);
        ev.grads = collect_gradients(t, vars);
    }
    return ev;
}

LossBreakdown train_step(const std::vector<TrainSample>& batch, TrainState& state,
                         const RunConfig& cfg, const Backbones& nets,
                         const NoiseSchedule& sched, RngStream& rng) {
    StepContext ctx = build_step_context(batch, cfg, nets, sched, state.phi, rng);
    LossEval ev = eval_loss(state.adapter, ctx, cfg, nets, true);
    adam_update(state.adapter, state.adam, ev.grads, cfg.lr,
                static_cast<int64_t>(state.step) + 1);
    state.step += 1;
    state.rng_cursor = rng.raw_count();
    return ev.breakdown;
}

std::vector<FreezeCheck> enforce_freeze(const Backbones& nets, bool strict) {
    std::vector<FreezeCheck> checks;
    auto current = nets.checksums();
    for (const auto& [name, expected] : nets.initial_checksums()) {
        FreezeCheck c;
        c.component = name;
        c.expected = expected;
        c.actual = current.at(name);
        c.ok = c.expected == c.actual;
        checks.push_back(c);
        if (strict && !c.ok)
            fail(ErrorKind::freeze, "frozen component '" + name + "' was modified");
    }
    return checks;
}

} // namespace glma
