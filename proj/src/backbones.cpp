#include "backbones.hpp"

#include <cmath>

namespace glma {

namespace {

Matrix ln_rows(const Matrix& x, const Matrix& g, const Matrix& b, double eps = 1e-5) {
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double mu = x.row(r).mean();
        double var = (x.row(r).array() - mu).square().mean();
        double inv = 1.0 / std::sqrt(var + eps);
        y.row(r) = (((x.row(r).array() - mu) * inv) * g.row(0).array() + b.row(0).array()).matrix();
    }
    return y;
}

Matrix gelu_mat(const Matrix& x) {
    constexpr double c = 0.7978845608028654;
    constexpr double a = 0.044715;
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        double xi = x.data()[k];
        y.data()[k] = 0.5 * xi * (1.0 + std::tanh(c * (xi + a * xi * xi * xi)));
    }
    return y;
}

Matrix softmax_rows_mat(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double mx = x.row(r).maxCoeff();
        Eigen::ArrayXd e = (x.row(r).array() - mx).exp();
        y.row(r) = (e / e.sum()).matrix();
    }
    return y;
}

int isqrt_exact(int n) {
    int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    return r * r == n ? r : -1;
}

int argmax_row(const Eigen::RowVectorXd& v) {
    int best = 0;
    for (int i = 1; i < v.size(); ++i)
        if (v(i) > v(best)) best = i;
    return best;
}

} // namespace

TokenSequence tokenize(const std::string& text, int length) {
    TokenSequence seq;
    seq.ids.assign(static_cast<size_t>(length), 0);
    int n = std::min<int>(length, static_cast<int>(text.size()));
    for (int i = 0; i < n; ++i)
        seq.ids[static_cast<size_t>(i)] = static_cast<unsigned char>(text[static_cast<size_t>(i)]);
    seq.occupied = n;
    return seq;
}

const Matrix& HiddenStack::layer(int l) const {
    if (l < 0 || l >= static_cast<int>(layers.size()))
        fail(ErrorKind::input, "hidden stack layer index " + std::to_string(l) + " out of range");
    return layers[static_cast<size_t>(l)];
}

Matrix timestep_embedding(int lambda, int d) {
    Matrix e(1, d);
    int half = d / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                               std::max(1, half));
        e(0, 2 * i) = std::sin(lambda * freq);
        e(0, 2 * i + 1) = std::cos(lambda * freq);
    }
    if (d % 2 == 1) e(0, d - 1) = std::sin(lambda * 1e-4);
    return e;
}

// ---- denoiser -------------------------------------------------------------

ad::Var Denoiser::forward(ad::Tape& t, const Matrix& x, ad::Var h_align, ad::Var h_palign,
                          int lambda) const {
    if (lambda < 0 || lambda >= timesteps)
        fail(ErrorKind::input, "denoiser: lambda " + std::to_string(lambda) +
                                   " outside [0, " + std::to_string(timesteps) + ")");
    if (x.cols() != lat_c)
        fail(ErrorKind::input, "denoiser: latent channel mismatch");
    if (t.val(h_palign).rows() != 1 || t.val(h_palign).cols() != d_pool)
        fail(ErrorKind::input, "denoiser: h_palign must be (1 x d_pool)");
    require_finite(x, "denoiser latent input");

    ad::Var xin = t.constant(x);
    ad::Var temb = t.constant(timestep_embedding(lambda, d_pool));
    ad::Var wt = t.constant(w_t);

    // pooled conditioning joins the timestep embedding, mirroring a pooled-
    // embedding pathway
    ad::Var tfeat = ad::gelu(ad::matmul(ad::add(temb, h_palign), wt)); // (1 x d_u)

    ad::Var z = ad::add_rowvec(ad::add_rowvec(ad::matmul(xin, t.constant(w_in)),
                                              t.constant(b_in)),
                               tfeat);
    z = ad::gelu(z); // (hw x d_u)

    ad::Var q = ad::matmul(z, t.constant(wq));
    ad::Var k = ad::matmul(h_align, t.constant(wk));
    ad::Var v = ad::matmul(h_align, t.constant(wv));
    ad::Var scores = ad::scale(ad::matmul(q, ad::transpose(k)),
                               1.0 / std::sqrt(static_cast<double>(d_attn)));
    ad::Var attn = ad::softmax_rows(scores);
    ad::Var z2 = ad::add(z, ad::matmul(ad::matmul(attn, v), t.constant(wo)));
    ad::Var z3 = ad::gelu(ad::add_rowvec(ad::matmul(z2, t.constant(w_mid)),
                                         t.constant(b_mid)));
    return ad::add_rowvec(ad::matmul(z3, t.constant(w_out)), t.constant(b_out));
}

Matrix Denoiser::forward_value(const Matrix& x, const Matrix& h_align,
                               const Matrix& h_palign, int lambda) const {
    ad::Tape t;
    ad::Var out = forward(t, x, t.constant(h_align), t.constant(h_palign), lambda);
    return t.val(out);
}

// ---- construction ---------------------------------------------------------

namespace {

Denoiser make_denoiser(const ScaleProfile& p, RngStream& rng) {
    Denoiser d;
    d.lat_c = p.lat_c;
    d.d_u = p.d_sd;
    d.d_attn = p.d_sd;
    d.d_hidden = 2 * p.d_sd;
    d.d_pool = p.d_pool;
    d.timesteps = p.timesteps;
    auto w = [&](Eigen::Index r, Eigen::Index c) {
        return randn_matrix(rng, r, c, 1.0 / std::sqrt(static_cast<double>(r)));
    };
    d.w_in = w(p.lat_c, d.d_u);
    d.b_in = randn_matrix(rng, 1, d.d_u, 0.02);
    d.w_t = w(p.d_pool, d.d_u);
    d.wq = w(d.d_u, d.d_attn);
    d.wk = w(p.d_sd, d.d_attn);
    d.wv = w(p.d_sd, d.d_attn);
    d.wo = w(d.d_attn, d.d_u);
    d.w_mid = w(d.d_u, d.d_hidden);
    d.b_mid = randn_matrix(rng, 1, d.d_hidden, 0.02);
    d.w_out = w(d.d_hidden, p.lat_c);
    d.b_out = randn_matrix(rng, 1, p.lat_c, 0.02);
    return d;
}

uint64_t sum_matrices(std::initializer_list<const Matrix*> ms) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const Matrix* m : ms) h = matrix_checksum(*m, h);
    return h;
}

} // namespace

Backbones::Backbones(const ScaleProfile& profile, uint64_t seed) : prof(profile) {
    prof.validate();
    if (patch_grid() < 0)
        fail(ErrorKind::validation,
             "profile.length must be a perfect square (vision patch grid)");
    if (prof.img_size % patch_grid() != 0)
        fail(ErrorKind::validation, "profile.img_size must be divisible by the patch grid");
    if (prof.img_size % prof.lat_h != 0 || prof.img_size % prof.lat_w != 0)
        fail(ErrorKind::validation, "profile.img_size must be divisible by latent h/w");

    const int d = prof.d_model;

    {
        RngStream r(seed, "token_embedding");
        tok_emb = randn_matrix(r, prof.vocab, d, 0.5);
    }
    {
        RngStream r(seed, "lm");
        double ws = 1.0 / std::sqrt(static_cast<double>(d));
        blocks.resize(static_cast<size_t>(prof.n_layers));
        for (auto& b : blocks) {
            b.wq = randn_matrix(r, d, d, ws);
            b.wk = randn_matrix(r, d, d, ws);
            b.wv = randn_matrix(r, d, d, ws);
            b.wo = randn_matrix(r, d, d, ws);
            b.w1 = randn_matrix(r, d, 2 * d, ws);
            b.b1 = Matrix::Zero(1, 2 * d);
            b.w2 = randn_matrix(r, 2 * d, d, 1.0 / std::sqrt(2.0 * d));
            b.b2 = Matrix::Zero(1, d);
            b.ln1_g = Matrix::Ones(1, d);
            b.ln1_b = Matrix::Zero(1, d);
            b.ln2_g = Matrix::Ones(1, d);
            b.ln2_b = Matrix::Zero(1, d);
        }
        lnf_g = Matrix::Ones(1, d);
        lnf_b = Matrix::Zero(1, d);
        unemb = randn_matrix(r, d, prof.vocab, ws);
    }
    {
        RngStream r(seed, "vision_encoder");
        int pd = vis_patch_dim();
        vis_w = randn_matrix(r, pd, d, 1.0 / std::sqrt(static_cast<double>(pd)));
        vis_b = randn_matrix(r, 1, d, 0.5);
    }
    {
        // Visual injection is deliberately modest, mirroring the gated prompt
        // adapters it stands in for: text must dominate late-layer content so
        // text-only inference stays close to the image-conditioned training
        // distribution.
        RngStream r(seed, "prompt_adapter");
        prompt_w = randn_matrix(r, d, d, 0.02);
    }
    {
        RngStream r(seed, "sd_text_encoder");
        sd_tok_emb = randn_matrix(r, prof.vocab, prof.d_sd, 0.5);
        sd_pos_mix = randn_matrix(r, prof.seq_sd, prof.length,
                                  1.0 / std::sqrt(static_cast<double>(prof.length)));
        sd_pool_w = randn_matrix(r, prof.d_sd, prof.d_pool,
                                 1.0 / std::sqrt(static_cast<double>(prof.d_sd)));
    }
    {
        RngStream r(seed, "vae");
        int bh = prof.img_size / prof.lat_h;
        int bw = prof.img_size / prof.lat_w;
        int bd = 3 * bh * bw;
        vae_enc_w = randn_matrix(r, bd, prof.lat_c, 1.0 / std::sqrt(static_cast<double>(bd)));
        vae_enc_b = randn_matrix(r, 1, prof.lat_c, 0.1);
        vae_dec_w = randn_matrix(r, prof.lat_c, bd,
                                 1.0 / std::sqrt(static_cast<double>(prof.lat_c)));
        vae_dec_b = Matrix::Zero(1, bd);
    }
    {
        RngStream r(seed, "denoiser_base");
        base = make_denoiser(prof, r);
    }
    {
        RngStream r(seed, "denoiser_refiner");
        refiner = make_denoiser(prof, r);
    }
    {
        RngStream r(seed, "eval_projection");
        eval_proj = randn_matrix(r, d, prof.d_pool, 1.0 / std::sqrt(static_cast<double>(d)));
    }
    init_sums_ = checksums();
}

int Backbones::patch_grid() const { return isqrt_exact(prof.length); }

int Backbones::vis_patch_dim() const {
    int ps = prof.img_size / patch_grid();
    return 3 * ps * ps;
}

// ---- encoders -------------------------------------------------------------

Matrix Backbones::encode_text(const std::string& caption) const {
    TokenSequence seq = tokenize(caption, prof.length);
    Matrix e(prof.length, prof.d_model);
    for (int i = 0; i < prof.length; ++i)
        e.row(i) = tok_emb.row(seq.ids[static_cast<size_t>(i)]);
    return e;
}

Matrix Backbones::encode_vision(const Image& img) const {
    if (img.h != prof.img_size || img.w != prof.img_size || img.chw.rows() != 3)
        fail(ErrorKind::input, "encode_vision: expected (3 x " + std::to_string(prof.img_size) +
                                   " x " + std::to_string(prof.img_size) + ") image");
    require_finite(img.chw, "encode_vision input");
    int g = patch_grid();
    int ps = prof.img_size / g;
    Matrix patches(prof.length, vis_patch_dim());
    for (int gy = 0; gy < g; ++gy) {
        for (int gx = 0; gx < g; ++gx) {
            int row = gy * g + gx;
            int k = 0;
            for (int c = 0; c < 3; ++c)
                for (int py = 0; py < ps; ++py)
                    for (int px = 0; px < ps; ++px)
                        patches(row, k++) = img.at(c, gy * ps + py, gx * ps + px);
        }
    }
    Matrix f = patches * vis_w;
    f.rowwise() += vis_b.row(0);
    return f;
}

HiddenStack Backbones::forward_hidden(const TokenSequence& window,
                                      const std::optional<Matrix>& f_image) const {
    if (static_cast<int>(window.ids.size()) != prof.length)
        fail(ErrorKind::input, "forward_hidden: window must have profile length");
    for (int id : window.ids)
        if (id < 0 || id >= prof.vocab)
            fail(ErrorKind::input, "forward_hidden: token id out of range");

    const int d = prof.d_model;
    const int len = prof.length;
    Matrix x(len, d);
    for (int i = 0; i < len; ++i) x.row(i) = tok_emb.row(window.ids[static_cast<size_t>(i)]);
    if (f_image) {
        if (f_image->rows() != len || f_image->cols() != d)
            fail(ErrorKind::input, "forward_hidden: f_image must be (length x d_model)");
        // layer 0 = token embeddings + prompt-adapter injected visual features
        x += (*f_image) * prompt_w;
    }

    HiddenStack stack;
    stack.layers.reserve(static_cast<size_t>(prof.n_layers) + 1);
    stack.layers.push_back(x);

    const int heads = std::max(1, d / 16);
    const int dk = d / heads;
    for (const LmBlock& b : blocks) {
        Matrix xn = ln_rows(x, b.ln1_g, b.ln1_b);
        Matrix q = xn * b.wq, k = xn * b.wk, v = xn * b.wv;
        Matrix attn_out(len, d);
        for (int h = 0; h < heads; ++h) {
            auto qh = q.middleCols(h * dk, dk);
            auto kh = k.middleCols(h * dk, dk);
            auto vh = v.middleCols(h * dk, dk);
            Matrix scores = qh * kh.transpose() / std::sqrt(static_cast<double>(dk));
            for (int i = 0; i < len; ++i)
                for (int j = i + 1; j < len; ++j) scores(i, j) = -1e30; // causal mask
            attn_out.middleCols(h * dk, dk) = softmax_rows_mat(scores) * vh;
        }
        x += attn_out * b.wo;
        Matrix xn2 = ln_rows(x, b.ln2_g, b.ln2_b);
        Matrix hmid = gelu_mat(xn2 * b.w1 + Matrix::Ones(len, 1) * b.b1);
        x += hmid * b.w2 + Matrix::Ones(len, 1) * b.b2;
        stack.layers.push_back(x);
    }
    return stack;
}

MllmResult Backbones::mllm_forward(const TokenSequence& prompt,
                                   const std::optional<Matrix>& f_image, int max_new) const {
    MllmResult res;
    res.window = prompt;
    if (static_cast<int>(res.window.ids.size()) != prof.length)
        fail(ErrorKind::input, "mllm_forward: prompt window must have profile length");
    int p = res.window.occupied;
    int made = 0;
    while (made < max_new && p < prof.length) {
        HiddenStack stack = forward_hidden(res.window, f_image);
        int ctx = p > 0 ? p - 1 : 0;
        Eigen::RowVectorXd state =
            ln_rows(stack.layers.back().row(ctx), lnf_g, lnf_b).row(0);
        Eigen::RowVectorXd logits = state * unemb;
        int tok = argmax_row(logits);
        res.window.ids[static_cast<size_t>(p)] = tok;
        res.generated.push_back(tok);
        ++p;
        ++made;
    }
    res.window.occupied = p;
    res.stack = forward_hidden(res.window, f_image);
    return res;
}

ReferenceEmbeddings Backbones::sd_text_encode(const std::string& caption) const {
    TokenSequence seq = tokenize(caption, prof.length);
    Matrix e(prof.length, prof.d_sd);
    for (int i = 0; i < prof.length; ++i)
        e.row(i) = sd_tok_emb.row(seq.ids[static_cast<size_t>(i)]);
    ReferenceEmbeddings ref;
    ref.e_clip = sd_pos_mix * e;                       // (seq_sd x d_sd)
    ref.e_pclip = ref.e_clip.colwise().mean() * sd_pool_w; // (1 x d_pool)
    return ref;
}

Matrix Backbones::vae_encode(const Image& img) const {
    if (img.h != prof.img_size || img.w != prof.img_size)
        fail(ErrorKind::input, "vae_encode: image size mismatch");
    int bh = prof.img_size / prof.lat_h;
    int bw = prof.img_size / prof.lat_w;
    int bd = 3 * bh * bw;
    Matrix tokens(prof.lat_h * prof.lat_w, bd);
    for (int ly = 0; ly < prof.lat_h; ++ly) {
        for (int lx = 0; lx < prof.lat_w; ++lx) {
            int row = ly * prof.lat_w + lx;
            int k = 0;
            for (int c = 0; c < 3; ++c)
                for (int py = 0; py < bh; ++py)
                    for (int px = 0; px < bw; ++px)
                        tokens(row, k++) = img.at(c, ly * bh + py, lx * bw + px);
        }
    }
    Matrix lat = tokens * vae_enc_w;
    lat.rowwise() += vae_enc_b.row(0);
    return lat; // (lat_h*lat_w x lat_c)
}

Image Backbones::vae_decode(const Matrix& latent) const {
    if (latent.rows() != prof.lat_h * prof.lat_w || latent.cols() != prof.lat_c)
        fail(ErrorKind::input, "vae_decode: latent shape mismatch");
    int bh = prof.img_size / prof.lat_h;
    int bw = prof.img_size / prof.lat_w;
    Matrix blocks_px = latent * vae_dec_w;
    blocks_px.rowwise() += vae_dec_b.row(0);
    Image img = Image::zeros(prof.img_size, prof.img_size);
    for (int ly = 0; ly < prof.lat_h; ++ly) {
        for (int lx = 0; lx < prof.lat_w; ++lx) {
            int row = ly * prof.lat_w + lx;
            int k = 0;
            for (int c = 0; c < 3; ++c)
                for (int py = 0; py < bh; ++py)
                    for (int px = 0; px < bw; ++px)
                        img.at(c, ly * bh + py, lx * bw + px) =
                            std::clamp(blocks_px(row, k++), -1.0, 1.0);
        }
    }
    return img;
}

std::map<std::string, uint64_t> Backbones::checksums() const {
    std::map<std::string, uint64_t> sums;
    sums["token_embedding"] = sum_matrices({&tok_emb});
    {
        uint64_t h = 0xcbf29ce484222325ull;
        for (const LmBlock& b : blocks)
            h = matrix_checksum(b.ln2_b,
                matrix_checksum(b.ln2_g,
                matrix_checksum(b.ln1_b,
                matrix_checksum(b.ln1_g,
                matrix_checksum(b.b2,
                matrix_checksum(b.w2,
                matrix_checksum(b.b1,
                matrix_checksum(b.w1,
                matrix_checksum(b.wo,
                matrix_checksum(b.wv,
                matrix_checksum(b.wk,
                matrix_checksum(b.wq, h))))))))))));
        h = matrix_checksum(unemb, matrix_checksum(lnf_b, matrix_checksum(lnf_g, h)));
        sums["lm"] = h;
    }
    sums["vision_encoder"] = sum_matrices({&vis_w, &vis_b});
    sums["prompt_adapter"] = sum_matrices({&prompt_w});
    sums["sd_text_encoder"] = sum_matrices({&sd_tok_emb, &sd_pos_mix, &sd_pool_w});
    sums["vae"] = sum_matrices({&vae_enc_w, &vae_enc_b, &vae_dec_w, &vae_dec_b});
    auto den_sum = [](const Denoiser& d) {
        return sum_matrices({&d.w_in, &d.b_in, &d.w_t, &d.wq, &d.wk, &d.wv, &d.wo,
                             &d.w_mid, &d.b_mid, &d.w_out, &d.b_out});
    };
    sums["denoiser_base"] = den_sum(base);
    sums["denoiser_refiner"] = den_sum(refiner);
    sums["eval_projection"] = sum_matrices({&eval_proj});
    return sums;
}

} // namespace glma
