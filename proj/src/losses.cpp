#include "losses.hpp"

namespace glma {

ad::Var loss_align(ad::Tape& t, ad::Var h_align, ad::Var h_palign,
                   const ReferenceEmbeddings& ref, AlignMode mode) {
    const Matrix& ha = t.val(h_align);
    const Matrix& hp = t.val(h_palign);
    if (ha.rows() != ref.e_clip.rows() || ha.cols() != ref.e_clip.cols())
        fail(ErrorKind::input, "loss_align: h_align/e_clip shape mismatch");
    if (hp.rows() != ref.e_pclip.rows() || hp.cols() != ref.e_pclip.cols())
        fail(ErrorKind::input, "loss_align: h_palign/e_pclip shape mismatch");

    ad::Var e_clip = t.constant(ref.e_clip);
    ad::Var e_pclip = t.constant(ref.e_pclip);
    ad::Var pooled = ad::mse(h_palign, e_pclip);
    ad::Var seq = mode == AlignMode::squared ? ad::mse(h_align, e_clip)
                                             : ad::mean_diff(h_align, e_clip);
    return ad::add(pooled, seq);
}

ad::Var loss_ddpm(ad::Tape& t, const NoisedLatent& noised, ad::Var h_unet, DdpmMode mode) {
    const Matrix& target = mode == DdpmMode::verbatim ? noised.values : noised.noise;
    const Matrix& pred = t.val(h_unet);
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        fail(ErrorKind::input, "loss_ddpm: prediction/target shape mismatch");
    return ad::mse(t.constant(target), h_unet);
}

double loss_align_value(const AlignedEmbeddings& emb, const ReferenceEmbeddings& ref,
                        AlignMode mode) {
    ad::Tape t;
    ad::Var l = loss_align(t, t.constant(emb.h_align), t.constant(emb.h_palign), ref, mode);
    return t.val(l)(0, 0);
}

double phi_schedule(int epoch, double phi0, double phi_decay) {
    if (epoch < 0) fail(ErrorKind::input, "phi_schedule: epoch must be non-negative");
    double phi = phi0;
    for (int i = 0; i < epoch; ++i) phi *= phi_decay;
    return phi;
}

} // namespace glma
