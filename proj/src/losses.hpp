#pragma once

#include "adapter.hpp"
#include "backbones.hpp"
#include "config.hpp"
#include "diffusion.hpp"

namespace glma {

// Dual alignment objective against the frozen conditioning targets.
// squared mode: mean-squared error on both the pooled and sequence terms.
// literal mode: the sequence term is the raw (signed) mean difference;
// diagnostic only, can go negative.
ad::Var loss_align(ad::Tape& t, ad::Var h_align, ad::Var h_palign,
                   const ReferenceEmbeddings& ref, AlignMode mode);

// Denoising objective. verbatim mode regresses the UNet output onto the
// noised latent itself; eps_pred regresses onto the noise draw.
ad::Var loss_ddpm(ad::Tape& t, const NoisedLatent& noised, ad::Var h_unet, DdpmMode mode);

// Value-only alignment loss of one conditioning pair; used by the layer
// sweep and the CLI where no gradients are needed.
double loss_align_value(const AlignedEmbeddings& emb, const ReferenceEmbeddings& ref,
                        AlignMode mode);

// phi(e) = phi0 * decay^e via iterated multiplication, so the value is exactly
// the e-fold product used by the outer loop.
double phi_schedule(int epoch, double phi0, double phi_decay);

struct LossBreakdown {
    double l_align = 0.0;
    double l_ddpm = 0.0;
    double phi = 0.0;
    double l_overall = 0.0; // always l_ddpm + phi * l_align, same expression
};

} // namespace glma
