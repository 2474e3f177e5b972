// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_LOSSES_HPP
#define UNETGAN_LOSSES_HPP

#include <vector>

#include <torch/torch.h>

#include "unetgan/config.hpp"
#include "unetgan/cutmix.hpp"

namespace unetgan {

// All losses take raw logits and return differentiable 0-dim tensors.
// Expectations are batch means; decoder terms average over pixels first.

/// Encoder discriminator loss. NS: -log s(real) - log(1 - s(fake));
/// hinge: max(0, 1 - real) + max(0, 1 + fake).
torch::Tensor enc_d_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits, AdversarialVariant variant);

/// Per-pixel version of enc_d_loss on (N, 1, H, W) logit maps.
torch::Tensor dec_d_loss(const torch::Tensor& real_maps, const torch::Tensor& fake_maps, AdversarialVariant variant);

struct GeneratorLossBreakdown {
    torch::Tensor enc_term;
    torch::Tensor dec_term;
    torch::Tensor total;
};

/// Generator loss with both heads at equal weight. NS: -log s(.) per head;
/// hinge: -mean(logit) per head. Pass an undefined `fake_dec_maps` to train
/// against the encoder head only.
GeneratorLossBreakdown g_loss(const torch::Tensor& fake_enc_logits, const torch::Tensor& fake_dec_maps,
                              AdversarialVariant variant);

/// Mean squared difference, over pixels and then over the batch, between
/// s(dec_on_mixed) and mix(s(dec_on_real), s(dec_on_fake), M). Inputs are
/// logits; both sides stay differentiable.
torch::Tensor consistency_loss(const torch::Tensor& dec_on_mixed, const torch::Tensor& dec_on_real,
                               const torch::Tensor& dec_on_fake, const std::vector<CutMixMask>& masks);

struct CutMixSupervision {
    torch::Tensor enc_term;
    torch::Tensor dec_term;
};

/// Encoder treats every mixed image as fake; decoder classifies each pixel
/// against the mask (1 = real).
CutMixSupervision cutmix_supervision_loss(const torch::Tensor& enc_logits_on_mixed, const torch::Tensor& dec_maps_on_mixed,
                                          const std::vector<CutMixMask>& masks, AdversarialVariant variant);

struct VanillaLosses {
    torch::Tensor d_loss;
    torch::Tensor g_loss;
};

/// Plain non-saturating GAN pair for a single-logit discriminator.
VanillaLosses vanilla_losses(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);

/// Scalar view of every discriminator objective term of one step.
struct DiscriminatorLossBreakdown {
    double enc_term = 0.0;
    double dec_term = 0.0;
    double cutmix_enc_term = 0.0;
    double cutmix_dec_term = 0.0;
    double consistency_term = 0.0;
    double lambda = 0.0;
    double total = 0.0;

    /// total == enc + dec + cutmix_enc + cutmix_dec + lambda * consistency.
    double recomputed_total() const {
        return enc_term + dec_term + cutmix_enc_term + cutmix_dec_term + lambda * consistency_term;
    }
    bool finite() const;
};

struct GeneratorLossValues {
    double enc_term = 0.0;
    double dec_term = 0.0;
    double total = 0.0;
    bool finite() const;
};

}  // namespace unetgan

#endif
