// SPDX-License-Identifier: Apache-2.0
#include "unetgan/losses.hpp"

#include <cmath>

namespace unetgan {

namespace {

// -log s(x) = softplus(-x), -log(1 - s(x)) = softplus(x); stable for large |x|.
torch::Tensor real_term(const torch::Tensor& logits, AdversarialVariant variant) {
    return variant == AdversarialVariant::Hinge ? torch::relu(1.0 - logits) : torch::softplus(-logits);
}

torch::Tensor fake_term(const torch::Tensor& logits, AdversarialVariant variant) {
    return variant == AdversarialVariant::Hinge ? torch::relu(1.0 + logits) : torch::softplus(logits);
}

torch::Tensor generator_term(const torch::Tensor& logits, AdversarialVariant variant) {
    return variant == AdversarialVariant::Hinge ? -logits : torch::softplus(-logits);
}

// Mean over pixels, then over the batch.
torch::Tensor pixel_then_batch_mean(const torch::Tensor& per_pixel) {
    return per_pixel.flatten(1).mean(1).mean();
}

void check_maps(const torch::Tensor& t, const char* what) {
    TORCH_CHECK(t.dim() == 4 && t.size(1) == 1, what, ": expected (N, 1, H, W), got ", t.sizes());
}

}  // namespace

torch::Tensor enc_d_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits, AdversarialVariant variant) {
    return real_term(real_logits, variant).mean() + fake_term(fake_logits, variant).mean();
}

torch::Tensor dec_d_loss(const torch::Tensor& real_maps, const torch::Tensor& fake_maps, AdversarialVariant variant) {
    check_maps(real_maps, "dec_d_loss");
    check_maps(fake_maps, "dec_d_loss");
    return pixel_then_batch_mean(real_term(real_maps, variant)) + pixel_then_batch_mean(fake_term(fake_maps, variant));
}

GeneratorLossBreakdown g_loss(const torch::Tensor& fake_enc_logits, const torch::Tensor& fake_dec_maps,
                              AdversarialVariant variant) {
    GeneratorLossBreakdown out;
    out.enc_term = generator_term(fake_enc_logits, variant).mean();
    if (fake_dec_maps.defined()) {
        check_maps(fake_dec_maps, "g_loss");
        out.dec_term = pixel_then_batch_mean(generator_term(fake_dec_maps, variant));
    } else {
        out.dec_term = torch::zeros({}, fake_enc_logits.options());
    }
    out.total = out.enc_term + out.dec_term;
    return out;
}

torch::Tensor consistency_loss(const torch::Tensor& dec_on_mixed, const torch::Tensor& dec_on_real,
                               const torch::Tensor& dec_on_fake, const std::vector<CutMixMask>& masks) {
    check_maps(dec_on_mixed, "consistency_loss");
    TORCH_CHECK(dec_on_mixed.sizes() == dec_on_real.sizes() && dec_on_mixed.sizes() == dec_on_fake.sizes(),
                "consistency_loss: map shapes differ");
    const auto target = mix_maps(torch::sigmoid(dec_on_real), torch::sigmoid(dec_on_fake), masks);
    return pixel_then_batch_mean((torch::sigmoid(dec_on_mixed) - target).square());
}

CutMixSupervision cutmix_supervision_loss(const torch::Tensor& enc_logits_on_mixed, const torch::Tensor& dec_maps_on_mixed,
                                          const std::vector<CutMixMask>& masks, AdversarialVariant variant) {
    check_maps(dec_maps_on_mixed, "cutmix_supervision_loss");
    const auto real_pixels = mix_maps(torch::ones_like(dec_maps_on_mixed), torch::zeros_like(dec_maps_on_mixed), masks);
    const auto per_pixel = real_pixels * real_term(dec_maps_on_mixed, variant) +
                           (1.0 - real_pixels) * fake_term(dec_maps_on_mixed, variant);
    return {fake_term(enc_logits_on_mixed, variant).mean(), pixel_then_batch_mean(per_pixel)};
}

VanillaLosses vanilla_losses(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
    return {enc_d_loss(real_logits, fake_logits, AdversarialVariant::NonSaturating),
            torch::softplus(-fake_logits).mean()};
}

bool DiscriminatorLossBreakdown::finite() const {
    return std::isfinite(enc_term) && std::isfinite(dec_term) && std::isfinite(cutmix_enc_term) &&
           std::isfinite(cutmix_dec_term) && std::isfinite(consistency_term) && std::isfinite(total);
}

bool GeneratorLossValues::finite() const {
    return std::isfinite(enc_term) && std::isfinite(dec_term) && std::isfinite(total);
}

}  // namespace unetgan
