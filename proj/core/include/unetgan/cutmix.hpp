// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_CUTMIX_HPP
#define UNETGAN_CUTMIX_HPP

#include <optional>
#include <stdexcept>
#include <vector>

#include <torch/torch.h>

#include "unetgan/rng.hpp"

namespace unetgan {

/// Binary H x W mask, 1 where the pixel comes from the real image. The zero
/// region is a single (possibly clipped, possibly empty) rectangle.
struct CutMixMask {
    torch::Tensor mask;  // (H, W) float, values in {0, 1}
    double real_ratio;   // |M| / (H * W), recomputed from `mask`
    double sampled_ratio;  // r drawn before clipping; informational only
};

struct CutMixBatch {
    torch::Tensor images;             // (N, C, H, W)
    std::vector<CutMixMask> masks;
    static constexpr double enc_target = 0.0;  // mixed images are fake globally

    /// Masks stacked as (N, 1, H, W), in the images' dtype.
    torch::Tensor stacked_masks() const;
};

class CutMixError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Mask for a given r: a rectangle of rounded side lengths h*sqrt(1-r) and
/// w*sqrt(1-r) centred at (cy, cx), clipped to the image, is cut out.
CutMixMask make_mask(int64_t h, int64_t w, double r, int64_t cy, int64_t cx);

/// r ~ U(0,1), centre uniform over the pixel grid.
CutMixMask sample_mask(int64_t h, int64_t w, Rng& rng);

/// M * x + (1 - M) * g per sample, mask broadcast over channels.
torch::Tensor mix(const torch::Tensor& x, const torch::Tensor& g, const std::vector<CutMixMask>& masks);
torch::Tensor mix(const torch::Tensor& x, const torch::Tensor& g, const torch::Tensor& stacked_masks);

/// Same blend applied to (N, 1, H, W) decoder outputs.
torch::Tensor mix_maps(const torch::Tensor& a, const torch::Tensor& b, const std::vector<CutMixMask>& masks);

/// min(pmix_max, pmix_max * epoch / warmup_epochs).
double pmix_schedule(double epoch, int64_t warmup_epochs, double pmix_max);

/// Mixes x[i] with g[i] under an independently sampled mask per sample. In
/// conditional mode both label tensors must agree elementwise.
CutMixBatch build_cutmix_batch(const torch::Tensor& x, const torch::Tensor& g,
                               const std::optional<torch::Tensor>& real_labels,
                               const std::optional<torch::Tensor>& fake_labels, Rng& rng);

}  // namespace unetgan

#endif
