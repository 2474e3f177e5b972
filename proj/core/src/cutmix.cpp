// SPDX-License-Identifier: Apache-2.0
#include "unetgan/cutmix.hpp"

#include <algorithm>
#include <cmath>

namespace unetgan {

CutMixMask make_mask(int64_t h, int64_t w, double r, int64_t cy, int64_t cx) {
    if (h < 1 || w < 1) throw CutMixError("cutmix: mask dimensions must be positive");
    const double side = std::sqrt(std::clamp(1.0 - r, 0.0, 1.0));
    const auto cut_h = static_cast<int64_t>(std::lround(static_cast<double>(h) * side));
    const auto cut_w = static_cast<int64_t>(std::lround(static_cast<double>(w) * side));

    const int64_t y0 = std::clamp<int64_t>(cy - cut_h / 2, 0, h);
    const int64_t y1 = std::clamp<int64_t>(cy - cut_h / 2 + cut_h, 0, h);
    const int64_t x0 = std::clamp<int64_t>(cx - cut_w / 2, 0, w);
    const int64_t x1 = std::clamp<int64_t>(cx - cut_w / 2 + cut_w, 0, w);

    auto mask = torch::ones({h, w}, torch::kFloat32);
    if (y1 > y0 && x1 > x0) mask.slice(0, y0, y1).slice(1, x0, x1).zero_();

    const double real_ratio = mask.sum(torch::kFloat64).item<double>() / static_cast<double>(h * w);
    return {mask, real_ratio, r};
}

CutMixMask sample_mask(int64_t h, int64_t w, Rng& rng) {
    const double r = rng.uniform();
    const auto cy = rng.uniform_int(0, h - 1);
    const auto cx = rng.uniform_int(0, w - 1);
    return make_mask(h, w, r, cy, cx);
}

namespace {

torch::Tensor stack_masks(const std::vector<CutMixMask>& masks, const torch::Tensor& like) {
    std::vector<torch::Tensor> m;
    m.reserve(masks.size());
    for (const auto& mask : masks) m.push_back(mask.mask);
    return torch::stack(m).unsqueeze(1).to(like.dtype());
}

}  // namespace

torch::Tensor CutMixBatch::stacked_masks() const { return stack_masks(masks, images); }

torch::Tensor mix(const torch::Tensor& x, const torch::Tensor& g, const torch::Tensor& stacked_masks) {
    if (!x.sizes().equals(g.sizes())) throw CutMixError("cutmix: real and fake batches differ in shape");
    if (x.dim() != 4 || stacked_masks.dim() != 4 || stacked_masks.size(0) != x.size(0) || stacked_masks.size(1) != 1 ||
        stacked_masks.size(2) != x.size(2) || stacked_masks.size(3) != x.size(3))
        throw CutMixError("cutmix: masks do not match the batch");
    // torch::where selects operands exactly, so M=1 returns x bit for bit.
    return torch::where(stacked_masks > 0.5, x, g);
}

torch::Tensor mix(const torch::Tensor& x, const torch::Tensor& g, const std::vector<CutMixMask>& masks) {
    if (static_cast<int64_t>(masks.size()) != x.size(0)) throw CutMixError("cutmix: one mask per sample required");
    return mix(x, g, stack_masks(masks, x));
}

torch::Tensor mix_maps(const torch::Tensor& a, const torch::Tensor& b, const std::vector<CutMixMask>& masks) {
    if (a.dim() != 4 || a.size(1) != 1) throw CutMixError("cutmix: decoder maps must be (N, 1, H, W)");
    return mix(a, b, masks);
}

double pmix_schedule(double epoch, int64_t warmup_epochs, double pmix_max) {
    if (epoch <= 0.0) return 0.0;
    return std::min(pmix_max, pmix_max * (epoch / static_cast<double>(warmup_epochs)));
}

CutMixBatch build_cutmix_batch(const torch::Tensor& x, const torch::Tensor& g,
                               const std::optional<torch::Tensor>& real_labels,
                               const std::optional<torch::Tensor>& fake_labels, Rng& rng) {
    if (!x.sizes().equals(g.sizes())) throw CutMixError("cutmix: real and fake batches differ in shape");
    if (real_labels.has_value() != fake_labels.has_value())
        throw CutMixError("cutmix: labels given for only one side of the pair");
    if (real_labels && !torch::equal(real_labels->to(torch::kInt64), fake_labels->to(torch::kInt64)))
        throw CutMixError("within-class mixing violated");

    CutMixBatch batch;
    batch.masks.reserve(static_cast<size_t>(x.size(0)));
    for (int64_t i = 0; i < x.size(0); ++i) batch.masks.push_back(sample_mask(x.size(2), x.size(3), rng));
    batch.images = mix(x, g, batch.masks);
    return batch;
}

}  // namespace unetgan
