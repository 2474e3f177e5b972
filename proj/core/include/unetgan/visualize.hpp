// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_VISUALIZE_HPP
#define UNETGAN_VISUALIZE_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "unetgan/cutmix.hpp"
#include "unetgan/generator.hpp"
#include "unetgan/metrics.hpp"
#include "unetgan/unet_discriminator.hpp"

namespace unetgan {

/// Writes an (H, W, C) uint8 RGB or (H, W, 1) gray tensor as PNG.
void write_png(const torch::Tensor& hwc_uint8, const std::filesystem::path& path);
torch::Tensor read_png(const std::filesystem::path& path);

/// (C, H, W) image in [-1, 1] to (H, W, 3) uint8.
torch::Tensor to_rgb_uint8(const torch::Tensor& chw);

/// (H, W) probabilities to (H, W, 3) uint8 gray, value round(255 * p).
torch::Tensor probability_to_gray(const torch::Tensor& hw);

struct HeatmapGrid {
    torch::Tensor samples;            // (N, C, S, S)
    torch::Tensor probability_maps;   // (N, 1, S, S), sigmoid of decoder logits
    torch::Tensor image;              // (2 * S * scale, N * S * scale, 3) uint8
};

/// Top row: generated samples. Bottom row: the decoder's per-pixel real
/// probability, mapped linearly from [0, 1] to [0, 255] (no per-image
/// normalization). Tiles are enlarged `scale` times by pixel replication.
/// Neither network's state is modified.
HeatmapGrid render_decoder_heatmaps(GeneratorImpl& generator, UNetDiscriminatorImpl& discriminator,
                                    const LatentBatch& latents, const std::filesystem::path& path, int64_t scale = 1);

struct ScatterPoint {
    double encoder_score = 0.0;   // sigmoid of the per-image logit
    double decoder_score = 0.0;   // mean per-pixel sigmoid
    int x = 0, y = 0;             // marker centre in the written image
};

/// One marker per image at (encoder score, mean decoder score), axes [0, 1].
std::vector<ScatterPoint> render_enc_dec_scatter(UNetDiscriminatorImpl& discriminator, const torch::Tensor& images,
                                                 const std::optional<torch::Tensor>& labels,
                                                 const std::filesystem::path& path, int size = 480);

struct CutMixPanel {
    torch::Tensor mixed;           // (N, C, S, S)
    torch::Tensor decoder_maps;    // (N, 1, S, S) probabilities
    torch::Tensor encoder_scores;  // (N) probabilities
    torch::Tensor image;
};

/// Columns are samples; rows are real, fake, mask, mixed image and decoder
/// map of the mixed image, followed by a caption band with r and the
/// encoder score.
CutMixPanel render_cutmix_panel(UNetDiscriminatorImpl& discriminator, const torch::Tensor& real, const torch::Tensor& fake,
                                const std::vector<CutMixMask>& masks, const std::optional<torch::Tensor>& labels,
                                const std::filesystem::path& path, int64_t scale = 4);

struct CurvePlot {
    std::vector<int64_t> iterations;
    std::vector<double> values;
};

/// Line plot of one metric over iterations. `metric` is "fid", "is" or a
/// loss key; records without that metric are skipped.
CurvePlot render_metric_curve(const std::vector<MetricsRecord>& records, const std::string& metric,
                              const std::filesystem::path& path, int width = 640, int height = 400);

}  // namespace unetgan

#endif
