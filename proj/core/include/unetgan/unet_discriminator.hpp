// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_UNET_DISCRIMINATOR_HPP
#define UNETGAN_UNET_DISCRIMINATOR_HPP

#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "unetgan/config.hpp"
#include "unetgan/layers.hpp"

namespace unetgan {

/// Raw logits of both discriminator heads.
struct DualScore {
    torch::Tensor enc_logit;   // (N)
    torch::Tensor dec_logits;  // (N, 1, H, W)
};

struct StageInfo {
    std::string name;
    int64_t in_resolution;
    int64_t out_resolution;
    int64_t in_channels;
    int64_t out_channels;
};

/// Two-headed discriminator. The encoder is a stack of residual
/// downsampling blocks ending in a 4x4 bottleneck; the encoder head pools
/// that bottleneck into one logit per image. The decoder upsamples the
/// bottleneck back to the input resolution, each block consuming its
/// predecessor's output concatenated with the encoder features of the same
/// resolution, and a 1x1 convolution turns the final ch-channel map into a
/// per-pixel logit map. Conditional models add a projection term to both
/// heads: <embed(y), h> on the pooled vector and at every pixel.
class UNetDiscriminatorImpl : public torch::nn::Module {
public:
    explicit UNetDiscriminatorImpl(const ModelConfig& config);

    DualScore forward(const torch::Tensor& images, const std::optional<torch::Tensor>& y = std::nullopt);

    /// Test hook: when disabled the encoder features fed to the decoder are
    /// replaced by zeros (channel counts unchanged).
    void set_skip_connections(bool enabled) { skips_enabled_ = enabled; }

    std::vector<StageInfo> stages() const;
    const ModelConfig& config() const { return config_; }

    /// Parameters that only the decoder path touches.
    std::vector<torch::Tensor> decoder_parameters() const;
    std::vector<torch::Tensor> encoder_parameters() const;

private:
    ModelConfig config_;
    bool skips_enabled_ = true;
    std::vector<DownBlock> encoder_;
    SNLinear enc_head_{nullptr};
    torch::nn::Embedding enc_embed_{nullptr};
    std::vector<UpBlock> decoder_;
    SNConv2d dec_head_{nullptr};
    torch::nn::Embedding dec_embed_{nullptr};
};
TORCH_MODULE(UNetDiscriminator);

UNetDiscriminator make_discriminator(const ModelConfig& config, uint64_t init_seed);

/// Elementwise sigmoid of the decoder logits.
torch::Tensor decoder_probability_map(const DualScore& score);

/// Per-sample spatial mean of the decoder sigmoid map, shape (N).
torch::Tensor mean_pixel_score(const DualScore& score);

/// Human-readable stage table (resolution and channels per block).
std::string describe(const UNetDiscriminatorImpl& net);

}  // namespace unetgan

#endif
