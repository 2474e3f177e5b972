// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_GENERATOR_HPP
#define UNETGAN_GENERATOR_HPP

#include <optional>

#include <torch/torch.h>

#include "unetgan/config.hpp"
#include "unetgan/layers.hpp"
#include "unetgan/rng.hpp"

namespace unetgan {

/// Noise vectors z (N x latent_dim) and, for conditional models, class
/// indices y (N, int64).
struct LatentBatch {
    torch::Tensor z;
    std::optional<torch::Tensor> y;

    int64_t size() const { return z.size(0); }
};

/// Draws n latents from the configured distribution and, when conditional,
/// uniform class labels.
LatentBatch sample_latent(const ModelConfig& config, int64_t n, Rng& rng);

/// Same as sample_latent but with caller-chosen labels (used to pair fakes
/// with a real batch for within-class CutMix).
LatentBatch sample_latent_with_labels(const ModelConfig& config, const torch::Tensor& y, Rng& rng);

/// BigGAN-style generator. Every stage's BatchNorm is modulated by the same
/// conditioning vector: z for unconditional models (self-modulation), or
/// [z, shared class embedding] for conditional ones.
class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(const ModelConfig& config);

    torch::Tensor forward(const torch::Tensor& z, const std::optional<torch::Tensor>& y = std::nullopt);

    const ModelConfig& config() const { return config_; }
    int64_t num_stages() const { return static_cast<int64_t>(blocks_.size()); }
    int64_t cond_dim() const { return cond_dim_; }

private:
    ModelConfig config_;
    int64_t cond_dim_;
    int64_t base_channels_;
    torch::nn::Embedding embed_{nullptr};
    SNLinear input_{nullptr};
    std::vector<UpBlock> blocks_;
    torch::nn::BatchNorm2d out_bn_{nullptr};
    SNConv2d out_conv_{nullptr};
};
TORCH_MODULE(Generator);

/// Images in [-1, 1], shape (N, channels, image_size, image_size).
torch::Tensor generate(GeneratorImpl& net, const LatentBatch& latents);

/// Builds a generator with orthogonal initialization drawn from `init_seed`.
/// Sampling for evaluation: no gradients, batch norm normalizes with the
/// statistics of this batch, and running statistics are left as they were.
torch::Tensor generate_frozen(GeneratorImpl& net, const LatentBatch& latents);

Generator make_generator(const ModelConfig& config, uint64_t init_seed);

}  // namespace unetgan

#endif
