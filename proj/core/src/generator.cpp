// SPDX-License-Identifier: Apache-2.0
#include "unetgan/generator.hpp"

#include <stdexcept>

namespace unetgan {

namespace {

torch::Tensor draw_z(const ModelConfig& config, int64_t n, Rng& rng) {
    std::vector<float> values(static_cast<size_t>(n * config.latent_dim));
    if (config.latent_distribution == LatentDistribution::UniformPm1) {
        for (auto& v : values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    } else {
        for (auto& v : values) v = static_cast<float>(rng.normal());
    }
    return torch::from_blob(values.data(), {n, config.latent_dim}, torch::kFloat32).clone();
}

}  // namespace

LatentBatch sample_latent(const ModelConfig& config, int64_t n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_latent: n must be >= 1");
    LatentBatch batch{draw_z(config, n, rng), std::nullopt};
    if (config.conditional()) {
        std::vector<int64_t> labels(static_cast<size_t>(n));
        for (auto& y : labels) y = rng.uniform_int(0, config.num_classes - 1);
        batch.y = torch::tensor(labels, torch::kInt64);
    }
    return batch;
}

LatentBatch sample_latent_with_labels(const ModelConfig& config, const torch::Tensor& y, Rng& rng) {
    if (!config.conditional()) throw std::invalid_argument("sample_latent_with_labels: model is unconditional");
    return {draw_z(config, y.size(0), rng), y.to(torch::kInt64)};
}

GeneratorImpl::GeneratorImpl(const ModelConfig& config) : config_(validate(config)) {
    const auto mult = channel_multipliers(config_.image_size);
    const bool sn = config_.use_spectral_norm;
    cond_dim_ = config_.latent_dim * (config_.conditional() ? 2 : 1);
    base_channels_ = mult.front() * config_.ch;

    if (config_.conditional())
        embed_ = register_module("embed", torch::nn::Embedding(config_.num_classes, config_.latent_dim));
    input_ = register_module("input", SNLinear(cond_dim_, 4 * 4 * base_channels_, sn));
    for (size_t level = 1; level < mult.size(); ++level) {
        blocks_.push_back(register_module("block" + std::to_string(level - 1),
                                          UpBlock(mult[level - 1] * config_.ch, mult[level] * config_.ch, cond_dim_, sn)));
    }
    out_bn_ = register_module("out_bn", torch::nn::BatchNorm2d(config_.ch));
    out_conv_ = register_module("out_conv", SNConv2d(config_.ch, config_.channels, 3, sn));
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z, const std::optional<torch::Tensor>& y) {
    TORCH_CHECK(z.dim() == 2 && z.size(1) == config_.latent_dim, "generator: expected z of shape (N, ",
                config_.latent_dim, "), got ", z.sizes());
    TORCH_CHECK(y.has_value() == config_.conditional(),
                config_.conditional() ? "generator: class labels required" : "generator: unexpected class labels");

    auto cond = z;
    if (y) {
        TORCH_CHECK(y->dim() == 1 && y->size(0) == z.size(0), "generator: label batch does not match z");
        cond = torch::cat({z, embed_->forward(*y)}, 1);
    }
    auto h = input_->forward(cond).view({z.size(0), base_channels_, 4, 4});
    for (auto& block : blocks_) h = block->forward(h, cond);
    h = torch::relu(out_bn_->forward(h));
    return torch::tanh(out_conv_->forward(h));
}

torch::Tensor generate(GeneratorImpl& net, const LatentBatch& latents) { return net.forward(latents.z, latents.y); }

torch::Tensor generate_frozen(GeneratorImpl& net, const LatentBatch& latents) {
    torch::NoGradGuard no_grad;
    const bool was_training = net.is_training();
    std::vector<torch::Tensor> saved;
    for (const auto& b : net.buffers()) saved.push_back(b.clone());
    net.train();
    auto images = generate(net, latents);
    size_t i = 0;
    for (auto& b : net.buffers()) b.copy_(saved[i++]);
    net.train(was_training);
    return images;
}

Generator make_generator(const ModelConfig& config, uint64_t init_seed) {
    torch::manual_seed(init_seed);
    return Generator(config);
}

}  // namespace unetgan
