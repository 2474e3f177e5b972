// SPDX-License-Identifier: Apache-2.0
#include "unetgan/unet_discriminator.hpp"

#include <sstream>

namespace unetgan {

UNetDiscriminatorImpl::UNetDiscriminatorImpl(const ModelConfig& config) : config_(validate(config)) {
    const auto mult = channel_multipliers(config_.image_size);
    const auto stages = static_cast<int64_t>(mult.size()) - 1;
    const auto ch = config_.ch;
    const bool sn = config_.use_spectral_norm;

    // Encoder block j maps level (stages - j) to (stages - j - 1); the
    // features it emits have the channel count the decoder uses at that level.
    for (int64_t j = 0; j < stages; ++j) {
        const int64_t in = j == 0 ? config_.channels : mult[stages - j] * ch;
        const int64_t out = mult[stages - j - 1] * ch;
        encoder_.push_back(register_module("enc" + std::to_string(j), DownBlock(in, out, /*preactivation=*/j > 0, sn)));
    }
    enc_head_ = register_module("enc_head", SNLinear(mult[0] * ch, 1, sn));

    // Decoder block j maps level j to j + 1. All but the first consume the
    // previous output concatenated with the same-resolution encoder features.
    for (int64_t j = 0; j < stages; ++j) {
        const int64_t in = j == 0 ? mult[0] * ch : 2 * mult[j] * ch;
        const int64_t out = mult[j + 1] * ch;
        decoder_.push_back(register_module("dec" + std::to_string(j), UpBlock(in, out, /*cond_dim=*/0, sn)));
    }
    dec_head_ = register_module("dec_head", SNConv2d(ch, 1, 1, sn));

    if (config_.conditional()) {
        enc_embed_ = register_module("enc_embed", torch::nn::Embedding(config_.num_classes, mult[0] * ch));
        dec_embed_ = register_module("dec_embed", torch::nn::Embedding(config_.num_classes, ch));
        torch::nn::init::orthogonal_(enc_embed_->weight);
        torch::nn::init::orthogonal_(dec_embed_->weight);
    }
}

DualScore UNetDiscriminatorImpl::forward(const torch::Tensor& images, const std::optional<torch::Tensor>& y) {
    TORCH_CHECK(images.dim() == 4 && images.size(1) == config_.channels && images.size(2) == config_.image_size &&
                    images.size(3) == config_.image_size,
                "discriminator: expected (N, ", config_.channels, ", ", config_.image_size, ", ", config_.image_size,
                ") images, got ", images.sizes());
    TORCH_CHECK(y.has_value() == config_.conditional(),
                config_.conditional() ? "discriminator: class labels required" : "discriminator: unexpected class labels");
    if (y) TORCH_CHECK(y->dim() == 1 && y->size(0) == images.size(0), "discriminator: label batch does not match images");

    // features[k] is the encoder output k levels above the bottleneck.
    const auto stages = encoder_.size();
    std::vector<torch::Tensor> features(stages);
    auto h = images;
    for (size_t j = 0; j < stages; ++j) {
        h = encoder_[j]->forward(h);
        features[stages - 1 - j] = h;
    }

    const auto pooled = torch::relu(features[0]).sum({2, 3});
    auto enc_logit = enc_head_->forward(pooled).squeeze(1);
    if (y) enc_logit = enc_logit + (enc_embed_->forward(*y) * pooled).sum(1);

    auto d = features[0];
    for (size_t j = 0; j < stages; ++j) {
        if (j > 0) {
            const auto& skip = features[j];
            d = torch::cat({d, skips_enabled_ ? skip : torch::zeros_like(skip)}, 1);
        }
        d = decoder_[j]->forward(d);
    }
    const auto top = torch::relu(d);
    auto dec_logits = dec_head_->forward(top);
    if (y) dec_logits = dec_logits + (dec_embed_->forward(*y).unsqueeze(-1).unsqueeze(-1) * top).sum(1, true);

    return {enc_logit, dec_logits};
}

std::vector<StageInfo> UNetDiscriminatorImpl::stages() const {
    std::vector<StageInfo> out;
    int64_t res = config_.image_size;
    for (size_t j = 0; j < encoder_.size(); ++j) {
        out.push_back({"enc" + std::to_string(j), res, res / 2, encoder_[j]->in_channels(), encoder_[j]->out_channels()});
        res /= 2;
    }
    for (size_t j = 0; j < decoder_.size(); ++j) {
        out.push_back({"dec" + std::to_string(j), res, res * 2, decoder_[j]->in_channels(), decoder_[j]->out_channels()});
        res *= 2;
    }
    return out;
}

std::vector<torch::Tensor> UNetDiscriminatorImpl::decoder_parameters() const {
    std::vector<torch::Tensor> out;
    for (const auto& p : named_parameters())
        if (p.key().rfind("dec", 0) == 0) out.push_back(p.value());
    return out;
}

std::vector<torch::Tensor> UNetDiscriminatorImpl::encoder_parameters() const {
    std::vector<torch::Tensor> out;
    for (const auto& p : named_parameters())
        if (p.key().rfind("enc", 0) == 0) out.push_back(p.value());
    return out;
}

UNetDiscriminator make_discriminator(const ModelConfig& config, uint64_t init_seed) {
    torch::manual_seed(init_seed);
    return UNetDiscriminator(config);
}

torch::Tensor decoder_probability_map(const DualScore& score) { return torch::sigmoid(score.dec_logits); }

torch::Tensor mean_pixel_score(const DualScore& score) {
    return torch::sigmoid(score.dec_logits).mean({1, 2, 3});
}

std::string describe(const UNetDiscriminatorImpl& net) {
    std::ostringstream out;
    out << "stage   resolution      channels\n";
    for (const auto& s : net.stages()) {
        out << s.name << "\t" << s.in_resolution << " -> " << s.out_resolution << "\t";
        if (s.name.rfind("dec", 0) == 0 && s.name != "dec0")
            out << "(" << s.in_channels / 2 << "+" << s.in_channels / 2 << ")";
        else
            out << s.in_channels;
        out << " -> " << s.out_channels << "\n";
    }
    out << "enc_head\tsum-pool -> linear -> 1\n";
    out << "dec_head\t1x1 conv " << net.config().ch << " -> 1\n";
    return out.str();
}

}  // namespace unetgan
