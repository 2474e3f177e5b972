// SPDX-License-Identifier: Apache-2.0
#include "unetgan/layers.hpp"

namespace F = torch::nn::functional;

namespace unetgan {

namespace {

constexpr double kNormEps = 1e-12;
constexpr int kInitPowerSteps = 5;

torch::Tensor normalized(const torch::Tensor& t) { return t / (t.norm() + kNormEps); }

void power_iterate_impl(const torch::Tensor& weight, torch::Tensor& u, torch::Tensor& v, int steps) {
    torch::NoGradGuard no_grad;
    const auto w = weight.flatten(1);
    for (int i = 0; i < steps; ++i) {
        v.copy_(normalized(torch::mv(w.t(), u)));
        u.copy_(normalized(torch::mv(w, v)));
    }
}

void init_power_vectors(const torch::Tensor& weight, torch::Tensor& u, torch::Tensor& v) {
    const auto rows = weight.size(0);
    const auto cols = weight.numel() / rows;
    u = normalized(torch::randn({rows}, weight.options()));
    v = normalized(torch::randn({cols}, weight.options()));
    power_iterate_impl(weight, u, v, kInitPowerSteps);
}

}  // namespace

torch::Tensor spectrally_normalize(const torch::Tensor& weight, torch::Tensor& u, torch::Tensor& v, bool update) {
    if (update) power_iterate_impl(weight, u, v, 1);
    // Later forwards update (u, v) in place; the graph must keep this step's.
    const auto sigma = torch::dot(u.clone(), torch::mv(weight.flatten(1), v.clone()));
    return weight / sigma;
}

SNConv2dImpl::SNConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel, bool spectral_norm)
    : padding_(kernel / 2), spectral_norm_(spectral_norm) {
    weight = register_parameter("weight", torch::empty({out_channels, in_channels, kernel, kernel}));
    bias = register_parameter("bias", torch::zeros({out_channels}));
    torch::nn::init::orthogonal_(weight);
    if (spectral_norm_) {
        init_power_vectors(weight, u_, v_);
        u_ = register_buffer("sn_u", u_);
        v_ = register_buffer("sn_v", v_);
    }
}

torch::Tensor SNConv2dImpl::effective_weight() {
    if (!spectral_norm_) return weight;
    return spectrally_normalize(weight, u_, v_, is_training());
}

torch::Tensor SNConv2dImpl::forward(const torch::Tensor& x) {
    return F::conv2d(x, effective_weight(), F::Conv2dFuncOptions().bias(bias).padding(padding_));
}

void SNConv2dImpl::power_iterate(int steps) {
    if (spectral_norm_) power_iterate_impl(weight, u_, v_, steps);
}

SNLinearImpl::SNLinearImpl(int64_t in_features, int64_t out_features, bool spectral_norm, bool with_bias)
    : spectral_norm_(spectral_norm) {
    weight = register_parameter("weight", torch::empty({out_features, in_features}));
    torch::nn::init::orthogonal_(weight);
    if (with_bias) bias = register_parameter("bias", torch::zeros({out_features}));
    if (spectral_norm_) {
        init_power_vectors(weight, u_, v_);
        u_ = register_buffer("sn_u", u_);
        v_ = register_buffer("sn_v", v_);
    }
}

torch::Tensor SNLinearImpl::effective_weight() {
    if (!spectral_norm_) return weight;
    return spectrally_normalize(weight, u_, v_, is_training());
}

torch::Tensor SNLinearImpl::forward(const torch::Tensor& x) {
    return F::linear(x, effective_weight(), bias);
}

void SNLinearImpl::power_iterate(int steps) {
    if (spectral_norm_) power_iterate_impl(weight, u_, v_, steps);
}

ConditionalBatchNorm2dImpl::ConditionalBatchNorm2dImpl(int64_t features, int64_t cond_dim, bool spectral_norm) {
    gain_ = register_module("gain", SNLinear(cond_dim, features, spectral_norm, /*with_bias=*/false));
    shift_ = register_module("shift", SNLinear(cond_dim, features, spectral_norm, /*with_bias=*/false));
    running_mean_ = register_buffer("running_mean", torch::zeros({features}));
    running_var_ = register_buffer("running_var", torch::ones({features}));
}

torch::Tensor ConditionalBatchNorm2dImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
    auto h = torch::batch_norm(x, {}, {}, running_mean_, running_var_, is_training(), /*momentum=*/0.1,
                               /*eps=*/1e-5, /*cudnn_enabled=*/false);
    const auto gain = (1.0 + gain_->forward(cond)).unsqueeze(-1).unsqueeze(-1);
    const auto shift = shift_->forward(cond).unsqueeze(-1).unsqueeze(-1);
    return h * gain + shift;
}

UpBlockImpl::UpBlockImpl(int64_t in_channels, int64_t out_channels, int64_t cond_dim, bool spectral_norm)
    : in_channels_(in_channels), out_channels_(out_channels) {
    if (cond_dim > 0) {
        bn1_ = register_module("bn1", ConditionalBatchNorm2d(in_channels, cond_dim, spectral_norm));
        bn2_ = register_module("bn2", ConditionalBatchNorm2d(out_channels, cond_dim, spectral_norm));
    }
    conv1_ = register_module("conv1", SNConv2d(in_channels, out_channels, 3, spectral_norm));
    conv2_ = register_module("conv2", SNConv2d(out_channels, out_channels, 3, spectral_norm));
    if (in_channels != out_channels)
        shortcut_ = register_module("shortcut", SNConv2d(in_channels, out_channels, 1, spectral_norm));
}

torch::Tensor UpBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
    const auto up = [](const torch::Tensor& t) {
        return F::interpolate(t, F::InterpolateFuncOptions()
                                     .scale_factor(std::vector<double>{2.0, 2.0})
                                     .mode(torch::kNearest));
    };
    auto h = bn1_ ? bn1_->forward(x, cond) : x;
    h = conv1_->forward(up(torch::relu(h)));
    if (bn2_) h = bn2_->forward(h, cond);
    h = conv2_->forward(torch::relu(h));

    auto skip = up(x);
    if (shortcut_) skip = shortcut_->forward(skip);
    return h + skip;
}

DownBlockImpl::DownBlockImpl(int64_t in_channels, int64_t out_channels, bool preactivation, bool spectral_norm)
    : in_channels_(in_channels), out_channels_(out_channels), preactivation_(preactivation) {
    conv1_ = register_module("conv1", SNConv2d(in_channels, out_channels, 3, spectral_norm));
    conv2_ = register_module("conv2", SNConv2d(out_channels, out_channels, 3, spectral_norm));
    shortcut_ = register_module("shortcut", SNConv2d(in_channels, out_channels, 1, spectral_norm));
}

torch::Tensor DownBlockImpl::forward(const torch::Tensor& x) {
    const auto pool = [](const torch::Tensor& t) { return F::avg_pool2d(t, F::AvgPool2dFuncOptions(2)); };
    auto h = preactivation_ ? torch::relu(x) : x;
    h = conv1_->forward(h);
    h = conv2_->forward(torch::relu(h));
    h = pool(h);

    // A 1x1 conv commutes with average pooling, so project at low resolution.
    return h + shortcut_->forward(pool(x));
}

int64_t count_parameters(const torch::nn::Module& module) {
    int64_t total = 0;
    for (const auto& p : module.parameters()) total += p.numel();
    return total;
}

void converge_spectral_norms(torch::nn::Module& module, int steps) {
    module.apply([steps](torch::nn::Module& m) {
        if (auto* conv = m.as<SNConv2dImpl>()) conv->power_iterate(steps);
        else if (auto* linear = m.as<SNLinearImpl>()) linear->power_iterate(steps);
    });
}

std::vector<std::pair<std::string, double>> spectral_norms(torch::nn::Module& module) {
    std::vector<std::pair<std::string, double>> out;
    torch::NoGradGuard no_grad;
    const bool was_training = module.is_training();
    module.eval();
    for (const auto& item : module.named_modules()) {
        torch::Tensor w;
        if (auto* conv = item.value()->as<SNConv2dImpl>(); conv && conv->spectral_norm()) w = conv->effective_weight();
        else if (auto* lin = item.value()->as<SNLinearImpl>(); lin && lin->spectral_norm()) w = lin->effective_weight();
        if (!w.defined()) continue;
        const auto s = torch::linalg_svdvals(w.flatten(1).to(torch::kDouble));
        out.emplace_back(item.key(), s.max().item<double>());
    }
    module.train(was_training);
    return out;
}

}  // namespace unetgan
