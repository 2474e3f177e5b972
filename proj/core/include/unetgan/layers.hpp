// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_LAYERS_HPP
#define UNETGAN_LAYERS_HPP

#include <torch/torch.h>

namespace unetgan {

/// W / sigma(W), with sigma estimated by one power-iteration step on the
/// stored (u, v) pair. The pair is refreshed only when `update` is set, so
/// eval-mode forwards are pure functions of the weights.
torch::Tensor spectrally_normalize(const torch::Tensor& weight, torch::Tensor& u, torch::Tensor& v, bool update);

/// 2-D convolution with optional spectral normalization and orthogonal init.
class SNConv2dImpl : public torch::nn::Module {
public:
    SNConv2dImpl(int64_t in_channels, int64_t out_channels, int64_t kernel, bool spectral_norm);

    torch::Tensor forward(const torch::Tensor& x);

    /// Weight actually used by forward().
    torch::Tensor effective_weight();
    /// Runs `steps` power iterations without touching the weights.
    void power_iterate(int steps);
    bool spectral_norm() const { return spectral_norm_; }

    torch::Tensor weight, bias;

private:
    int64_t padding_;
    bool spectral_norm_;
    torch::Tensor u_, v_;
};
TORCH_MODULE(SNConv2d);

class SNLinearImpl : public torch::nn::Module {
public:
    SNLinearImpl(int64_t in_features, int64_t out_features, bool spectral_norm, bool with_bias = true);

    torch::Tensor forward(const torch::Tensor& x);
    torch::Tensor effective_weight();
    void power_iterate(int steps);
    bool spectral_norm() const { return spectral_norm_; }

    torch::Tensor weight, bias;

private:
    bool spectral_norm_;
    torch::Tensor u_, v_;
};
TORCH_MODULE(SNLinear);

/// BatchNorm without learned affine terms; gain and shift are affine maps of
/// a conditioning vector (z, or [z, class embedding]).
class ConditionalBatchNorm2dImpl : public torch::nn::Module {
public:
    ConditionalBatchNorm2dImpl(int64_t features, int64_t cond_dim, bool spectral_norm);

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

private:
    SNLinear gain_{nullptr}, shift_{nullptr};
    torch::Tensor running_mean_, running_var_;
};
TORCH_MODULE(ConditionalBatchNorm2d);

/// Residual 2x upsampling block. With cond_dim > 0 each conv is preceded by
/// a conditional BatchNorm; with cond_dim == 0 (discriminator decoder) there
/// is no normalization at all.
class UpBlockImpl : public torch::nn::Module {
public:
    UpBlockImpl(int64_t in_channels, int64_t out_channels, int64_t cond_dim, bool spectral_norm);

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond = {});

    int64_t in_channels() const { return in_channels_; }
    int64_t out_channels() const { return out_channels_; }

private:
    int64_t in_channels_, out_channels_;
    ConditionalBatchNorm2d bn1_{nullptr}, bn2_{nullptr};
    SNConv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
};
TORCH_MODULE(UpBlock);

/// Residual 2x downsampling block (average pooling), BigGAN discriminator
/// style. The first block of a network skips the leading ReLU.
class DownBlockImpl : public torch::nn::Module {
public:
    DownBlockImpl(int64_t in_channels, int64_t out_channels, bool preactivation, bool spectral_norm);

    torch::Tensor forward(const torch::Tensor& x);

    int64_t in_channels() const { return in_channels_; }
    int64_t out_channels() const { return out_channels_; }

private:
    int64_t in_channels_, out_channels_;
    bool preactivation_;
    SNConv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
};
TORCH_MODULE(DownBlock);

int64_t count_parameters(const torch::nn::Module& module);

/// Runs power iteration to convergence on every spectrally normalized layer.
void converge_spectral_norms(torch::nn::Module& module, int steps = 200);

/// Largest singular value of each normalized layer's effective weight,
/// computed by SVD; keyed by the module path.
std::vector<std::pair<std::string, double>> spectral_norms(torch::nn::Module& module);

}  // namespace unetgan

#endif
