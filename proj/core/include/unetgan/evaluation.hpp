// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_EVALUATION_HPP
#define UNETGAN_EVALUATION_HPP

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "unetgan/config.hpp"
#include "unetgan/generator.hpp"

namespace unetgan {

class EvaluationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Gaussian fitted to feature vectors; sigma is the unbiased covariance.
struct FeatureGaussian {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    int64_t n = 0;

    int64_t dim() const { return mu.size(); }
};

/// One-pass mean/covariance accumulator. Batches are merged with the
/// pairwise (Chan) update, so the result does not depend on how the stream
/// is split into batches beyond rounding.
class MomentAccumulator {
public:
    explicit MomentAccumulator(int64_t dim);
    void add(const Eigen::MatrixXd& rows);  // (count, dim)
    void add(const torch::Tensor& rows);    // (count, dim), any float dtype
    int64_t count() const { return n_; }
    FeatureGaussian gaussian() const;

private:
    int64_t n_ = 0;
    Eigen::VectorXd mean_;
    Eigen::MatrixXd scatter_;
};

/// Two-pass reference: mean, then centred scatter / (n - 1).
FeatureGaussian gaussian_two_pass(const Eigen::MatrixXd& rows);

/// |mu_a - mu_b|^2 + Tr(sigma_a + sigma_b - 2 (sigma_a sigma_b)^(1/2)).
/// The square-root trace is taken from the eigenvalues of the symmetric
/// product sqrt(sigma_a) sigma_b sqrt(sigma_a); eigenvalues below zero are
/// clamped. Never returns a negative value.
double frechet_distance(const FeatureGaussian& a, const FeatureGaussian& b);

/// exp(mean_i KL(p_i || mean_j p_j)) for an (N, K) matrix of class
/// probabilities. Lies in [1, K].
double inception_style_score(const Eigen::MatrixXd& probs);
double inception_style_score(const torch::Tensor& probs);

/// Frozen image embedding used for the proxy FID and IS.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string id() const = 0;
    /// SHA-256 over the weights; stamped into statistics caches.
    virtual std::string digest() const = 0;
    virtual int64_t dim() const = 0;
    virtual int64_t num_classes() const = 0;
    /// (N, dim) float64 features of images in [-1, 1].
    virtual torch::Tensor features(const torch::Tensor& images) const = 0;
    /// (N, num_classes) float64 class probabilities.
    virtual torch::Tensor class_probabilities(const torch::Tensor& images) const = 0;
};

/// Small convolutional net with fixed pseudo-random weights:
/// three 3x3 conv + ReLU layers (32, 64, 64 channels) with 2x average
/// pooling between them, then global average pooling (dim 64). A fixed
/// random linear layer with softmax over 10 classes provides the IS
/// probabilities. Weights are regenerated bit-identically from a constant
/// seed, so results are comparable across runs and machines.
class RandomConvExtractor final : public FeatureExtractor {
public:
    explicit RandomConvExtractor(int64_t in_channels = 3);
    std::string id() const override { return "random-conv-64/v1"; }
    std::string digest() const override { return digest_; }
    int64_t dim() const override { return 64; }
    int64_t num_classes() const override { return 10; }
    torch::Tensor features(const torch::Tensor& images) const override;
    torch::Tensor class_probabilities(const torch::Tensor& images) const override;

private:
    std::vector<torch::Tensor> conv_weights_;
    std::vector<torch::Tensor> conv_biases_;
    torch::Tensor head_;
    std::string digest_;
};

/// Returns the next `count` images of a stream (may return fewer at the end).
using ImageSource = std::function<torch::Tensor(int64_t count)>;

ImageSource tensor_source(const torch::Tensor& images);

/// Streams up to n images through the extractor in batches and fits a
/// Gaussian. Warns on stderr when n <= dim.
FeatureGaussian feature_statistics(const FeatureExtractor& extractor, const ImageSource& source, int64_t n,
                                   int64_t batch_size);

double compute_fid(const FeatureExtractor& extractor, const ImageSource& real, const ImageSource& fake, int64_t n,
                   int64_t batch_size);

struct RealStatistics {
    FeatureGaussian gaussian;
    std::string extractor_digest;
};

void save_statistics(const RealStatistics& stats, const std::filesystem::path& path);
/// Throws EvaluationError if the file was produced by a different extractor.
RealStatistics load_statistics(const std::filesystem::path& path, const std::string& expected_digest);

/// Samples `n` images from a generator with a fixed latent stream. Batch
/// norm uses batch statistics; the module's buffers are left untouched.
ImageSource generator_source(GeneratorImpl& generator, const ModelConfig& model, uint64_t seed);

struct GeneratorScores {
    double fid = 0.0;
    double is = 0.0;
};

GeneratorScores score_generator(GeneratorImpl& generator, const ModelConfig& model, const FeatureExtractor& extractor,
                                const RealStatistics& real, int64_t n, int64_t batch_size, uint64_t seed);

}  // namespace unetgan

#endif
