// SPDX-License-Identifier: Apache-2.0
#include "unetgan/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "unetgan/data.hpp"
#include "unetgan/rng.hpp"

namespace unetgan {

namespace {

Eigen::MatrixXd to_eigen(const torch::Tensor& rows) {
    TORCH_CHECK(rows.dim() == 2, "expected a (count, dim) tensor");
    const auto t = rows.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    Eigen::MatrixXd out(t.size(0), t.size(1));
    const double* p = t.data_ptr<double>();
    for (int64_t i = 0; i < t.size(0); ++i)
        for (int64_t j = 0; j < t.size(1); ++j) out(i, j) = p[i * t.size(1) + j];
    return out;
}

void require_finite(const FeatureGaussian& g, const char* what) {
    if (!g.mu.allFinite() || !g.sigma.allFinite()) throw EvaluationError(std::string(what) + ": non-finite statistics");
}

}  // namespace

MomentAccumulator::MomentAccumulator(int64_t dim) : mean_(Eigen::VectorXd::Zero(dim)), scatter_(Eigen::MatrixXd::Zero(dim, dim)) {}

void MomentAccumulator::add(const Eigen::MatrixXd& rows) {
    if (rows.cols() != mean_.size()) throw EvaluationError("moment accumulator: dimension mismatch");
    const int64_t nb = rows.rows();
    if (nb == 0) return;
    const Eigen::VectorXd batch_mean = rows.colwise().mean().transpose();
    const Eigen::MatrixXd centred = rows.rowwise() - batch_mean.transpose();
    const Eigen::MatrixXd batch_scatter = centred.transpose() * centred;

    const int64_t n = n_ + nb;
    const Eigen::VectorXd delta = batch_mean - mean_;
    const double na_nb_over_n = static_cast<double>(n_) * static_cast<double>(nb) / static_cast<double>(n);
    scatter_ += batch_scatter + na_nb_over_n * delta * delta.transpose();
    mean_ += delta * (static_cast<double>(nb) / static_cast<double>(n));
    n_ = n;
}

void MomentAccumulator::add(const torch::Tensor& rows) { add(to_eigen(rows)); }

FeatureGaussian MomentAccumulator::gaussian() const {
    if (n_ < 2) throw EvaluationError("moment accumulator: need at least two samples");
    FeatureGaussian g;
    g.mu = mean_;
    g.sigma = scatter_ / static_cast<double>(n_ - 1);
    g.sigma = 0.5 * (g.sigma + g.sigma.transpose()).eval();
    g.n = n_;
    return g;
}

FeatureGaussian gaussian_two_pass(const Eigen::MatrixXd& rows) {
    if (rows.rows() < 2) throw EvaluationError("two-pass moments: need at least two samples");
    FeatureGaussian g;
    g.mu = rows.colwise().mean().transpose();
    const Eigen::MatrixXd centred = rows.rowwise() - g.mu.transpose();
    g.sigma = centred.transpose() * centred / static_cast<double>(rows.rows() - 1);
    g.n = rows.rows();
    return g;
}

double frechet_distance(const FeatureGaussian& a, const FeatureGaussian& b) {
    if (a.dim() != b.dim() || a.sigma.rows() != a.dim() || a.sigma.cols() != a.dim() || b.sigma.rows() != b.dim() ||
        b.sigma.cols() != b.dim())
        throw EvaluationError("frechet_distance: dimension mismatch");
    require_finite(a, "frechet_distance");
    require_finite(b, "frechet_distance");

    const Eigen::MatrixXd sa = 0.5 * (a.sigma + a.sigma.transpose());
    const Eigen::MatrixXd sb = 0.5 * (b.sigma + b.sigma.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_a(sa);
    const Eigen::VectorXd root_vals = eig_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd root_a = eig_a.eigenvectors() * root_vals.asDiagonal() * eig_a.eigenvectors().transpose();

    Eigen::MatrixXd product = root_a * sb * root_a;
    product = 0.5 * (product + product.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_p(product, Eigen::EigenvaluesOnly);
    const double trace_root = eig_p.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double value = (a.mu - b.mu).squaredNorm() + sa.trace() + sb.trace() - 2.0 * trace_root;
    return std::max(0.0, value);
}

double inception_style_score(const Eigen::MatrixXd& probs) {
    if (probs.rows() < 1 || probs.cols() < 1) throw EvaluationError("inception_style_score: empty input");
    if (!probs.allFinite() || probs.minCoeff() < 0.0) throw EvaluationError("inception_style_score: invalid distributions");
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
        if (std::abs(probs.row(i).sum() - 1.0) > 1e-6)
            throw EvaluationError("inception_style_score: row " + std::to_string(i) + " does not sum to 1");

    const Eigen::VectorXd marginal = probs.colwise().mean().transpose();
    double total_kl = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
        for (Eigen::Index k = 0; k < probs.cols(); ++k) {
            const double p = probs(i, k);
            if (p > 0.0) total_kl += p * (std::log(p) - std::log(marginal(k)));
        }
    const double score = std::exp(total_kl / static_cast<double>(probs.rows()));
    return std::clamp(score, 1.0, static_cast<double>(probs.cols()));
}

double inception_style_score(const torch::Tensor& probs) { return inception_style_score(to_eigen(probs)); }

RandomConvExtractor::RandomConvExtractor(int64_t in_channels) {
    Rng rng(0x5eedfeaULL);
    const auto he_normal = [&](std::vector<int64_t> shape, int64_t fan_in) {
        int64_t count = 1;
        for (auto s : shape) count *= s;
        std::vector<float> values(static_cast<size_t>(count));
        const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& v : values) v = static_cast<float>(rng.normal() * scale);
        return torch::tensor(values).reshape(shape);
    };
    const std::vector<int64_t> widths{in_channels, 32, 64, 64};
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
        conv_weights_.push_back(he_normal({widths[i + 1], widths[i], 3, 3}, widths[i] * 9));
        conv_biases_.push_back(torch::zeros({widths[i + 1]}));
    }
    head_ = he_normal({num_classes(), dim()}, dim());

    std::string bytes = id();
    for (const auto& w : conv_weights_) bytes += tensor_digest(w);
    bytes += tensor_digest(head_);
    digest_ = sha256_hex(bytes.data(), bytes.size());
}

torch::Tensor RandomConvExtractor::features(const torch::Tensor& images) const {
    TORCH_CHECK(images.dim() == 4 && images.size(1) == conv_weights_.front().size(1), "extractor: unexpected image shape ",
                images.sizes());
    torch::NoGradGuard no_grad;
    auto h = images.detach().to(torch::kFloat32);
    for (size_t i = 0; i < conv_weights_.size(); ++i) {
        h = torch::relu(torch::conv2d(h, conv_weights_[i], conv_biases_[i], 1, 1));
        if (i + 1 < conv_weights_.size()) h = torch::avg_pool2d(h, 2);
    }
    return h.mean({2, 3}).to(torch::kFloat64);
}

torch::Tensor RandomConvExtractor::class_probabilities(const torch::Tensor& images) const {
    const auto f = features(images);
    return torch::softmax(torch::matmul(f, head_.to(torch::kFloat64).t()), 1);
}

ImageSource tensor_source(const torch::Tensor& images) {
    auto offset = std::make_shared<int64_t>(0);
    return [images, offset](int64_t count) {
        const int64_t start = std::min(*offset, images.size(0));
        const int64_t end = std::min(start + count, images.size(0));
        *offset = end;
        return images.slice(0, start, end);
    };
}

FeatureGaussian feature_statistics(const FeatureExtractor& extractor, const ImageSource& source, int64_t n,
                                   int64_t batch_size) {
    if (n < 2 || batch_size < 1) throw EvaluationError("feature_statistics: need n >= 2 and batch_size >= 1");
    if (n <= extractor.dim())
        std::cerr << "warning: " << n << " samples for " << extractor.dim() << "-dim features; covariance is singular\n";
    MomentAccumulator acc(extractor.dim());
    while (acc.count() < n) {
        const auto images = source(std::min(batch_size, n - acc.count()));
        if (images.size(0) == 0) break;
        acc.add(extractor.features(images));
    }
    if (acc.count() < n)
        std::cerr << "warning: image stream ended after " << acc.count() << " of " << n << " samples\n";
    return acc.gaussian();
}

double compute_fid(const FeatureExtractor& extractor, const ImageSource& real, const ImageSource& fake, int64_t n,
                   int64_t batch_size) {
    return frechet_distance(feature_statistics(extractor, real, n, batch_size),
                            feature_statistics(extractor, fake, n, batch_size));
}

void save_statistics(const RealStatistics& stats, const std::filesystem::path& path) {
    nlohmann::json j;
    j["extractor_digest"] = stats.extractor_digest;
    j["n"] = stats.gaussian.n;
    j["mu"] = std::vector<double>(stats.gaussian.mu.data(), stats.gaussian.mu.data() + stats.gaussian.mu.size());
    auto sigma = nlohmann::json::array();
    for (Eigen::Index i = 0; i < stats.gaussian.sigma.rows(); ++i) {
        std::vector<double> row(static_cast<size_t>(stats.gaussian.sigma.cols()));
        for (Eigen::Index k = 0; k < stats.gaussian.sigma.cols(); ++k) row[static_cast<size_t>(k)] = stats.gaussian.sigma(i, k);
        sigma.push_back(row);
    }
    j["sigma"] = sigma;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump() << "\n";
}

RealStatistics load_statistics(const std::filesystem::path& path, const std::string& expected_digest) {
    std::ifstream in(path);
    if (!in) throw EvaluationError("statistics cache not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw EvaluationError("corrupt statistics cache " + path.string() + ": " + e.what());
    }
    RealStatistics stats;
    stats.extractor_digest = j.at("extractor_digest").get<std::string>();
    if (stats.extractor_digest != expected_digest)
        throw EvaluationError("statistics cache " + path.string() + " was computed with a different feature extractor");
    const auto mu = j.at("mu").get<std::vector<double>>();
    const auto sigma = j.at("sigma").get<std::vector<std::vector<double>>>();
    const auto d = static_cast<Eigen::Index>(mu.size());
    stats.gaussian.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), d);
    stats.gaussian.sigma.resize(d, d);
    if (static_cast<Eigen::Index>(sigma.size()) != d) throw EvaluationError("statistics cache: sigma shape mismatch");
    for (Eigen::Index i = 0; i < d; ++i) {
        if (static_cast<Eigen::Index>(sigma[static_cast<size_t>(i)].size()) != d)
            throw EvaluationError("statistics cache: sigma shape mismatch");
        for (Eigen::Index k = 0; k < d; ++k) stats.gaussian.sigma(i, k) = sigma[static_cast<size_t>(i)][static_cast<size_t>(k)];
    }
    stats.gaussian.n = j.at("n").get<int64_t>();
    return stats;
}

ImageSource generator_source(GeneratorImpl& generator, const ModelConfig& model, uint64_t seed) {
    auto rng = std::make_shared<Rng>(seed);
    return [&generator, model, rng](int64_t count) { return generate_frozen(generator, sample_latent(model, count, *rng)); };
}

GeneratorScores score_generator(GeneratorImpl& generator, const ModelConfig& model, const FeatureExtractor& extractor,
                                const RealStatistics& real, int64_t n, int64_t batch_size, uint64_t seed) {
    if (real.extractor_digest != extractor.digest())
        throw EvaluationError("real statistics were computed with a different feature extractor");
    const auto source = generator_source(generator, model, seed);
    MomentAccumulator acc(extractor.dim());
    std::vector<torch::Tensor> probs;
    while (acc.count() < n) {
        const auto images = source(std::min(batch_size, n - acc.count()));
        acc.add(extractor.features(images));
        probs.push_back(extractor.class_probabilities(images));
    }
    return {frechet_distance(real.gaussian, acc.gaussian()), inception_style_score(torch::cat(probs))};
}

}  // namespace unetgan
