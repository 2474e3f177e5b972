// SPDX-License-Identifier: Apache-2.0
#include <random>

#include <benchmark/benchmark.h>

#include "unetgan/evaluation.hpp"

using namespace unetgan;

namespace {

FeatureGaussian random_gaussian(int64_t dim, uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd rows(4 * dim, dim);
    for (Eigen::Index i = 0; i < rows.rows(); ++i)
        for (Eigen::Index j = 0; j < rows.cols(); ++j) rows(i, j) = normal(gen);
    return gaussian_two_pass(rows);
}

void BM_FrechetDistance(benchmark::State& state) {
    const auto a = random_gaussian(state.range(0), 1), b = random_gaussian(state.range(0), 2);
    for (auto _ : state) benchmark::DoNotOptimize(frechet_distance(a, b));
}
BENCHMARK(BM_FrechetDistance)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_FeatureExtraction(benchmark::State& state) {
    RandomConvExtractor extractor;
    const auto images = torch::rand({50, 3, 32, 32}) * 2 - 1;
    torch::NoGradGuard no_grad;
    for (auto _ : state) benchmark::DoNotOptimize(extractor.features(images));
    state.SetItemsProcessed(state.iterations() * 50);
}
BENCHMARK(BM_FeatureExtraction)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
