// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "unetgan/cutmix.hpp"

using namespace unetgan;

namespace {

CutMixMask filled(int64_t h, int64_t w, float value) {
    auto m = torch::full({h, w}, value);
    return {m, static_cast<double>(value), static_cast<double>(value)};
}

std::vector<CutMixMask> random_masks(int64_t n, int64_t h, int64_t w, uint64_t seed) {
    Rng rng(seed);
    std::vector<CutMixMask> out;
    for (int64_t i = 0; i < n; ++i) out.push_back(sample_mask(h, w, rng));
    return out;
}

/// Brute-force mean of the real-area ratio: every pixel tested against a
/// rectangle built from scratch with the same geometry rules.
double brute_force_mean_ratio(int64_t size, int draws, uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> ratio(0.0, 1.0);
    std::uniform_int_distribution<int64_t> centre(0, size - 1);
    double total = 0.0;
    for (int i = 0; i < draws; ++i) {
        const double r = ratio(gen);
        const int64_t cy = centre(gen), cx = centre(gen);
        const auto cut = static_cast<int64_t>(std::lround(static_cast<double>(size) * std::sqrt(1.0 - r)));
        const int64_t top = cy - cut / 2, left = cx - cut / 2;
        int64_t kept = 0;
        for (int64_t y = 0; y < size; ++y)
            for (int64_t x = 0; x < size; ++x) {
                const bool inside = y >= top && y < top + cut && x >= left && x < left + cut;
                if (!inside) ++kept;
            }
        total += static_cast<double>(kept) / static_cast<double>(size * size);
    }
    return total / draws;
}

}  // namespace

TEST(CutMixMask, LimitsOfTheRatio) {
    const auto full = make_mask(32, 32, 1.0, 10, 20);
    EXPECT_EQ(full.mask.min().item<float>(), 1.0f);
    EXPECT_EQ(full.real_ratio, 1.0);
    const auto empty = make_mask(32, 32, 0.0, 16, 16);
    EXPECT_EQ(empty.mask.max().item<float>(), 0.0f);
    EXPECT_EQ(empty.real_ratio, 0.0);
    EXPECT_THROW(make_mask(0, 4, 0.5, 0, 0), CutMixError);
}

TEST(CutMixMask, RatioIsRecomputedExactly) {
    Rng rng(42);
    double sum = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const auto m = sample_mask(32, 32, rng);
        const auto v = oracle::values(m.mask);
        int64_t ones = 0;
        for (double x : v) {
            ASSERT_TRUE(x == 0.0 || x == 1.0);
            if (x == 1.0) ++ones;
        }
        ASSERT_EQ(m.real_ratio, static_cast<double>(ones) / 1024.0);
        ASSERT_GE(m.real_ratio, 0.0);
        ASSERT_LE(m.real_ratio, 1.0);
        sum += m.real_ratio;
    }
    const double mean = sum / 10000.0;
    const double reference = brute_force_mean_ratio(32, 10000, 7);
    EXPECT_GT(reference, 0.55);
    EXPECT_LT(reference, 0.70);
    EXPECT_GT(mean, 0.55);
    EXPECT_LT(mean, 0.70);
    EXPECT_NEAR(mean, reference, 0.01);
}

TEST(CutMixMask, CutRegionIsOneRectangle) {
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        const auto m = sample_mask(16, 24, rng);
        const auto zeros = (m.mask == 0).nonzero();
        if (zeros.size(0) == 0) continue;
        const auto lo = std::get<0>(zeros.min(0)), hi = std::get<0>(zeros.max(0));
        const auto area = (hi - lo + 1).prod().item<int64_t>();
        EXPECT_EQ(area, zeros.size(0));
    }
}

TEST(Mix, IdentitiesAreBitExact) {
    const auto x = torch::randn({3, 3, 8, 8}), g = torch::randn({3, 3, 8, 8});
    std::vector<CutMixMask> ones(3, filled(8, 8, 1.0f)), zeros(3, filled(8, 8, 0.0f));
    EXPECT_TRUE(torch::equal(mix(x, g, ones), x));
    EXPECT_TRUE(torch::equal(mix(x, g, zeros), g));
    const auto masks = random_masks(3, 8, 8, 1);
    EXPECT_TRUE(torch::equal(mix(x, x, masks), x));
}

TEST(Mix, ComplementarityAndIdempotence) {
    const auto x = torch::randn({4, 3, 16, 16}, torch::kFloat64), g = torch::randn({4, 3, 16, 16}, torch::kFloat64);
    const auto masks = random_masks(4, 16, 16, 2);
    EXPECT_TRUE(torch::equal(mix(x, g, masks) + mix(g, x, masks), x + g));
    const auto once = mix(x, g, masks);
    EXPECT_TRUE(torch::equal(mix(once, g, masks), once));
}

TEST(Mix, MatchesScalarOracleAndBroadcastsOverChannels) {
    const auto x = torch::randn({2, 3, 8, 8}, torch::kFloat64), g = torch::randn({2, 3, 8, 8}, torch::kFloat64);
    const auto masks = random_masks(2, 8, 8, 3);
    const auto stacked = torch::stack({masks[0].mask, masks[1].mask});
    const auto expected = oracle::mix(oracle::values(x), oracle::values(g), oracle::values(stacked), 2, 3);
    const auto got = oracle::values(mix(x, g, masks));
    for (size_t i = 0; i < got.size(); ++i) ASSERT_EQ(got[i], expected[i]);
}

TEST(Mix, RejectsShapeMismatch) {
    const auto x = torch::randn({2, 3, 8, 8});
    EXPECT_THROW(mix(x, torch::randn({2, 3, 8, 4}), random_masks(2, 8, 8, 0)), CutMixError);
    EXPECT_THROW(mix(x, x, random_masks(3, 8, 8, 0)), CutMixError);
    EXPECT_THROW(mix(x, x, random_masks(2, 4, 4, 0)), CutMixError);
}

TEST(MixMaps, Oracle) {
    const auto a = torch::randn({3, 1, 8, 8}, torch::kFloat64), b = torch::randn({3, 1, 8, 8}, torch::kFloat64);
    const auto masks = random_masks(3, 8, 8, 4);
    EXPECT_TRUE(torch::equal(mix_maps(a, a, masks), a));
    EXPECT_TRUE(torch::equal(mix_maps(a, b, std::vector<CutMixMask>(3, filled(8, 8, 1.0f))), a));
    std::vector<torch::Tensor> m;
    for (const auto& k : masks) m.push_back(k.mask);
    const auto expected = oracle::mix(oracle::values(a), oracle::values(b), oracle::values(torch::stack(m)), 3, 1);
    const auto got = oracle::values(mix_maps(a, b, masks));
    for (size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], 1e-12);
    EXPECT_THROW(mix_maps(torch::randn({3, 2, 8, 8}), torch::randn({3, 2, 8, 8}), masks), CutMixError);
}

TEST(PmixSchedule, EndpointsAndLinearity) {
    EXPECT_EQ(pmix_schedule(0.0, 4, 0.5), 0.0);
    EXPECT_EQ(pmix_schedule(4.0, 4, 0.5), 0.5);
    EXPECT_EQ(pmix_schedule(2.0, 4, 0.5), 0.25);
    EXPECT_EQ(pmix_schedule(100.0, 4, 0.5), 0.5);
    for (int64_t n : {1, 3, 7, 10, 200}) EXPECT_EQ(pmix_schedule(static_cast<double>(n), n, 0.5), 0.5);
    double previous = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double p = pmix_schedule(i * 0.1, 7, 0.5);
        EXPECT_GE(p, previous);
        EXPECT_LE(p, 0.5);
        previous = p;
    }
}

TEST(CutMixBatch, Unconditional) {
    const auto x = torch::randn({4, 3, 16, 16}), g = torch::randn({4, 3, 16, 16});
    Rng rng(5);
    const auto batch = build_cutmix_batch(x, g, std::nullopt, std::nullopt, rng);
    ASSERT_EQ(batch.masks.size(), 4u);
    EXPECT_EQ(batch.images.sizes(), x.sizes());
    EXPECT_EQ(CutMixBatch::enc_target, 0.0);
    EXPECT_TRUE(torch::equal(batch.images, mix(x, g, batch.masks)));
    EXPECT_EQ(batch.stacked_masks().sizes(), (std::vector<int64_t>{4, 1, 16, 16}));
    for (const auto& m : batch.masks) EXPECT_EQ(m.real_ratio, m.mask.sum().item<double>() / 256.0);
}

TEST(CutMixBatch, ConditionalRejectsCrossClassPairs) {
    const auto x = torch::randn({3, 3, 16, 16});
    Rng rng(6);
    const auto y = torch::tensor({0, 1, 2}, torch::kInt64);
    EXPECT_NO_THROW(build_cutmix_batch(x, x, y, y, rng));
    try {
        build_cutmix_batch(x, x, y, torch::tensor({0, 2, 2}, torch::kInt64), rng);
        FAIL();
    } catch (const CutMixError& e) {
        EXPECT_NE(std::string(e.what()).find("within-class mixing violated"), std::string::npos);
    }
    EXPECT_THROW(build_cutmix_batch(x, x, y, std::nullopt, rng), CutMixError);
}

TEST(CutMixBatch, MasksDifferAcrossSamples) {
    // Two masks coincide only when the rounded cut size and both centre
    // coordinates match.
    Rng rng(7);
    const auto x = torch::zeros({64, 3, 32, 32});
    const auto batch = build_cutmix_batch(x, x, std::nullopt, std::nullopt, rng);
    int identical = 0;
    for (size_t i = 1; i < batch.masks.size(); ++i)
        if (torch::equal(batch.masks[i].mask, batch.masks[i - 1].mask) && batch.masks[i].real_ratio < 1.0) ++identical;
    EXPECT_LE(identical, 1);
    std::set<double> sampled;
    for (const auto& m : batch.masks) sampled.insert(m.sampled_ratio);
    EXPECT_EQ(sampled.size(), batch.masks.size());
}
