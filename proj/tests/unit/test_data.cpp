// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "unetgan/data.hpp"
#include "unetgan/visualize.hpp"

using namespace unetgan;

namespace {

torch::Tensor pattern_image(int64_t h, int64_t w, int seed) {
    auto img = torch::empty({h, w, 3}, torch::kUInt8);
    auto a = img.accessor<uint8_t, 3>();
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c) a[y][x][c] = static_cast<uint8_t>((x * 7 + y * 13 + c * 50 + seed * 31) % 256);
    return img;
}

/// Area-weighted box filter with fractional source overlap, the definition
/// of area resampling for a downscale.
double area_resample(const torch::Tensor& hwc, int64_t top, int64_t left, int64_t side, int64_t out, int64_t oy,
                     int64_t ox, int64_t c) {
    auto a = hwc.accessor<uint8_t, 3>();
    const double scale = static_cast<double>(side) / static_cast<double>(out);
    const double y0 = oy * scale, y1 = (oy + 1) * scale, x0 = ox * scale, x1 = (ox + 1) * scale;
    double sum = 0.0;
    for (int64_t y = static_cast<int64_t>(std::floor(y0)); y < static_cast<int64_t>(std::ceil(y1)); ++y) {
        const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        for (int64_t x = static_cast<int64_t>(std::floor(x0)); x < static_cast<int64_t>(std::ceil(x1)); ++x) {
            const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
            sum += wy * wx * a[top + y][left + x][c];
        }
    }
    return sum / (scale * scale);
}

}  // namespace

TEST(Preprocess, CentreCropThenAreaResample) {
    // 100 wide, 60 tall: the crop keeps columns 20..79.
    const auto img = pattern_image(60, 100, 1);
    const auto out = preprocess_image(img, 16);
    ASSERT_EQ(out.sizes(), (std::vector<int64_t>{3, 16, 16}));
    const auto acc = out.accessor<float, 3>();
    const double lsb = 1.0 / 127.5;
    for (auto [oy, ox] : std::vector<std::pair<int64_t, int64_t>>{{0, 0}, {0, 15}, {15, 0}, {15, 15}})
        for (int64_t c = 0; c < 3; ++c) {
            const double expected = area_resample(img, 0, 20, 60, 16, oy, ox, c) / 127.5 - 1.0;
            EXPECT_NEAR(acc[c][oy][ox], expected, lsb * 0.5 + 1e-6) << oy << "," << ox << "," << c;
        }
    for (int64_t oy = 0; oy < 16; ++oy)
        for (int64_t ox = 0; ox < 16; ++ox)
            for (int64_t c = 0; c < 3; ++c)
                ASSERT_NEAR(acc[c][oy][ox], area_resample(img, 0, 20, 60, 16, oy, ox, c) / 127.5 - 1.0, lsb + 1e-6);
}

TEST(Preprocess, RangeAndIdentitySize) {
    const auto img = pattern_image(32, 32, 2);
    const auto out = preprocess_image(img, 32);
    const auto expected = img.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0);
    EXPECT_TRUE(torch::allclose(out, expected, 0, 1e-6));
    EXPECT_LE(out.max().item<float>(), 1.0f);
    EXPECT_GE(out.min().item<float>(), -1.0f);
}

TEST(ImageFolder, UnconditionalSortedAndCounted) {
    oracle::TempDir dir;
    for (int i = 9; i >= 0; --i) write_png(pattern_image(40, 24, i), dir / ("img_" + std::to_string(i) + ".png"));
    std::ofstream(dir / "notes.txt") << "not an image";
    std::ofstream(dir / "broken.png") << "truncated";
    const auto ds = load_image_folder(dir.path(), 16, false);
    EXPECT_EQ(ds.size(), 10);
    EXPECT_EQ(ds.num_classes, 0);
    EXPECT_FALSE(ds.labels.has_value());
    EXPECT_EQ(ds.skipped, 1);
    EXPECT_TRUE(std::is_sorted(ds.paths.begin(), ds.paths.end()));
    EXPECT_EQ(ds.images.sizes(), (std::vector<int64_t>{10, 3, 16, 16}));
    EXPECT_TRUE(torch::equal(ds.images[3], preprocess_image(pattern_image(40, 24, 3), 16)));
}

TEST(ImageFolder, ConditionalLabelsFollowSortedClassNames) {
    oracle::TempDir dir;
    std::filesystem::create_directories(dir / "zebra");
    std::filesystem::create_directories(dir / "ant");
    write_png(pattern_image(16, 16, 0), dir / "zebra/a.png");
    write_png(pattern_image(16, 16, 1), dir / "zebra/b.png");
    write_png(pattern_image(16, 16, 2), dir / "ant/c.png");
    const auto ds = load_image_folder(dir.path(), 16, true);
    EXPECT_EQ(ds.num_classes, 2);
    EXPECT_EQ(ds.class_counts, (std::vector<int64_t>{1, 2}));
    ASSERT_TRUE(ds.labels.has_value());
    EXPECT_EQ(oracle::values(*ds.labels), (std::vector<double>{0, 1, 1}));
    EXPECT_EQ(ds.paths.front(), "ant/c.png");
}

TEST(ImageFolder, EmptyClassIsFatal) {
    oracle::TempDir dir;
    std::filesystem::create_directories(dir / "a");
    std::filesystem::create_directories(dir / "b");
    write_png(pattern_image(16, 16, 0), dir / "a/x.png");
    EXPECT_THROW(load_image_folder(dir.path(), 16, true), DataError);
    EXPECT_THROW(load_image_folder(dir / "missing", 16, false), DataError);
}

TEST(SynthShapes, DeterministicBalancedInRange) {
    const auto a = synth_shapes_dataset(300, 32, 3, 9);
    const auto b = synth_shapes_dataset(300, 32, 3, 9);
    EXPECT_TRUE(torch::equal(a.images, b.images));
    EXPECT_TRUE(torch::equal(*a.labels, *b.labels));
    EXPECT_EQ(a.class_counts, (std::vector<int64_t>{100, 100, 100}));
    for (int64_t k = 0; k < 3; ++k) EXPECT_EQ(a.labels->eq(k).sum().item<int64_t>(), 100);
    const auto c = synth_shapes_dataset(300, 32, 3, 10);
    EXPECT_FALSE(torch::equal(a.images, c.images));
}

TEST(SynthShapes, PixelRange) {
    const auto ds = synth_shapes_dataset(1000, 16, 0, 3);
    EXPECT_EQ(ds.images.sizes(), (std::vector<int64_t>{1000, 3, 16, 16}));
    EXPECT_LE(ds.images.max().item<float>(), 1.0f);
    EXPECT_GE(ds.images.min().item<float>(), -1.0f);
    EXPECT_FALSE(ds.conditional());
    EXPECT_GT(ds.images.std().item<float>(), 0.1f);
}

TEST(SynthShapes, RejectsBadClassCount) {
    EXPECT_THROW(synth_shapes_dataset(10, 16, 1, 0), DataError);
    EXPECT_THROW(synth_shapes_dataset(10, 16, 11, 0), DataError);
    EXPECT_THROW(synth_shapes_dataset(0, 16, 0, 0), DataError);
}

TEST(ImageFolder, WriteThenLoadRoundTrip) {
    oracle::TempDir dir;
    const auto ds = synth_shapes_dataset(12, 16, 2, 4);
    write_image_folder(ds, dir / "out");
    EXPECT_TRUE(std::filesystem::exists(dir / "out/manifest.tsv"));
    const auto back = load_image_folder(dir / "out", 16, true);
    EXPECT_EQ(back.size(), 12);
    EXPECT_EQ(back.class_counts, ds.class_counts);
    // PNG quantization to 8 bits: at most half a level of error.
    std::vector<int64_t> order_a, order_b;
    for (int64_t k = 0; k < 2; ++k) {
        const auto ia = ds.labels->eq(k).nonzero().flatten(), ib = back.labels->eq(k).nonzero().flatten();
        EXPECT_LE((ds.images.index_select(0, ia) - back.images.index_select(0, ib)).abs().max().item<float>(),
                  0.5f / 127.5f + 1e-6f);
    }
}

TEST(Batches, DropLastAndPartition) {
    const auto b = epoch_batches(103, 10, 5, 0);
    EXPECT_EQ(b.size(), 10u);
    std::set<int64_t> seen;
    for (const auto& batch : b) {
        EXPECT_EQ(batch.size(), 10u);
        seen.insert(batch.begin(), batch.end());
    }
    EXPECT_EQ(seen.size(), 100u);
    EXPECT_EQ(epoch_batches(103, 10, 5, 0), b);
    EXPECT_NE(epoch_batches(103, 10, 5, 1), b);
    EXPECT_NE(epoch_batches(103, 10, 6, 0), b);
    EXPECT_THROW(epoch_batches(5, 10, 0, 0), DataError);
}

TEST(Batches, BatchAtFollowsEpochOrder) {
    const auto ds = synth_shapes_dataset(25, 16, 0, 1);
    const auto epoch0 = batches(ds, 4, 3, 0);
    const auto epoch1 = batches(ds, 4, 3, 1);
    ASSERT_EQ(epoch0.size(), 6u);
    EXPECT_EQ(batch_at(ds, 4, 3, 0).indices, epoch0[0].indices);
    EXPECT_EQ(batch_at(ds, 4, 3, 5).indices, epoch0[5].indices);
    EXPECT_EQ(batch_at(ds, 4, 3, 6).indices, epoch1[0].indices);
    const auto b = batch_at(ds, 4, 3, 7);
    EXPECT_TRUE(torch::equal(b.images, gather(ds, b.indices).images));
}

TEST(Batches, ClassGroupsCoverConditionalBatch) {
    const auto ds = synth_shapes_dataset(40, 16, 4, 2);
    for (const auto& b : batches(ds, 8, 1, 0)) {
        ASSERT_TRUE(b.labels.has_value());
        size_t covered = 0;
        for (const auto& group : b.class_groups) {
            covered += group.size();
            for (auto pos : group) EXPECT_EQ((*b.labels)[pos].item<int64_t>(), (*b.labels)[group.front()].item<int64_t>());
        }
        EXPECT_EQ(covered, 8u);
    }
}

TEST(Digest, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex("abc", 3), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const auto t = torch::arange(10, torch::kFloat32);
    EXPECT_EQ(tensor_digest(t), tensor_digest(t.clone()));
    EXPECT_NE(tensor_digest(t), tensor_digest(t + 1));
}
