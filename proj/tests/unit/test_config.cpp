// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "unetgan/config.hpp"

using namespace unetgan;

namespace {

bool mentions(const ConfigError& e, const std::string& text) {
    const auto& v = e.violations();
    return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(text) != std::string::npos; });
}

std::vector<std::string> violations_of(const Config& c) { return violations(c); }

}  // namespace

TEST(Config, DeskDefaultsAreValid) {
    Config c;
    c.model.image_size = 32;
    c.model.ch = 16;
    c.model.num_classes = 0;
    EXPECT_NO_THROW(validate(c));
}

TEST(Config, RejectsNonPowerOfTwo) {
    Config c;
    c.model.image_size = 48;
    try {
        validate(c);
        FAIL() << "48 accepted";
    } catch (const ConfigError& e) {
        EXPECT_TRUE(mentions(e, "image_size not power of two"));
    }
}

TEST(Config, RejectsTooSmallImage) {
    Config c;
    c.model.image_size = 8;
    EXPECT_THROW(validate(c), ConfigError);
}

TEST(Config, ConsistencyRequiresCutmix) {
    Config c;
    c.loss.use_consistency = true;
    c.loss.use_cutmix = false;
    try {
        validate(c);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_TRUE(mentions(e, "consistency requires cutmix"));
    }
}

TEST(Config, ReportsEveryViolation) {
    Config c;
    c.model.image_size = 48;
    c.model.ch = 0;
    c.train.lr_g = 0.0;
    c.train.lr_d = -1.0;
    c.train.pmix_max = 1.5;
    c.train.pmix_warmup_epochs = 0;
    c.loss.use_cutmix = false;
    const auto v = violations_of(c);
    EXPECT_EQ(v.size(), 7u);
    try {
        validate(c);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.violations(), v);
    }
}

TEST(Config, ValidateIsIdempotent) {
    Config c;
    c.model.image_size = 64;
    c.train.seed = 17;
    const auto once = validate(c);
    EXPECT_TRUE(validate(once) == once);
    EXPECT_TRUE(once == c);
}

TEST(Config, ResolutionStages) {
    EXPECT_EQ(num_resolution_stages(256), 6);
    EXPECT_EQ(num_resolution_stages(32), 3);
    EXPECT_EQ(num_resolution_stages(16), 2);
    for (int64_t s = 16; s <= 4096; s *= 2) EXPECT_EQ(num_resolution_stages(2 * s), num_resolution_stages(s) + 1);
    EXPECT_THROW(num_resolution_stages(48), ConfigError);
    EXPECT_THROW(num_resolution_stages(8), ConfigError);
    EXPECT_THROW(num_resolution_stages(0), ConfigError);
}

TEST(Config, ChannelMultipliersEndAtOneAndCoverEveryLevel) {
    EXPECT_EQ(channel_multipliers(128), (std::vector<int64_t>{16, 16, 8, 4, 2, 1}));
    EXPECT_EQ(channel_multipliers(256), (std::vector<int64_t>{16, 16, 8, 8, 4, 2, 1}));
    EXPECT_EQ(channel_multipliers(32), (std::vector<int64_t>{8, 4, 2, 1}));
    for (int64_t s = 16; s <= 1024; s *= 2) {
        const auto m = channel_multipliers(s);
        EXPECT_EQ(static_cast<int64_t>(m.size()), num_resolution_stages(s) + 1);
        EXPECT_EQ(m.back(), 1);
        EXPECT_TRUE(std::is_sorted(m.rbegin(), m.rend()));
    }
}

TEST(Config, TextRoundTrip) {
    Config c;
    c.model.num_classes = 3;
    c.model.latent_distribution = LatentDistribution::StandardNormal;
    c.loss.adversarial_variant = AdversarialVariant::Hinge;
    c.loss.lambda_consistency = 0.1;
    c.train.lr_d = 3e-4;
    c.train.seed = 18446744073709551615ull;
    c.data.source = DataSource::ImageFolder;
    c.data.root = "/data/faces";
    const auto text = to_ini(c);
    const auto back = parse_config(text);
    EXPECT_TRUE(back == c);
    EXPECT_EQ(to_ini(back), text);
    EXPECT_EQ(back.train.lr_d, 3e-4);
    EXPECT_EQ(back.loss.lambda_consistency, 0.1);
}

TEST(Config, PartialFileKeepsDefaults) {
    const auto c = parse_config("[train]\ntotal_iterations = 7\n");
    EXPECT_EQ(c.train.total_iterations, 7);
    EXPECT_EQ(c.model.image_size, Config{}.model.image_size);
}

TEST(Config, UnknownKeysAndBadValuesAreAllReported) {
    try {
        parse_config("[model]\nimage_sise = 32\nch = many\n[loss]\nadversarial_variant = wasserstein\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.violations().size(), 3u);
    }
}

TEST(Config, Overrides) {
    Config c;
    apply_override(c, "train.total_iterations=5");
    apply_override(c, " loss.use_cutmix = false ");
    EXPECT_EQ(c.train.total_iterations, 5);
    EXPECT_FALSE(c.loss.use_cutmix);
    EXPECT_THROW(apply_override(c, "train.bogus=1"), ConfigError);
    EXPECT_THROW(apply_override(c, "train.total_iterations"), ConfigError);
    EXPECT_THROW(apply_override(c, "train.total_iterations=abc"), ConfigError);
}

TEST(Config, EveryKeyRoundTripsThroughOverride) {
    const auto text = to_ini(Config{});
    for (const auto& key : config_keys()) EXPECT_NE(text.find(key.substr(key.find('.') + 1) + " = "), std::string::npos) << key;
}

TEST(Config, MissingFile) {
    try {
        load_config("/nonexistent/path/c.cfg");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_TRUE(mentions(e, "config not found"));
    }
}

TEST(Config, LoadFromFile) {
    oracle::TempDir dir;
    Config c;
    c.train.batch_size = 8;
    std::ofstream(dir / "c.ini") << to_ini(c);
    EXPECT_TRUE(load_config(dir / "c.ini") == c);
}
