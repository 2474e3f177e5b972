// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "oracles.hpp"
#include "unetgan/trainer.hpp"

using namespace unetgan;

namespace {

struct Fixture {
    Config config;
    Dataset data;
    explicit Fixture(int64_t num_classes = 0) : config(oracle::tiny_config(num_classes)) {
        data = synth_shapes_dataset(config.data.synth_size, config.model.image_size, num_classes, config.data.synth_seed);
    }
    Batch batch(int64_t iteration) const { return batch_at(data, config.train.batch_size, config.train.seed, iteration); }
};

void run_steps(TrainState& state, const Fixture& f, int64_t steps) {
    for (int64_t i = 0; i < steps; ++i) train_step(state, f.batch(state.iteration), f.data.size());
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Ema, ScalarDefinition) {
    const auto w0 = torch::randn({5}, torch::kFloat64), w1 = torch::randn({5}, torch::kFloat64);
    const auto got = oracle::values(ema_update(w0, w1, 0.9999));
    const auto a = oracle::values(w0), b = oracle::values(w1);
    for (size_t i = 0; i < 5; ++i) EXPECT_NEAR(got[i], 0.9999 * a[i] + 0.0001 * b[i], 1e-15);
    EXPECT_TRUE(torch::equal(ema_update(w0, w1, 0.0), w1));
    EXPECT_THROW(ema_update(w0, torch::zeros({4}, torch::kFloat64), 0.5), std::invalid_argument);
    EXPECT_THROW(ema_update(w0, w1, 1.0), std::invalid_argument);
    EXPECT_THROW(ema_update(w0, w1, -0.1), std::invalid_argument);
}

TEST(Ema, RepeatedUpdatesMatchClosedForm) {
    const double decay = 0.9;
    auto ema = torch::full({3}, 2.0, torch::kFloat64);
    const auto target = torch::full({3}, -1.0, torch::kFloat64);
    for (int k = 1; k <= 50; ++k) {
        ema = ema_update(ema, target, decay);
        const double expected = -1.0 + (2.0 - -1.0) * std::pow(decay, k);
        EXPECT_NEAR(ema[0].item<double>(), expected, 1e-10) << k;
    }
}

TEST(TrainState, FreshStateEmaEqualsGenerator) {
    Fixture f;
    auto s = make_train_state(f.config);
    EXPECT_EQ(parameter_digest(*s.ema), parameter_digest(*s.g));
    for (const auto& p : s.ema->parameters()) EXPECT_FALSE(p.requires_grad());
    EXPECT_EQ(s.iteration, 0);
    EXPECT_DOUBLE_EQ(s.epoch(32), 0.0);
    s.iteration = 16;
    EXPECT_DOUBLE_EQ(s.epoch(32), 2.0);
}

TEST(TrainStep, ZeroDecayCopiesGenerator) {
    Fixture f;
    f.config.train.ema_decay = 0.0;
    auto s = make_train_state(f.config);
    train_step(s, f.batch(0), f.data.size());
    const auto g = named_state(*s.g), e = named_state(*s.ema);
    ASSERT_EQ(g.size(), e.size());
    for (size_t i = 0; i < g.size(); ++i) EXPECT_TRUE(torch::equal(g[i].second, e[i].second)) << g[i].first;
    for (const auto& p : s.ema->parameters()) EXPECT_FALSE(p.grad().defined());
}

TEST(TrainStep, SeededRunsAreBitIdentical) {
    Fixture f;
    auto a = make_train_state(f.config), b = make_train_state(f.config);
    run_steps(a, f, 10);
    run_steps(b, f, 10);
    EXPECT_EQ(state_digest(a), state_digest(b));
    EXPECT_EQ(serialize_checkpoint(a), serialize_checkpoint(b));
    auto c = f.config;
    c.train.seed = 99;
    auto other = make_train_state(c);
    run_steps(other, f, 10);
    EXPECT_NE(state_digest(a), state_digest(other));
}

TEST(TrainStep, NoCutMixAtEpochZero) {
    Fixture f;
    auto s = make_train_state(f.config);
    StepOptions forced;
    forced.forced_coin = 0.0;
    const auto r = train_step(s, f.batch(0), f.data.size(), forced);
    EXPECT_EQ(r.pmix, 0.0);
    EXPECT_FALSE(r.cutmix_applied);
    EXPECT_EQ(r.d.cutmix_dec_term, 0.0);
    EXPECT_EQ(r.d.consistency_term, 0.0);
}

TEST(TrainStep, ForcedCoinTriggersCutMixAfterWarmupStarts) {
    Fixture f;
    auto s = make_train_state(f.config);
    s.iteration = 4;
    StepOptions below, above;
    below.forced_coin = 0.0;
    above.forced_coin = 0.999;
    const auto r = train_step(s, f.batch(4), f.data.size(), below);
    EXPECT_GT(r.pmix, 0.0);
    EXPECT_TRUE(r.cutmix_applied);
    EXPECT_GT(r.d.cutmix_enc_term, 0.0);
    EXPECT_GT(r.d.cutmix_dec_term, 0.0);
    EXPECT_GE(r.d.consistency_term, 0.0);
    const auto q = train_step(s, f.batch(5), f.data.size(), above);
    EXPECT_FALSE(q.cutmix_applied);
}

TEST(TrainStep, BreakdownIsAdditive) {
    Fixture f;
    f.config.train.pmix_warmup_epochs = 1;
    f.config.train.pmix_max = 1.0;
    f.config.loss.lambda_consistency = 0.7;
    auto s = make_train_state(f.config);
    bool saw_cutmix = false;
    for (int i = 0; i < 12; ++i) {
        const auto r = train_step(s, f.batch(s.iteration), f.data.size());
        saw_cutmix = saw_cutmix || r.cutmix_applied;
        EXPECT_EQ(r.d.total, r.d.enc_term + r.d.dec_term + r.d.cutmix_enc_term + r.d.cutmix_dec_term +
                                 r.d.lambda * r.d.consistency_term);
        EXPECT_EQ(r.g.total, r.g.enc_term + r.g.dec_term);
        EXPECT_EQ(r.d.lambda, 0.7);
    }
    EXPECT_TRUE(saw_cutmix);
}

TEST(TrainStep, EncoderOnlyAblationHasNoDecoderTerms) {
    Fixture f;
    f.config.loss.use_decoder_head = false;
    f.config.loss.use_cutmix = false;
    f.config.loss.use_consistency = false;
    auto s = make_train_state(f.config);
    s.iteration = 8;
    StepOptions forced;
    forced.forced_coin = 0.0;
    const auto r = train_step(s, f.batch(8), f.data.size(), forced);
    EXPECT_EQ(r.d.dec_term, 0.0);
    EXPECT_EQ(r.g.dec_term, 0.0);
    EXPECT_FALSE(r.cutmix_applied);
}

TEST(TrainStep, UpdatesTouchOnlyTheirNetwork) {
    Fixture f;
    auto s = make_train_state(f.config);
    const auto g0 = parameter_digest(*s.g), d0 = parameter_digest(*s.d);
    StepResult out;
    discriminator_update(s, f.batch(0), f.data.size(), {}, out);
    EXPECT_EQ(parameter_digest(*s.g), g0);
    const auto d1 = parameter_digest(*s.d);
    EXPECT_NE(d1, d0);
    generator_update(s, f.config.train.batch_size, out);
    EXPECT_EQ(parameter_digest(*s.d), d1);
    EXPECT_NE(parameter_digest(*s.g), g0);
}

TEST(TrainStep, ConditionalRunsAndRejectsMissingLabels) {
    Fixture f(3);
    auto s = make_train_state(f.config);
    s.iteration = 8;
    StepOptions forced;
    forced.forced_coin = 0.0;
    const auto r = train_step(s, f.batch(8), f.data.size(), forced);
    EXPECT_TRUE(r.cutmix_applied);
    auto unlabeled = f.batch(9);
    unlabeled.labels.reset();
    EXPECT_THROW(train_step(s, unlabeled, f.data.size()), std::invalid_argument);
}

TEST(TrainStep, NonFiniteLossCarriesDiagnostic) {
    Fixture f;
    auto s = make_train_state(f.config);
    auto b = f.batch(0);
    b.images[0][0][0][0] = std::nan("");
    try {
        train_step(s, b, f.data.size());
        FAIL() << "NaN input accepted";
    } catch (const NonFiniteLossError& e) {
        const auto j = nlohmann::json::parse(e.diagnostic);
        EXPECT_EQ(j.at("iteration").get<int64_t>(), 0);
        EXPECT_EQ(j.at("phase").get<std::string>(), "discriminator");
        EXPECT_TRUE(j.at("tensor_norms").contains("d/enc_head.weight"));
    }
}

TEST(Checkpoint, ByteRoundTrip) {
    Fixture f;
    auto s = make_train_state(f.config);
    run_steps(s, f, 3);
    const auto bytes = serialize_checkpoint(s);
    EXPECT_EQ(bytes.substr(0, 8), "UNGANCKP");
    const auto back = deserialize_checkpoint(bytes);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    EXPECT_EQ(state_digest(back), state_digest(s));
    EXPECT_EQ(back.iteration, 3);
    EXPECT_TRUE(back.rng == s.rng);
    EXPECT_TRUE(back.config == s.config);
}

TEST(Checkpoint, ResumedStateContinuesIdentically) {
    Fixture f;
    auto a = make_train_state(f.config);
    run_steps(a, f, 5);
    auto b = deserialize_checkpoint(serialize_checkpoint(a));
    run_steps(a, f, 5);
    run_steps(b, f, 5);
    EXPECT_EQ(state_digest(a), state_digest(b));
}

TEST(Checkpoint, CorruptInputsAreRejected) {
    Fixture f;
    const auto bytes = serialize_checkpoint(make_train_state(f.config));
    EXPECT_THROW(deserialize_checkpoint("garbage"), CheckpointError);
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), CheckpointError);
    EXPECT_THROW(deserialize_checkpoint(bytes + "x"), CheckpointError);
    auto wrong_version = bytes;
    wrong_version[8] = 9;
    EXPECT_THROW(deserialize_checkpoint(wrong_version), CheckpointError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bad_magic), CheckpointError);
    EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), CheckpointError);
}

TEST(Run, ZeroIterationsWritesInitialCheckpointOnly) {
    Fixture f;
    f.config.train.total_iterations = 0;
    oracle::TempDir dir;
    RunOptions opt;
    opt.out_dir = dir.path();
    opt.evaluate = false;
    const auto r = run(f.config, f.data, opt);
    EXPECT_EQ(r.iterations, 0);
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(dir / "checkpoints")) files.push_back(e.path().filename());
    EXPECT_EQ(files, (std::vector<std::string>{"ckpt_00000000.bin"}));
    EXPECT_EQ(load_checkpoint(r.final_checkpoint).iteration, 0);
}

TEST(Run, ResumeMatchesUninterruptedRun) {
    Fixture f;
    oracle::TempDir dir;
    RunOptions opt;
    opt.evaluate = false;
    opt.write_samples = false;

    opt.out_dir = dir / "full";
    const auto full = run(f.config, f.data, opt);

    auto half = f.config;
    half.train.total_iterations = 5;
    opt.out_dir = dir / "first";
    const auto first = run(half, f.data, opt);
    EXPECT_EQ(first.iterations, 5);

    opt.out_dir = dir / "second";
    opt.resume = first.final_checkpoint;
    const auto second = run(f.config, f.data, opt);
    EXPECT_EQ(second.iterations, 5);

    EXPECT_EQ(state_digest(load_checkpoint(full.final_checkpoint)), state_digest(load_checkpoint(second.final_checkpoint)));
}

TEST(Run, OutputLayoutAndMetrics) {
    Fixture f;
    oracle::TempDir dir;
    RunOptions opt;
    opt.out_dir = dir.path();
    int evals = 0, steps = 0;
    opt.on_eval = [&](const MetricsRecord&) { ++evals; };
    opt.on_step = [&](int64_t, const StepResult&) { ++steps; };
    const auto r = run(f.config, f.data, opt);
    EXPECT_EQ(steps, 10);
    EXPECT_EQ(evals, 3);
    for (const char* p : {"checkpoints/ckpt_00000000.bin", "checkpoints/ckpt_00000005.bin", "checkpoints/ckpt_00000010.bin",
                          "metrics.ndjson", "real_stats.json", "samples/heatmaps_00000010.png"})
        EXPECT_TRUE(std::filesystem::exists(dir / p)) << p;
    const auto m = read_metrics(dir / "metrics.ndjson");
    EXPECT_TRUE(parse_config(m.config_text) == validate(f.config));
    EXPECT_EQ(m.records.size(), 13u);
    const auto ev = m.evaluations();
    ASSERT_EQ(ev.size(), 3u);
    EXPECT_EQ(ev.front().iteration, 0);
    EXPECT_EQ(ev.back().iteration, 10);
    for (const auto& e : ev) EXPECT_TRUE(std::isfinite(*e.fid));
    EXPECT_EQ(r.evaluations.size(), 3u);
}

TEST(Run, NonFiniteLossWritesDiagnosticFile) {
    Fixture f;
    f.data.images.fill_(std::nan(""));
    oracle::TempDir dir;
    RunOptions opt;
    opt.out_dir = dir.path();
    opt.evaluate = false;
    EXPECT_THROW(run(f.config, f.data, opt), NonFiniteLossError);
    const auto j = nlohmann::json::parse(read_file(dir / "diagnostic.json"));
    EXPECT_EQ(j.at("phase").get<std::string>(), "discriminator");
}

TEST(Run, RejectsMismatchedResume) {
    Fixture f;
    oracle::TempDir dir;
    RunOptions opt;
    opt.out_dir = dir / "a";
    opt.evaluate = false;
    auto c = f.config;
    c.train.total_iterations = 0;
    const auto r = run(c, f.data, opt);
    auto wider = f.config;
    wider.model.ch = 8;
    opt.out_dir = dir / "b";
    opt.resume = r.final_checkpoint;
    EXPECT_THROW(run(wider, f.data, opt), ConfigError);
}
