// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "unetgan/cutmix.hpp"
#include "unetgan/data.hpp"
#include "unetgan/evaluation.hpp"
#include "unetgan/metrics.hpp"
#include "unetgan/trainer.hpp"
#include "unetgan/visualize.hpp"

namespace fs = std::filesystem;

namespace unetgan::cli {

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void report(std::ostream& err, const std::string& kind, const std::string& message,
            const std::vector<std::string>& details = {}) {
    nlohmann::json j{{"error", kind}, {"message", message}};
    if (!details.empty()) j["details"] = details;
    err << j.dump() << "\n";
}

Config resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
    Config config = load_config(path);
    for (const auto& o : overrides) apply_override(config, o);
    return validate(config);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

RealStatistics real_stats_for(const Config& config, const Dataset& dataset, const FeatureExtractor& extractor,
                              const std::optional<fs::path>& cache, const fs::path& out_dir) {
    RealStatistics stats;
    if (cache && fs::exists(*cache)) {
        stats = load_statistics(*cache, extractor.digest());
    } else {
        const int64_t n = std::min(config.eval.fid_samples, dataset.size());
        stats = {feature_statistics(extractor, tensor_source(dataset.images.slice(0, 0, n)), n, config.eval.batch_size),
                 extractor.digest()};
    }
    save_statistics(stats, out_dir / "real_stats.json");
    return stats;
}

Batch first_batch(const Dataset& dataset, int64_t count) {
    std::vector<int64_t> idx;
    for (int64_t i = 0; i < std::min(count, dataset.size()); ++i) idx.push_back(i);
    return gather(dataset, idx);
}

fs::path write_cutmix_panel(TrainState& state, const Dataset& dataset, int64_t count, uint64_t seed, const fs::path& path) {
    const auto real = first_batch(dataset, count);
    Rng rng(seed);
    const auto latents = real.labels ? sample_latent_with_labels(state.config.model, *real.labels, rng)
                                     : sample_latent(state.config.model, real.images.size(0), rng);
    const auto fake = generate_frozen(*state.ema, latents);
    const auto batch = build_cutmix_batch(real.images, fake, real.labels, real.labels, rng);
    render_cutmix_panel(*state.d, real.images, fake, batch.masks, real.labels, path);
    return path;
}

int cmd_train(const std::string& config_path, const fs::path& out_dir, const std::optional<fs::path>& resume,
              const std::vector<std::string>& overrides, std::ostream& out) {
    const auto config = resolve_config(config_path, overrides);
    fs::create_directories(out_dir);
    const auto dataset = load_dataset(config);
    RunOptions options;
    options.out_dir = out_dir;
    options.resume = resume;
    options.on_eval = [&](const MetricsRecord& r) { out << to_json_line(r) << std::endl; };
    const auto result = run(config, dataset, options);
    nlohmann::json summary{{"checkpoint", result.final_checkpoint.string()}, {"iterations", result.iterations}};
    if (!result.evaluations.empty()) {
        summary["fid"] = *result.evaluations.back().fid;
        summary["is"] = *result.evaluations.back().is;
    }
    out << summary.dump() << "\n";
    return kSuccess;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& out_dir, const std::optional<fs::path>& stats_cache,
             std::optional<int64_t> samples, std::ostream& out) {
    auto state = load_checkpoint(checkpoint);
    const auto& config = state.config;
    fs::create_directories(out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    const auto dataset = load_dataset(config);
    RandomConvExtractor extractor(config.model.channels);
    const auto stats = real_stats_for(config, dataset, extractor, stats_cache, out_dir);
    const auto scores = score_generator(*state.ema, config.model, extractor, stats, samples.value_or(config.eval.fid_samples),
                                        config.eval.batch_size, mix_seed(config.train.seed) ^ 0xe7a1u);
    MetricsRecord record;
    record.iteration = state.iteration;
    if (!state.metrics_tail.empty()) record.losses = state.metrics_tail.back().losses;
    record.fid = scores.fid;
    record.is = scores.is;
    record.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << to_json_line(record) << "\n";
    return kSuccess;
}

int cmd_visualize(const fs::path& checkpoint, const fs::path& out_dir, std::optional<fs::path> metrics_path,
                  int64_t scatter_samples, std::ostream& out, std::ostream& err) {
    auto state = load_checkpoint(checkpoint);
    const auto& config = state.config;
    fs::create_directories(out_dir);
    std::vector<fs::path> written;

    Rng rng(mix_seed(config.train.seed) ^ 0x715u);
    const auto heat = sample_latent(config.model, config.eval.heatmap_samples, rng);
    render_decoder_heatmaps(*state.ema, *state.d, heat, out_dir / "heatmaps.png", 2);
    written.push_back(out_dir / "heatmaps.png");

    const auto latents = sample_latent(config.model, scatter_samples, rng);
    const auto fakes = generate_frozen(*state.ema, latents);
    render_enc_dec_scatter(*state.d, fakes, latents.y, out_dir / "scatter.png");
    written.push_back(out_dir / "scatter.png");

    const auto dataset = load_dataset(config);
    written.push_back(write_cutmix_panel(state, dataset, 8, mix_seed(config.train.seed) ^ 0xc07u, out_dir / "cutmix_panel.png"));

    if (!metrics_path) {
        const auto guess = checkpoint.parent_path().parent_path() / "metrics.ndjson";
        if (fs::exists(guess)) metrics_path = guess;
    }
    if (metrics_path) {
        const auto metrics = read_metrics(*metrics_path);
        const auto evals = metrics.evaluations();
        render_metric_curve(evals, "fid", out_dir / "fid_curve.png");
        render_metric_curve(evals, "is", out_dir / "is_curve.png");
        render_metric_curve(metrics.records, "d_total", out_dir / "d_loss_curve.png");
        render_metric_curve(metrics.records, "g_total", out_dir / "g_loss_curve.png");
        for (const char* name : {"fid_curve.png", "is_curve.png", "d_loss_curve.png", "g_loss_curve.png"})
            written.push_back(out_dir / name);
    } else {
        report(err, "warning", "no metrics.ndjson found; curves skipped");
    }
    for (const auto& p : written) out << p.string() << "\n";
    return kSuccess;
}

int cmd_visualize_cutmix(const fs::path& checkpoint, const fs::path& out_dir, int64_t count, uint64_t seed,
                         std::ostream& out) {
    auto state = load_checkpoint(checkpoint);
    fs::create_directories(out_dir);
    const auto dataset = load_dataset(state.config);
    out << write_cutmix_panel(state, dataset, count, seed, out_dir / "cutmix_panel.png").string() << "\n";
    return kSuccess;
}

int cmd_ablate(const std::string& config_path, const fs::path& out_dir, std::optional<int64_t> iterations,
               const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err) {
    auto base = resolve_config(config_path, overrides);
    if (iterations) {
        base.train.total_iterations = *iterations;
        base = validate(base);
    }
    fs::create_directories(out_dir);
    const auto dataset = load_dataset(base);

    std::vector<AblationResult> results;
    bool failed = false;
    const auto ladder = ablation_ladder(base);
    for (size_t i = 0; i < ladder.size(); ++i) {
        AblationResult r;
        r.name = ladder[i].name;
        try {
            RunOptions options;
            options.out_dir = out_dir / ("row" + std::to_string(i + 1));
            options.write_samples = false;
            const auto result = run(ladder[i].config, dataset, options);
            r.iterations = ladder[i].config.train.total_iterations;
            if (!result.evaluations.empty()) {
                r.fid = result.evaluations.back().fid;
                r.is = result.evaluations.back().is;
            }
        } catch (const std::exception& e) {
            failed = true;
            r.error = e.what();
            report(err, "runtime", "ablation row '" + r.name + "' failed: " + e.what());
        }
        results.push_back(r);
    }
    const auto table = ablation_table(results);
    std::ofstream(out_dir / "ablation.tsv") << table;
    out << table;
    return failed ? kRuntimeFailure : kSuccess;
}

int cmd_make_synth(const fs::path& out_dir, int64_t n, int64_t size, int64_t classes, uint64_t seed, std::ostream& out) {
    const auto dataset = synth_shapes_dataset(n, size, classes, seed);
    write_image_folder(dataset, out_dir);
    out << nlohmann::json{{"images", dataset.size()}, {"root", out_dir.string()}, {"num_classes", classes}}.dump() << "\n";
    return kSuccess;
}

}  // namespace

std::vector<AblationRow> ablation_ladder(const Config& base) {
    std::vector<AblationRow> rows(3, {"", base});
    rows[0].name = "encoder-only";
    rows[0].config.loss.use_decoder_head = false;
    rows[0].config.loss.use_cutmix = false;
    rows[0].config.loss.use_consistency = false;
    rows[1].name = "+decoder";
    rows[1].config.loss.use_decoder_head = true;
    rows[1].config.loss.use_cutmix = false;
    rows[1].config.loss.use_consistency = false;
    rows[2].name = "+cutmix+consistency";
    rows[2].config.loss.use_decoder_head = true;
    rows[2].config.loss.use_cutmix = true;
    rows[2].config.loss.use_consistency = true;
    return rows;
}

std::string ablation_table(const std::vector<AblationResult>& rows) {
    std::ostringstream t;
    t << "config\tproxy_fid\tis_proxy\titerations\n";
    for (const auto& r : rows) {
        t << r.name << "\t";
        if (!r.error.empty()) {
            t << "FAILED\tFAILED\t" << r.iterations << "\n";
            continue;
        }
        t << (r.fid ? format_double(*r.fid) : "NA") << "\t" << (r.is ? format_double(*r.is) : "NA") << "\t"
          << r.iterations << "\n";
    }
    return t.str();
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"U-Net GAN trainer and evaluation tools", "unetgan"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string resume, checkpoint, stats_cache, metrics_path;
    std::vector<std::string> overrides;
    int64_t samples = 0, iterations = 0, count = 8, scatter_samples = 50;
    int64_t n = 2000, size = 32, classes = 0;
    uint64_t seed = 1234;

    auto* train = app.add_subcommand("train", "Train a model and write checkpoints, metrics and samples");
    train->add_option("--config", config_path, "Config file")->required();
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--resume", resume, "Checkpoint to continue from");
    train->add_option("--set", overrides, "Override, section.key=value (repeatable)");

    auto* eval = app.add_subcommand("eval", "Score a checkpoint's EMA generator; prints one metrics record");
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    eval->add_option("--out", out_dir, "Output directory")->required();
    eval->add_option("--real-stats", stats_cache, "Cached real statistics (JSON) to reuse");
    eval->add_option("--samples", samples, "Number of generated samples (default eval.fid_samples)");

    auto* vis = app.add_subcommand("visualize", "Heatmaps, scatter plot, CutMix panel and metric curves");
    vis->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    vis->add_option("--out", out_dir, "Output directory")->required();
    vis->add_option("--metrics", metrics_path, "metrics.ndjson (default: next to the checkpoints directory)");
    vis->add_option("--scatter-samples", scatter_samples, "Generated samples in the scatter plot")->capture_default_str();

    auto* vis_cm = app.add_subcommand("visualize-cutmix", "CutMix panel: originals, masks, mixes, decoder maps");
    vis_cm->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    vis_cm->add_option("--out", out_dir, "Output directory")->required();
    vis_cm->add_option("--count", count, "Number of columns")->capture_default_str();
    vis_cm->add_option("--seed", seed, "Mask and latent seed")->capture_default_str();

    auto* ablate = app.add_subcommand("ablate", "Cumulative ablation ladder with a proxy-FID table");
    ablate->add_option("--config", config_path, "Base config file")->required();
    ablate->add_option("--out", out_dir, "Output directory")->required();
    ablate->add_option("--iterations", iterations, "Iterations per row (default train.total_iterations)");
    ablate->add_option("--set", overrides, "Override, section.key=value (repeatable)");

    auto* synth = app.add_subcommand("make-synth", "Write a synthetic shapes dataset as an image folder");
    synth->add_option("--out", out_dir, "Output directory")->required();
    synth->add_option("--n", n, "Number of images")->capture_default_str();
    synth->add_option("--size", size, "Image size in pixels")->capture_default_str();
    synth->add_option("--classes", classes, "0 for unconditional, else 2..10")->capture_default_str();
    synth->add_option("--seed", seed, "Generator seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err) == 0 ? kSuccess : kUsageError;
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err) == 0 ? kSuccess : kUsageError;
    } catch (const CLI::ParseError& e) {
        report(err, "usage", e.what());
        return kUsageError;
    }

    const auto opt_path = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };
    try {
        if (*train) return cmd_train(config_path, out_dir, opt_path(resume), overrides, out);
        if (*eval)
            return cmd_eval(checkpoint, out_dir, opt_path(stats_cache),
                            samples > 0 ? std::optional<int64_t>(samples) : std::nullopt, out);
        if (*vis) return cmd_visualize(checkpoint, out_dir, opt_path(metrics_path), scatter_samples, out, err);
        if (*vis_cm) return cmd_visualize_cutmix(checkpoint, out_dir, count, seed, out);
        if (*ablate)
            return cmd_ablate(config_path, out_dir, iterations > 0 ? std::optional<int64_t>(iterations) : std::nullopt,
                              overrides, out, err);
        if (*synth) return cmd_make_synth(out_dir, n, size, classes, seed, out);
    } catch (const ConfigError& e) {
        report(err, "config", e.what(), e.violations());
        return kUsageError;
    } catch (const UsageError& e) {
        report(err, "usage", e.what());
        return kUsageError;
    } catch (const NonFiniteLossError& e) {
        report(err, "non_finite_loss", e.what());
        return kRuntimeFailure;
    } catch (const std::exception& e) {
        report(err, "runtime", e.what());
        return kRuntimeFailure;
    }
    return kUsageError;
}

}  // namespace unetgan::cli
