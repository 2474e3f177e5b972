// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_TRAINER_HPP
#define UNETGAN_TRAINER_HPP

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "unetgan/config.hpp"
#include "unetgan/data.hpp"
#include "unetgan/generator.hpp"
#include "unetgan/losses.hpp"
#include "unetgan/metrics.hpp"
#include "unetgan/rng.hpp"
#include "unetgan/unet_discriminator.hpp"

namespace unetgan {

/// Raised when a loss turns NaN/inf. `diagnostic` is a JSON document with
/// the iteration, the offending loss terms and parameter norms.
class NonFiniteLossError : public std::runtime_error {
public:
    NonFiniteLossError(const std::string& what, std::string diagnostic)
        : std::runtime_error(what), diagnostic(std::move(diagnostic)) {}
    std::string diagnostic;
};

struct TrainState {
    Config config;
    Generator g{nullptr};
    UNetDiscriminator d{nullptr};
    Generator ema{nullptr};
    std::unique_ptr<torch::optim::Adam> g_opt;
    std::unique_ptr<torch::optim::Adam> d_opt;
    Rng rng;
    int64_t iteration = 0;
    std::vector<MetricsRecord> metrics_tail;

    /// iteration * batch_size / dataset_size.
    double epoch(int64_t dataset_size) const;
};

/// Fresh state: networks initialized from the config seed, EMA equal to G.
TrainState make_train_state(const Config& config);

struct StepResult {
    DiscriminatorLossBreakdown d;
    GeneratorLossValues g;
    bool cutmix_applied = false;
    double pmix = 0.0;
};

struct StepOptions {
    /// Replaces the p_mix coin draw (the draw is still consumed).
    std::optional<double> forced_coin;
};

/// The discriminator half of a step; fills out.d, out.pmix and
/// out.cutmix_applied. Generator parameters are not modified.
void discriminator_update(TrainState& state, const Batch& real, int64_t dataset_size, const StepOptions& options,
                          StepResult& out);

/// The generator half of a step; fills out.g. Discriminator parameters are
/// not modified.
void generator_update(TrainState& state, int64_t batch_size, StepResult& out);

/// One D update (possibly with a CutMix/consistency term), one G update and
/// one EMA update.
StepResult train_step(TrainState& state, const Batch& real, int64_t dataset_size, const StepOptions& options = {});

/// decay * ema + (1 - decay) * current.
torch::Tensor ema_update(const torch::Tensor& ema, const torch::Tensor& current, double decay);

/// Applies ema_update to every parameter of `ema` in place and copies the
/// buffers (batch-norm statistics, spectral-norm vectors) from `current`.
void ema_update(torch::nn::Module& ema, const torch::nn::Module& current, double decay);

/// Parameters and buffers by qualified name, without copying.
std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& module);

/// Stable content hash of all parameters of a module.
std::string parameter_digest(const torch::nn::Module& module);

/// Hash over every tensor of the state plus iteration and rng.
std::string state_digest(const TrainState& state);

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr uint32_t kCheckpointVersion = 1;

/// Versioned binary archive: magic, version, a JSON header (iteration, rng
/// state, config text, optimizer step counts, metrics tail), then every
/// named tensor sorted by name with dtype, shape and raw bytes.
std::string serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

struct RunOptions {
    std::filesystem::path out_dir;
    std::optional<std::filesystem::path> resume;
    /// Heatmap grids under samples/ at every evaluation.
    bool write_samples = true;
    /// Disables FID/IS evaluation entirely (used by tests).
    bool evaluate = true;
    std::function<void(const MetricsRecord&)> on_eval;
    std::function<void(int64_t, const StepResult&)> on_step;
};

struct RunResult {
    std::filesystem::path final_checkpoint;
    std::vector<MetricsRecord> evaluations;
    int64_t iterations = 0;
};

/// Trains until the iteration counter reaches config.train.total_iterations
/// (absolute, so a resumed run continues to the same target), writing under
/// out_dir:
///   checkpoints/ckpt_<iteration>.bin, metrics.ndjson, samples/.
/// Evaluation (every eval_every and at both ends) uses the EMA generator.
RunResult run(const Config& config, const Dataset& dataset, const RunOptions& options);

/// Reconstructs the dataset a config describes (synthetic or image folder).
Dataset load_dataset(const Config& config);

}  // namespace unetgan

#endif
