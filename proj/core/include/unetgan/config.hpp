// SPDX-License-Identifier: Apache-2.0
#ifndef UNETGAN_CONFIG_HPP
#define UNETGAN_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace unetgan {

enum class LatentDistribution { UniformPm1, StandardNormal };
enum class AdversarialVariant { NonSaturating, Hinge };
enum class DataSource { Synthetic, ImageFolder };

std::string to_string(LatentDistribution d);
std::string to_string(AdversarialVariant v);
std::string to_string(DataSource s);

struct ModelConfig {
    int64_t image_size = 32;
    int64_t channels = 3;
    int64_t ch = 16;
    int64_t latent_dim = 64;
    int64_t num_classes = 0;
    bool use_spectral_norm = true;
    LatentDistribution latent_distribution = LatentDistribution::UniformPm1;

    bool conditional() const { return num_classes > 0; }
};

struct LossConfig {
    AdversarialVariant adversarial_variant = AdversarialVariant::NonSaturating;
    double lambda_consistency = 1.0;
    bool use_decoder_head = true;
    bool use_cutmix = true;
    bool use_consistency = true;
};

struct TrainConfig {
    int64_t batch_size = 16;
    double lr_g = 1e-4;
    double lr_d = 5e-4;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.999;
    int64_t total_iterations = 2000;
    double ema_decay = 0.999;
    double pmix_max = 0.5;
    int64_t pmix_warmup_epochs = 4;
    uint64_t seed = 0;
    int64_t eval_every = 500;
    int64_t checkpoint_every = 1000;
    int64_t d_steps_per_g = 1;
};

struct DataConfig {
    DataSource source = DataSource::Synthetic;
    std::string root;
    int64_t synth_size = 2000;
    uint64_t synth_seed = 1234;
};

struct EvalConfig {
    int64_t fid_samples = 500;
    int64_t batch_size = 50;
    int64_t heatmap_samples = 8;
};

struct Config {
    ModelConfig model;
    LossConfig loss;
    TrainConfig train;
    DataConfig data;
    EvalConfig eval;
};

/// Thrown by validate() and the parsers; carries every violation found, not
/// only the first one.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    std::vector<std::string> violations_;
};

/// All invariant violations of `config`; empty when the config is valid.
std::vector<std::string> violations(const Config& config);
std::vector<std::string> violations(const ModelConfig& config);

/// Returns `config` unchanged when valid, otherwise throws ConfigError with
/// the complete violation list.
Config validate(const Config& config);
ModelConfig validate(const ModelConfig& config);

/// log2(image_size) - 2: number of 2x stages between image_size and 4x4.
int64_t num_resolution_stages(int64_t image_size);

/// Channel multipliers (of `ch`) per resolution level, index 0 being the 4x4
/// bottleneck and the last entry (always 1) the full image resolution.
/// Follows the 16,16,8,4,2,1 pattern of the 128px network, truncated from
/// the bottleneck side for smaller images and padded with 16 for larger.
std::vector<int64_t> channel_multipliers(int64_t image_size);

// INI-style text: one [section] per module, `key = value` lines.
Config parse_config(std::string_view text);
Config load_config(const std::filesystem::path& path);
/// Canonical text of a config: every key, fixed order. parse(to_ini(c)) == c.
std::string to_ini(const Config& config);
/// Applies one `section.key=value` override.
void apply_override(Config& config, std::string_view assignment);
std::vector<std::string> config_keys();

bool operator==(const Config& a, const Config& b);

}  // namespace unetgan

#endif
