// SPDX-License-Identifier: Apache-2.0
#include "unetgan/config.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace unetgan {

namespace {

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& item : items) {
        if (!out.empty()) out += "; ";
        out += item;
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

int64_t parse_int(const std::string& key, const std::string& value) {
    int64_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size())
        throw ConfigError({key + ": expected integer, got '" + value + "'"});
    return out;
}

uint64_t parse_uint(const std::string& key, const std::string& value) {
    uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size())
        throw ConfigError({key + ": expected unsigned integer, got '" + value + "'"});
    return out;
}

double parse_real(const std::string& key, const std::string& value) {
    // from_chars for double is not available in libstdc++ 11.
    std::istringstream in(value);
    in.imbue(std::locale::classic());
    double out = 0.0;
    in >> out;
    if (in.fail() || !in.eof())
        throw ConfigError({key + ": expected real number, got '" + value + "'"});
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError({key + ": expected boolean, got '" + value + "'"});
}

// Shortest text that parses back to the same double.
std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

struct Field {
    std::string key;
    std::function<std::string(const Config&)> get;
    std::function<void(Config&, const std::string&)> set;
};

template <typename T>
Field int_field(std::string key, T Config::*section, int64_t T::*member) {
    return {key,
            [=](const Config& c) { return std::to_string(c.*section.*member); },
            [=](Config& c, const std::string& v) { c.*section.*member = parse_int(key, v); }};
}

template <typename T>
Field uint_field(std::string key, T Config::*section, uint64_t T::*member) {
    return {key,
            [=](const Config& c) { return std::to_string(c.*section.*member); },
            [=](Config& c, const std::string& v) { c.*section.*member = parse_uint(key, v); }};
}

template <typename T>
Field real_field(std::string key, T Config::*section, double T::*member) {
    return {key,
            [=](const Config& c) { return format_real(c.*section.*member); },
            [=](Config& c, const std::string& v) { c.*section.*member = parse_real(key, v); }};
}

template <typename T>
Field bool_field(std::string key, T Config::*section, bool T::*member) {
    return {key,
            [=](const Config& c) { return std::string(c.*section.*member ? "true" : "false"); },
            [=](Config& c, const std::string& v) { c.*section.*member = parse_bool(key, v); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(int_field("model.image_size", &Config::model, &ModelConfig::image_size));
        f.push_back(int_field("model.channels", &Config::model, &ModelConfig::channels));
        f.push_back(int_field("model.ch", &Config::model, &ModelConfig::ch));
        f.push_back(int_field("model.latent_dim", &Config::model, &ModelConfig::latent_dim));
        f.push_back(int_field("model.num_classes", &Config::model, &ModelConfig::num_classes));
        f.push_back(bool_field("model.use_spectral_norm", &Config::model, &ModelConfig::use_spectral_norm));
        f.push_back({"model.latent_distribution",
                     [](const Config& c) { return to_string(c.model.latent_distribution); },
                     [](Config& c, const std::string& v) {
                         if (v == "uniform_pm1") c.model.latent_distribution = LatentDistribution::UniformPm1;
                         else if (v == "standard_normal") c.model.latent_distribution = LatentDistribution::StandardNormal;
                         else throw ConfigError({"model.latent_distribution: unknown value '" + v + "'"});
                     }});

        f.push_back({"loss.adversarial_variant",
                     [](const Config& c) { return to_string(c.loss.adversarial_variant); },
                     [](Config& c, const std::string& v) {
                         if (v == "non_saturating") c.loss.adversarial_variant = AdversarialVariant::NonSaturating;
                         else if (v == "hinge") c.loss.adversarial_variant = AdversarialVariant::Hinge;
                         else throw ConfigError({"loss.adversarial_variant: unknown value '" + v + "'"});
                     }});
        f.push_back(real_field("loss.lambda_consistency", &Config::loss, &LossConfig::lambda_consistency));
        f.push_back(bool_field("loss.use_decoder_head", &Config::loss, &LossConfig::use_decoder_head));
        f.push_back(bool_field("loss.use_cutmix", &Config::loss, &LossConfig::use_cutmix));
        f.push_back(bool_field("loss.use_consistency", &Config::loss, &LossConfig::use_consistency));

        f.push_back(int_field("train.batch_size", &Config::train, &TrainConfig::batch_size));
        f.push_back(real_field("train.lr_g", &Config::train, &TrainConfig::lr_g));
        f.push_back(real_field("train.lr_d", &Config::train, &TrainConfig::lr_d));
        f.push_back(real_field("train.adam_beta1", &Config::train, &TrainConfig::adam_beta1));
        f.push_back(real_field("train.adam_beta2", &Config::train, &TrainConfig::adam_beta2));
        f.push_back(int_field("train.total_iterations", &Config::train, &TrainConfig::total_iterations));
        f.push_back(real_field("train.ema_decay", &Config::train, &TrainConfig::ema_decay));
        f.push_back(real_field("train.pmix_max", &Config::train, &TrainConfig::pmix_max));
        f.push_back(int_field("train.pmix_warmup_epochs", &Config::train, &TrainConfig::pmix_warmup_epochs));
        f.push_back(uint_field("train.seed", &Config::train, &TrainConfig::seed));
        f.push_back(int_field("train.eval_every", &Config::train, &TrainConfig::eval_every));
        f.push_back(int_field("train.checkpoint_every", &Config::train, &TrainConfig::checkpoint_every));
        f.push_back(int_field("train.d_steps_per_g", &Config::train, &TrainConfig::d_steps_per_g));

        f.push_back({"data.source",
                     [](const Config& c) { return to_string(c.data.source); },
                     [](Config& c, const std::string& v) {
                         if (v == "synthetic") c.data.source = DataSource::Synthetic;
                         else if (v == "image_folder") c.data.source = DataSource::ImageFolder;
                         else throw ConfigError({"data.source: unknown value '" + v + "'"});
                     }});
        f.push_back({"data.root",
                     [](const Config& c) { return c.data.root; },
                     [](Config& c, const std::string& v) { c.data.root = v; }});
        f.push_back(int_field("data.synth_size", &Config::data, &DataConfig::synth_size));
        f.push_back(uint_field("data.synth_seed", &Config::data, &DataConfig::synth_seed));

        f.push_back(int_field("eval.fid_samples", &Config::eval, &EvalConfig::fid_samples));
        f.push_back(int_field("eval.batch_size", &Config::eval, &EvalConfig::batch_size));
        f.push_back(int_field("eval.heatmap_samples", &Config::eval, &EvalConfig::heatmap_samples));
        return f;
    }();
    return table;
}

const Field* find_field(std::string_view key) {
    for (const auto& f : fields())
        if (f.key == key) return &f;
    return nullptr;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error("invalid configuration: " + join(violations)), violations_(std::move(violations)) {}

std::string to_string(LatentDistribution d) {
    return d == LatentDistribution::UniformPm1 ? "uniform_pm1" : "standard_normal";
}

std::string to_string(AdversarialVariant v) {
    return v == AdversarialVariant::NonSaturating ? "non_saturating" : "hinge";
}

std::string to_string(DataSource s) {
    return s == DataSource::Synthetic ? "synthetic" : "image_folder";
}

std::vector<std::string> violations(const ModelConfig& m) {
    std::vector<std::string> out;
    const bool pow2 = m.image_size > 0 && std::has_single_bit(static_cast<uint64_t>(m.image_size));
    if (!pow2) out.emplace_back("image_size not power of two");
    else if (m.image_size < 16) out.emplace_back("image_size below 16");
    if (m.channels < 1) out.emplace_back("channels must be >= 1");
    if (m.ch < 1) out.emplace_back("ch must be >= 1");
    if (m.latent_dim < 1) out.emplace_back("latent_dim must be >= 1");
    if (m.num_classes < 0) out.emplace_back("num_classes must be >= 0");
    return out;
}

std::vector<std::string> violations(const Config& c) {
    std::vector<std::string> out = violations(c.model);
    const auto& m = c.model;

    const auto& l = c.loss;
    if (!(l.lambda_consistency >= 0.0)) out.emplace_back("lambda_consistency must be nonnegative");
    if (l.use_consistency && !l.use_cutmix) out.emplace_back("consistency requires cutmix");
    if (l.use_consistency && !l.use_decoder_head) out.emplace_back("consistency requires decoder head");
    if (l.use_cutmix && !l.use_decoder_head) out.emplace_back("cutmix requires decoder head");

    const auto& t = c.train;
    if (t.batch_size < 1) out.emplace_back("batch_size must be >= 1");
    if (!(t.lr_g > 0.0)) out.emplace_back("lr_g must be > 0");
    if (!(t.lr_d > 0.0)) out.emplace_back("lr_d must be > 0");
    if (!(t.adam_beta1 >= 0.0 && t.adam_beta1 < 1.0)) out.emplace_back("adam_beta1 must be in [0,1)");
    if (!(t.adam_beta2 >= 0.0 && t.adam_beta2 < 1.0)) out.emplace_back("adam_beta2 must be in [0,1)");
    if (t.total_iterations < 0) out.emplace_back("total_iterations must be >= 0");
    if (!(t.ema_decay >= 0.0 && t.ema_decay < 1.0)) out.emplace_back("ema_decay must be in [0,1)");
    if (!(t.pmix_max >= 0.0 && t.pmix_max <= 1.0)) out.emplace_back("pmix_max must be in [0,1]");
    if (t.pmix_warmup_epochs < 1) out.emplace_back("pmix_warmup_epochs must be >= 1");
    if (t.eval_every < 0) out.emplace_back("eval_every must be >= 0");
    if (t.checkpoint_every < 0) out.emplace_back("checkpoint_every must be >= 0");
    if (t.d_steps_per_g < 1) out.emplace_back("d_steps_per_g must be >= 1");

    const auto& d = c.data;
    if (d.source == DataSource::ImageFolder && d.root.empty()) out.emplace_back("image_folder source requires data.root");
    if (d.source == DataSource::Synthetic) {
        if (d.synth_size < 1) out.emplace_back("synth_size must be >= 1");
        if (m.num_classes == 1 || m.num_classes > 10) out.emplace_back("synthetic data supports num_classes in {0, 2..10}");
    }

    const auto& e = c.eval;
    if (e.fid_samples < 2) out.emplace_back("fid_samples must be >= 2");
    if (e.batch_size < 1) out.emplace_back("eval batch_size must be >= 1");
    if (e.heatmap_samples < 1) out.emplace_back("heatmap_samples must be >= 1");
    return out;
}

ModelConfig validate(const ModelConfig& config) {
    auto found = violations(config);
    if (!found.empty()) throw ConfigError(std::move(found));
    return config;
}

Config validate(const Config& config) {
    auto found = violations(config);
    if (!found.empty()) throw ConfigError(std::move(found));
    return config;
}

int64_t num_resolution_stages(int64_t image_size) {
    if (image_size < 16 || !std::has_single_bit(static_cast<uint64_t>(image_size)))
        throw ConfigError({"image_size not a power of two >= 16: " + std::to_string(image_size)});
    return std::bit_width(static_cast<uint64_t>(image_size)) - 1 - 2;
}

std::vector<int64_t> channel_multipliers(int64_t image_size) {
    const int64_t stages = num_resolution_stages(image_size);
    // Level multipliers of the 128px network; 256px inserts an extra 8.
    std::vector<int64_t> full = stages >= 6 ? std::vector<int64_t>{16, 16, 8, 8, 4, 2, 1}
                                            : std::vector<int64_t>{16, 16, 8, 4, 2, 1};
    while (static_cast<int64_t>(full.size()) < stages + 1) full.insert(full.begin(), 16);
    return {full.end() - (stages + 1), full.end()};
}

Config parse_config(std::string_view text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError({std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")"});
    }

    Config config;
    std::vector<std::string> errors;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            errors.push_back("key outside of a section: " + section);
            continue;
        }
        for (const auto& [name, node] : body) {
            const std::string key = section + "." + name;
            const Field* field = find_field(key);
            if (field == nullptr) {
                errors.push_back("unknown key " + key);
                continue;
            }
            try {
                field->set(config, trim(node.data()));
            } catch (const ConfigError& e) {
                errors.insert(errors.end(), e.violations().begin(), e.violations().end());
            }
        }
    }
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return config;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"config not found: " + path.string()});
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string to_ini(const Config& config) {
    std::string out;
    std::string current;
    for (const auto& f : fields()) {
        const auto dot = f.key.find('.');
        const auto section = f.key.substr(0, dot);
        if (section != current) {
            if (!current.empty()) out += "\n";
            out += "[" + section + "]\n";
            current = section;
        }
        out += f.key.substr(dot + 1) + " = " + f.get(config) + "\n";
    }
    return out;
}

void apply_override(Config& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError({"override must be section.key=value: " + std::string(assignment)});
    const auto key = trim(assignment.substr(0, eq));
    const Field* field = find_field(key);
    if (field == nullptr) throw ConfigError({"unknown key " + key});
    field->set(config, trim(assignment.substr(eq + 1)));
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.key);
    return keys;
}

bool operator==(const Config& a, const Config& b) { return to_ini(a) == to_ini(b); }

}  // namespace unetgan
