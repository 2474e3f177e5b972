// SPDX-License-Identifier: Apache-2.0
#include "unetgan/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "unetgan/cutmix.hpp"
#include "unetgan/evaluation.hpp"
#include "unetgan/visualize.hpp"

namespace fs = std::filesystem;

namespace unetgan {

namespace {

constexpr uint64_t kGeneratorInitStream = 1;
constexpr uint64_t kDiscriminatorInitStream = 2;
constexpr uint64_t kTrainingStream = 3;
constexpr uint64_t kEvalStream = 4;
constexpr uint64_t kHeatmapStream = 5;
constexpr uint64_t kRealSubsetStream = 6;

uint64_t derived_seed(uint64_t seed, uint64_t stream) { return mix_seed(mix_seed(seed) ^ mix_seed(stream)); }

std::unique_ptr<torch::optim::Adam> make_adam(const std::vector<torch::Tensor>& params, double lr, const TrainConfig& t) {
    return std::make_unique<torch::optim::Adam>(
        params, torch::optim::AdamOptions(lr).betas({t.adam_beta1, t.adam_beta2}).eps(1e-8));
}

void set_requires_grad(torch::nn::Module& module, bool flag) {
    for (auto& p : module.parameters()) p.set_requires_grad(flag);
}

torch::Tensor concat_labels(const std::optional<torch::Tensor>& y) {
    return y ? torch::cat({*y, *y}) : torch::Tensor();
}

std::optional<torch::Tensor> as_optional(const torch::Tensor& t) {
    return t.defined() ? std::optional<torch::Tensor>(t) : std::nullopt;
}

double scalar(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

std::string diagnostic_json(const TrainState& state, const StepResult& partial, const std::string& phase) {
    nlohmann::json j;
    j["iteration"] = state.iteration;
    j["phase"] = phase;
    j["d"] = {{"enc", partial.d.enc_term},          {"dec", partial.d.dec_term},
              {"cutmix_enc", partial.d.cutmix_enc_term}, {"cutmix_dec", partial.d.cutmix_dec_term},
              {"consistency", partial.d.consistency_term}, {"total", partial.d.total}};
    j["g"] = {{"enc", partial.g.enc_term}, {"dec", partial.g.dec_term}, {"total", partial.g.total}};
    auto norms = nlohmann::json::object();
    for (const auto& [name, t] : named_state(*state.g)) norms["g/" + name] = t.to(torch::kFloat64).norm().item<double>();
    for (const auto& [name, t] : named_state(*state.d)) norms["d/" + name] = t.to(torch::kFloat64).norm().item<double>();
    j["tensor_norms"] = norms;
    return j.dump(2);
}

// ---- checkpoint encoding -------------------------------------------------

constexpr char kMagic[8] = {'U', 'N', 'G', 'A', 'N', 'C', 'K', 'P'};

struct NamedTensor {
    std::string name;
    torch::Tensor tensor;
};

std::vector<std::pair<std::string, torch::Tensor>> optimizer_tensors(const char* prefix, const torch::optim::Adam& opt,
                                                                     const torch::nn::Module& module,
                                                                     std::map<std::string, int64_t>* steps) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& item : module.named_parameters()) {
        const auto it = opt.state().find(item.value().unsafeGetTensorImpl());
        if (it == opt.state().end()) continue;
        const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
        const std::string base = std::string(prefix) + "/" + item.key();
        out.emplace_back(base + "/exp_avg", s.exp_avg());
        out.emplace_back(base + "/exp_avg_sq", s.exp_avg_sq());
        if (steps) (*steps)[base] = s.step();
    }
    return out;
}

std::vector<NamedTensor> all_tensors(const TrainState& state, std::map<std::string, int64_t>* steps) {
    std::vector<NamedTensor> out;
    const auto add = [&](const std::string& prefix, const std::vector<std::pair<std::string, torch::Tensor>>& items) {
        for (const auto& [name, t] : items) out.push_back({prefix + name, t});
    };
    add("g/", named_state(*state.g));
    add("d/", named_state(*state.d));
    add("ema/", named_state(*state.ema));
    add("", optimizer_tensors("g_opt", *state.g_opt, *state.g, steps));
    add("", optimizer_tensors("d_opt", *state.d_opt, *state.d, steps));
    std::sort(out.begin(), out.end(), [](const NamedTensor& a, const NamedTensor& b) { return a.name < b.name; });
    return out;
}

void put_u32(std::string& out, uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

void put_u64(std::string& out, uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

void put_str(std::string& out, const std::string& s) {
    put_u64(out, s.size());
    out += s;
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}
    const char* take(size_t n) {
        if (n > bytes_.size() - pos_) throw CheckpointError("corrupt checkpoint: truncated");
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    uint32_t u32() {
        uint32_t v;
        std::memcpy(&v, take(4), 4);
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        std::memcpy(&v, take(8), 8);
        return v;
    }
    std::string str() {
        const auto n = u64();
        const char* p = take(n);
        return {p, n};
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    size_t pos_ = 0;
};

std::string dtype_name(torch::ScalarType t) { return c10::toString(t); }

torch::ScalarType dtype_from_name(const std::string& name) {
    for (auto t : {torch::kFloat32, torch::kFloat64, torch::kInt64, torch::kInt32, torch::kUInt8, torch::kBool})
        if (name == c10::toString(t)) return t;
    throw CheckpointError("corrupt checkpoint: unknown dtype " + name);
}

std::string encode(const TrainState& state, bool with_metrics) {
    std::map<std::string, int64_t> steps;
    const auto tensors = all_tensors(state, &steps);

    nlohmann::json header;
    header["iteration"] = state.iteration;
    header["rng_state"] = state.rng.state();
    header["config"] = to_ini(state.config);
    header["optimizer_steps"] = steps;
    auto tail = nlohmann::json::array();
    if (with_metrics)
        for (const auto& r : state.metrics_tail) tail.push_back(nlohmann::json::parse(to_json_line(r)));
    header["metrics_tail"] = tail;

    std::string out(kMagic, sizeof(kMagic));
    put_u32(out, kCheckpointVersion);
    put_str(out, header.dump());
    put_u64(out, tensors.size());
    for (const auto& [name, tensor] : tensors) {
        const auto t = tensor.detach().cpu().contiguous();
        put_str(out, name);
        put_str(out, dtype_name(t.scalar_type()));
        put_u32(out, static_cast<uint32_t>(t.dim()));
        for (auto s : t.sizes()) put_u64(out, static_cast<uint64_t>(s));
        const auto nbytes = static_cast<size_t>(t.numel()) * t.element_size();
        put_u64(out, nbytes);
        out.append(static_cast<const char*>(t.data_ptr()), nbytes);
    }
    return out;
}

void restore_module(torch::nn::Module& module, const std::string& prefix, std::map<std::string, torch::Tensor>& tensors) {
    torch::NoGradGuard no_grad;
    for (auto& [name, t] : named_state(module)) {
        const auto it = tensors.find(prefix + name);
        if (it == tensors.end()) throw CheckpointError("checkpoint is missing tensor " + prefix + name);
        if (!it->second.sizes().equals(t.sizes()) || it->second.scalar_type() != t.scalar_type())
            throw CheckpointError("checkpoint tensor " + prefix + name + " has the wrong shape or dtype");
        t.copy_(it->second);
        tensors.erase(it);
    }
}

void restore_optimizer(torch::optim::Adam& opt, torch::nn::Module& module, const std::string& prefix,
                       std::map<std::string, torch::Tensor>& tensors, const nlohmann::json& steps) {
    for (auto& item : module.named_parameters()) {
        const std::string base = prefix + "/" + item.key();
        const auto avg = tensors.find(base + "/exp_avg");
        const auto avg_sq = tensors.find(base + "/exp_avg_sq");
        if (avg == tensors.end() && avg_sq == tensors.end()) continue;
        if (avg == tensors.end() || avg_sq == tensors.end() || !steps.contains(base))
            throw CheckpointError("incomplete optimizer state for " + base);
        auto s = std::make_unique<torch::optim::AdamParamState>();
        s->step(steps.at(base).get<int64_t>());
        s->exp_avg(avg->second.clone());
        s->exp_avg_sq(avg_sq->second.clone());
        opt.state()[item.value().unsafeGetTensorImpl()] = std::move(s);
        tensors.erase(avg);
        tensors.erase(avg_sq);
    }
}

std::string checkpoint_name(int64_t iteration) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_%08lld.bin", static_cast<long long>(iteration));
    return buf;
}

}  // namespace

double TrainState::epoch(int64_t dataset_size) const {
    return static_cast<double>(iteration) * static_cast<double>(config.train.batch_size) / static_cast<double>(dataset_size);
}

TrainState make_train_state(const Config& config) {
    const auto cfg = validate(config);
    TrainState state;
    state.config = cfg;
    state.g = make_generator(cfg.model, derived_seed(cfg.train.seed, kGeneratorInitStream));
    state.d = make_discriminator(cfg.model, derived_seed(cfg.train.seed, kDiscriminatorInitStream));
    state.ema = Generator(cfg.model);
    {
        torch::NoGradGuard no_grad;
        const auto src = named_state(*state.g);
        auto dst = named_state(*state.ema);
        for (size_t i = 0; i < dst.size(); ++i) dst[i].second.copy_(src[i].second);
    }
    set_requires_grad(*state.ema, false);
    state.g_opt = make_adam(state.g->parameters(), cfg.train.lr_g, cfg.train);
    state.d_opt = make_adam(state.d->parameters(), cfg.train.lr_d, cfg.train);
    state.rng = Rng(derived_seed(cfg.train.seed, kTrainingStream));
    return state;
}

void discriminator_update(TrainState& state, const Batch& real, int64_t dataset_size, const StepOptions& options,
                          StepResult& out) {
    const double epoch = state.epoch(dataset_size);
    const auto& cfg = state.config;
    auto& d = *state.d;
    auto& g = *state.g;
    const auto n = real.images.size(0);
    const auto variant = cfg.loss.adversarial_variant;

    set_requires_grad(d, true);
    d.train();
    g.train();

    torch::Tensor fake;
    {
        torch::NoGradGuard no_grad;
        const auto latents = real.labels ? sample_latent_with_labels(cfg.model, *real.labels, state.rng)
                                         : sample_latent(cfg.model, n, state.rng);
        fake = generate(g, latents);
    }

    const auto score = d.forward(torch::cat({real.images, fake}), as_optional(concat_labels(real.labels)));
    const auto real_enc = score.enc_logit.slice(0, 0, n), fake_enc = score.enc_logit.slice(0, n);
    const auto real_dec = score.dec_logits.slice(0, 0, n), fake_dec = score.dec_logits.slice(0, n);

    auto enc = enc_d_loss(real_enc, fake_enc, variant);
    torch::Tensor dec, cm_enc, cm_dec, consistency;
    if (cfg.loss.use_decoder_head) dec = dec_d_loss(real_dec, fake_dec, variant);

    out.pmix = pmix_schedule(epoch, cfg.train.pmix_warmup_epochs, cfg.train.pmix_max);
    double coin = state.rng.uniform();
    if (options.forced_coin) coin = *options.forced_coin;
    if (cfg.loss.use_cutmix && coin < out.pmix) {
        out.cutmix_applied = true;
        const auto batch = build_cutmix_batch(real.images, fake, real.labels, real.labels, state.rng);
        const auto mixed = d.forward(batch.images, real.labels);
        const auto sup = cutmix_supervision_loss(mixed.enc_logit, mixed.dec_logits, batch.masks, variant);
        cm_enc = sup.enc_term;
        cm_dec = sup.dec_term;
        if (cfg.loss.use_consistency) consistency = consistency_loss(mixed.dec_logits, real_dec, fake_dec, batch.masks);
    }

    auto total = enc;
    for (const auto& term : {dec, cm_enc, cm_dec}) if (term.defined()) total = total + term;
    if (consistency.defined()) total = total + cfg.loss.lambda_consistency * consistency;

    out.d.enc_term = scalar(enc);
    out.d.dec_term = scalar(dec);
    out.d.cutmix_enc_term = scalar(cm_enc);
    out.d.cutmix_dec_term = scalar(cm_dec);
    out.d.consistency_term = scalar(consistency);
    out.d.lambda = cfg.loss.lambda_consistency;
    out.d.total = out.d.recomputed_total();
    if (!out.d.finite() || !std::isfinite(total.item<double>()))
        throw NonFiniteLossError("non-finite discriminator loss at iteration " + std::to_string(state.iteration),
                                 diagnostic_json(state, out, "discriminator"));

    state.d_opt->zero_grad();
    total.backward();
    state.d_opt->step();
}

void generator_update(TrainState& state, int64_t n, StepResult& out) {
    const auto& cfg = state.config;
    auto& d = *state.d;
    auto& g = *state.g;
    set_requires_grad(d, false);
    d.train();
    g.train();

    const auto latents = sample_latent(cfg.model, n, state.rng);
    state.g_opt->zero_grad();
    const auto fake = generate(g, latents);
    const auto score = d.forward(fake, latents.y);
    const auto loss = g_loss(score.enc_logit, cfg.loss.use_decoder_head ? score.dec_logits : torch::Tensor(),
                             cfg.loss.adversarial_variant);
    out.g.enc_term = loss.enc_term.item<double>();
    out.g.dec_term = loss.dec_term.item<double>();
    out.g.total = out.g.enc_term + out.g.dec_term;
    if (!out.g.finite())
        throw NonFiniteLossError("non-finite generator loss at iteration " + std::to_string(state.iteration),
                                 diagnostic_json(state, out, "generator"));
    loss.total.backward();
    state.g_opt->step();
    set_requires_grad(d, true);
}

StepResult train_step(TrainState& state, const Batch& real, int64_t dataset_size, const StepOptions& options) {
    if (dataset_size < 1) throw std::invalid_argument("train_step: dataset_size must be positive");
    if (real.images.size(0) < 1) throw std::invalid_argument("train_step: empty batch");
    if (state.config.model.conditional() != real.labels.has_value())
        throw std::invalid_argument("train_step: batch labels do not match the model's conditioning");

    StepResult out;
    for (int64_t k = 0; k < state.config.train.d_steps_per_g; ++k)
        discriminator_update(state, real, dataset_size, options, out);
    generator_update(state, real.images.size(0), out);
    ema_update(*state.ema, *state.g, state.config.train.ema_decay);
    ++state.iteration;
    return out;
}

torch::Tensor ema_update(const torch::Tensor& ema, const torch::Tensor& current, double decay) {
    if (!ema.sizes().equals(current.sizes())) throw std::invalid_argument("ema_update: shape mismatch");
    if (!(decay >= 0.0 && decay < 1.0)) throw std::invalid_argument("ema_update: decay must lie in [0, 1)");
    return ema * decay + current * (1.0 - decay);
}

void ema_update(torch::nn::Module& ema, const torch::nn::Module& current, double decay) {
    torch::NoGradGuard no_grad;
    auto dst = ema.named_parameters();
    const auto src = current.named_parameters();
    if (dst.size() != src.size()) throw std::invalid_argument("ema_update: modules differ");
    for (const auto& item : src) {
        auto* target = dst.find(item.key());
        if (!target) throw std::invalid_argument("ema_update: missing parameter " + item.key());
        target->copy_(ema_update(*target, item.value(), decay));
    }
    auto dst_buffers = ema.named_buffers();
    for (const auto& item : current.named_buffers()) {
        auto* target = dst_buffers.find(item.key());
        if (!target) throw std::invalid_argument("ema_update: missing buffer " + item.key());
        target->copy_(item.value());
    }
}

std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& module) {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& item : module.named_parameters()) out.emplace_back(item.key(), item.value());
    for (const auto& item : module.named_buffers()) out.emplace_back(item.key(), item.value());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

std::string parameter_digest(const torch::nn::Module& module) {
    std::string bytes;
    for (const auto& item : module.named_parameters()) bytes += item.key() + ":" + tensor_digest(item.value()) + ";";
    return sha256_hex(bytes.data(), bytes.size());
}

std::string state_digest(const TrainState& state) {
    const auto bytes = encode(state, false);
    return sha256_hex(bytes.data(), bytes.size());
}

std::string serialize_checkpoint(const TrainState& state) { return encode(state, true); }

TrainState deserialize_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    if (std::memcmp(in.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("not a checkpoint (bad magic)");
    const auto version = in.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(in.str());
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
    }

    std::map<std::string, torch::Tensor> tensors;
    const auto count = in.u64();
    for (uint64_t i = 0; i < count; ++i) {
        const auto name = in.str();
        const auto dtype = dtype_from_name(in.str());
        const auto dims = in.u32();
        std::vector<int64_t> shape(dims);
        for (auto& s : shape) s = static_cast<int64_t>(in.u64());
        const auto nbytes = in.u64();
        auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
        if (nbytes != static_cast<uint64_t>(t.numel()) * t.element_size())
            throw CheckpointError("corrupt checkpoint: size mismatch for " + name);
        std::memcpy(t.data_ptr(), in.take(nbytes), nbytes);
        tensors.emplace(name, t);
    }
    if (!in.done()) throw CheckpointError("corrupt checkpoint: trailing bytes");

    TrainState state = make_train_state(parse_config(header.at("config").get<std::string>()));
    restore_module(*state.g, "g/", tensors);
    restore_module(*state.d, "d/", tensors);
    restore_module(*state.ema, "ema/", tensors);
    const auto& steps = header.at("optimizer_steps");
    restore_optimizer(*state.g_opt, *state.g, "g_opt", tensors, steps);
    restore_optimizer(*state.d_opt, *state.d, "d_opt", tensors, steps);
    if (!tensors.empty()) throw CheckpointError("checkpoint has unexpected tensor " + tensors.begin()->first);

    state.iteration = header.at("iteration").get<int64_t>();
    state.rng = Rng::from_state(header.at("rng_state").get<std::string>());
    for (const auto& r : header.at("metrics_tail")) state.metrics_tail.push_back(parse_metrics_line(r.dump()));
    return state;
}

void save_checkpoint(const TrainState& state, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto bytes = serialize_checkpoint(state);
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CheckpointError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    fs::rename(tmp, path);
}

TrainState load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint not found: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_checkpoint(buf.str());
}

Dataset load_dataset(const Config& config) {
    const auto& m = config.model;
    if (config.data.source == DataSource::Synthetic)
        return synth_shapes_dataset(config.data.synth_size, m.image_size, m.num_classes, config.data.synth_seed);
    auto ds = load_image_folder(config.data.root, m.image_size, m.conditional(), m.channels);
    if (m.conditional() && ds.num_classes != m.num_classes)
        throw DataError("dataset has " + std::to_string(ds.num_classes) + " classes but model.num_classes is " +
                        std::to_string(m.num_classes));
    return ds;
}

namespace {

bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
    return a.image_size == b.image_size && a.channels == b.channels && a.ch == b.ch && a.latent_dim == b.latent_dim &&
           a.num_classes == b.num_classes && a.use_spectral_norm == b.use_spectral_norm &&
           a.latent_distribution == b.latent_distribution;
}

std::map<std::string, double> loss_map(const StepResult& r) {
    return {{"d_enc", r.d.enc_term},
            {"d_dec", r.d.dec_term},
            {"d_cutmix_enc", r.d.cutmix_enc_term},
            {"d_cutmix_dec", r.d.cutmix_dec_term},
            {"d_consistency", r.d.consistency_term},
            {"d_total", r.d.total},
            {"g_enc", r.g.enc_term},
            {"g_dec", r.g.dec_term},
            {"g_total", r.g.total},
            {"cutmix_applied", r.cutmix_applied ? 1.0 : 0.0},
            {"pmix", r.pmix}};
}

RealStatistics real_statistics(const Dataset& dataset, const FeatureExtractor& extractor, const Config& cfg) {
    const int64_t n = std::min(cfg.eval.fid_samples, dataset.size());
    std::vector<int64_t> order(static_cast<size_t>(dataset.size()));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derived_seed(cfg.train.seed, kRealSubsetStream));
    std::shuffle(order.begin(), order.end(), rng.engine());
    order.resize(static_cast<size_t>(n));
    const auto images = dataset.images.index_select(0, torch::tensor(order, torch::kInt64));
    return {feature_statistics(extractor, tensor_source(images), n, cfg.eval.batch_size), extractor.digest()};
}

}  // namespace

RunResult run(const Config& config, const Dataset& dataset, const RunOptions& options) {
    const auto cfg = validate(config);
    if (dataset.size() < cfg.train.batch_size)
        throw DataError("dataset of " + std::to_string(dataset.size()) + " samples is smaller than one batch");
    if (dataset.conditional() != cfg.model.conditional())
        throw DataError("dataset conditioning does not match model.num_classes");

    const auto ckpt_dir = options.out_dir / "checkpoints";
    const auto samples_dir = options.out_dir / "samples";
    fs::create_directories(ckpt_dir);
    if (options.write_samples) fs::create_directories(samples_dir);

    TrainState state;
    if (options.resume) {
        state = load_checkpoint(*options.resume);
        if (!same_architecture(state.config.model, cfg.model))
            throw ConfigError({"resume checkpoint has a different model architecture"});
        state.config = cfg;
    } else {
        state = make_train_state(cfg);
    }
    const int64_t start = state.iteration;

    MetricsWriter metrics(options.out_dir / "metrics.ndjson", to_ini(cfg));
    RunResult result;
    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    std::unique_ptr<RandomConvExtractor> extractor;
    RealStatistics real_stats;
    if (options.evaluate) {
        extractor = std::make_unique<RandomConvExtractor>(cfg.model.channels);
        real_stats = real_statistics(dataset, *extractor, cfg);
        save_statistics(real_stats, options.out_dir / "real_stats.json");
    }
    Rng heat_rng(derived_seed(cfg.train.seed, kHeatmapStream));
    const auto heat_latents = sample_latent(cfg.model, cfg.eval.heatmap_samples, heat_rng);

    std::map<std::string, double> last_losses;
    const auto evaluate = [&] {
        if (!options.evaluate) return;
        const auto scores = score_generator(*state.ema, cfg.model, *extractor, real_stats, cfg.eval.fid_samples,
                                            cfg.eval.batch_size, derived_seed(cfg.train.seed, kEvalStream));
        MetricsRecord rec;
        rec.iteration = state.iteration;
        rec.losses = last_losses;
        rec.fid = scores.fid;
        rec.is = scores.is;
        rec.wall_time = elapsed();
        metrics.append(rec);
        state.metrics_tail.push_back(rec);
        if (state.metrics_tail.size() > 16) state.metrics_tail.erase(state.metrics_tail.begin());
        result.evaluations.push_back(rec);
        if (options.write_samples) {
            char name[40];
            std::snprintf(name, sizeof(name), "heatmaps_%08lld.png", static_cast<long long>(state.iteration));
            render_decoder_heatmaps(*state.ema, *state.d, heat_latents, samples_dir / name, 2);
        }
        if (options.on_eval) options.on_eval(rec);
    };
    const auto checkpoint = [&] {
        result.final_checkpoint = ckpt_dir / checkpoint_name(state.iteration);
        save_checkpoint(state, result.final_checkpoint);
    };

    if (start == 0) {
        evaluate();
        checkpoint();
    }

    const int64_t total = cfg.train.total_iterations;
    while (state.iteration < total) {
        const auto batch = batch_at(dataset, cfg.train.batch_size, cfg.train.seed, state.iteration);
        StepResult step;
        try {
            step = train_step(state, batch, dataset.size());
        } catch (const NonFiniteLossError& e) {
            std::ofstream(options.out_dir / "diagnostic.json") << e.diagnostic << "\n";
            throw;
        }
        last_losses = loss_map(step);
        MetricsRecord rec;
        rec.iteration = state.iteration;
        rec.losses = last_losses;
        rec.wall_time = elapsed();
        metrics.append(rec);
        if (options.on_step) options.on_step(state.iteration, step);

        const bool last = state.iteration == total;
        if ((cfg.train.eval_every > 0 && state.iteration % cfg.train.eval_every == 0) || last) evaluate();
        if ((cfg.train.checkpoint_every > 0 && state.iteration % cfg.train.checkpoint_every == 0) || last) checkpoint();
    }
    if (result.final_checkpoint.empty()) checkpoint();
    result.iterations = state.iteration - start;
    return result;
}

}  // namespace unetgan
