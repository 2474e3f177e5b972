// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "unetgan/data.hpp"
#include "unetgan/trainer.hpp"

using namespace unetgan;

namespace {

ModelConfig model_at(int64_t size) {
    ModelConfig m;
    m.image_size = size;
    return m;
}

void BM_GeneratorForward(benchmark::State& state) {
    const auto m = model_at(state.range(0));
    auto g = make_generator(m, 1);
    g->eval();
    Rng rng(2);
    const auto latent = sample_latent(m, 16, rng);
    torch::NoGradGuard no_grad;
    for (auto _ : state) benchmark::DoNotOptimize(g->forward(latent.z, latent.y));
    state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_GeneratorForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_DiscriminatorForward(benchmark::State& state) {
    const auto m = model_at(state.range(0));
    auto d = make_discriminator(m, 1);
    d->eval();
    const auto x = torch::rand({16, 3, m.image_size, m.image_size}) * 2 - 1;
    torch::NoGradGuard no_grad;
    for (auto _ : state) benchmark::DoNotOptimize(d->forward(x).dec_logits);
    state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_DiscriminatorForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    Config c;
    c.data.synth_size = 256;
    auto s = make_train_state(c);
    const auto data = synth_shapes_dataset(c.data.synth_size, c.model.image_size, 0, c.data.synth_seed);
    StepOptions options;
    options.forced_coin = state.range(0) ? 0.0 : 1.0;
    // Late enough in training that the CutMix probability is at its maximum.
    s.iteration = c.train.pmix_warmup_epochs * c.data.synth_size / c.train.batch_size;
    for (auto _ : state) {
        const auto batch = batch_at(data, c.train.batch_size, c.train.seed, s.iteration);
        benchmark::DoNotOptimize(train_step(s, batch, data.size(), options).d.total);
    }
    state.SetLabel(state.range(0) ? "cutmix" : "plain");
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
