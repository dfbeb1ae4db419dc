// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/kernels.hpp"
#include "derain/log.hpp"
#include "derain/metrics.hpp"
#include "derain/netgraph.hpp"
#include "derain/rng.hpp"
#include "derain/trainpipe.hpp"

#include <benchmark/benchmark.h>

#include <filesystem>

using namespace derain;

namespace {

Image random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Image img(h, w);
    for (float& v : img.data()) v = static_cast<float>(rng.uniform());
    return img;
}

std::vector<float> random_vector(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.normal());
    return v;
}

// Args: channels in/out, spatial size.
void BM_Conv2dForward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0)), size = static_cast<int>(state.range(1));
    const nn::kernels::ConvGeometry g{c, size, size, 3, 1, 1};
    const auto x = random_vector(std::size_t(c) * size * size, 1);
    const auto w = random_vector(std::size_t(c) * c * 9, 2);
    const auto b = random_vector(c, 3);
    std::vector<float> out(std::size_t(c) * g.col_cols());
    for (auto _ : state) {
        nn::kernels::conv2d_forward(x.data(), 1, g, w.data(), b.data(), c, out.data());
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * std::int64_t(c) * c * 9 * size * size);
}
BENCHMARK(BM_Conv2dForward)->Args({16, 64})->Args({64, 32})->Args({128, 16});

void BM_Conv2dBackward(benchmark::State& state) {
    const int c = static_cast<int>(state.range(0)), size = static_cast<int>(state.range(1));
    const nn::kernels::ConvGeometry g{c, size, size, 3, 1, 1};
    const auto x = random_vector(std::size_t(c) * size * size, 1);
    const auto w = random_vector(std::size_t(c) * c * 9, 2);
    const auto dout = random_vector(std::size_t(c) * g.col_cols(), 3);
    std::vector<float> dx(x.size()), dw(w.size()), db(c);
    for (auto _ : state) {
        nn::kernels::conv2d_backward(x.data(), 1, g, w.data(), c, dout.data(), dx.data(), dw.data(), db.data());
        benchmark::DoNotOptimize(dw.data());
    }
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 64})->Args({64, 32});

void BM_Ssim(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const Image a = random_image(size, size, 1), b = random_image(size, size, 2);
    for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
    state.SetItemsProcessed(state.iterations() * std::int64_t(size) * size);
}
BENCHMARK(BM_Ssim)->Arg(64)->Arg(256);

void BM_Infer(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    nn::ModelConfig c;
    c.derain.height = size;
    c.derain.width = size;
    const nn::ModelBundle bundle = nn::build_models(c, 1);
    const Image x = random_image(size, size, 3);
    for (auto _ : state) benchmark::DoNotOptimize(nn::infer(x, bundle));
}
BENCHMARK(BM_Infer)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

/// One optimizer step of the default model on a batch of four 64x64 samples.
void BM_TrainStep(benchmark::State& state) {
    set_log_level(LogLevel::warning);
    std::vector<Sample> samples;
    for (int i = 0; i < 4; ++i) {
        Sample s;
        s.id = format_sample_id(i);
        s.rainy = random_image(64, 64, 10 + i);
        s.clear = random_image(64, 64, 20 + i);
        s.depth = DepthMap(64, 64, 0.5f);
        samples.push_back(std::move(s));
    }
    RunConfig config;
    config.train.vae_pretrain_steps = 0;
    Trainer trainer(config, samples);
    const std::vector<std::size_t> idx{0, 1, 2, 3};
    const Batch batch = make_batch(samples, idx);
    for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(batch, 1e-4));
    set_log_level(LogLevel::info);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
