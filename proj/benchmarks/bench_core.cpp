// Copyright 2026 The rstca Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <random>

#include "rstca/data.hpp"
#include "rstca/evaluation.hpp"
#include "rstca/model.hpp"
#include "rstca/ops.hpp"
#include "rstca/swin.hpp"
#include "rstca/training.hpp"

using namespace rstca;

namespace {

Tensor uniform(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = u(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0);
  Tensor a = uniform({n, n}, 1), b = uniform({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Conv3x3(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  Tensor x = uniform({1, c, hw, hw}, 3), w = uniform({c, c, 3, 3}, 4), b = uniform({c}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, &b));
}
BENCHMARK(BM_Conv3x3)->Args({16, 32})->Args({72, 32});

void BM_WindowAttention(benchmark::State& state) {
  const auto c = state.range(0);
  std::mt19937_64 rng(6);
  StlParams p = StlParams::create(c, 6, 8, 4, rng);
  Tensor windows = uniform({16, 64, c}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(window_msa(windows, p, Tensor()));
}
BENCHMARK(BM_WindowAttention)->Arg(72);

void BM_SwinLayer(benchmark::State& state) {
  std::mt19937_64 rng(8);
  StlParams p = StlParams::create(72, 6, 8, 4, rng);
  Tensor x = uniform({1, 32 * 32, 72}, 9);
  const WindowSpec spec = WindowSpec::with_window(8);
  for (auto _ : state) benchmark::DoNotOptimize(stl_forward(x, p, spec, state.range(0), 32, 32));
}
BENCHMARK(BM_SwinLayer)->Arg(0)->Arg(1);

void BM_TinyForward(benchmark::State& state) {
  const RstcaNet net = RstcaNet::build(ModelConfig::tiny(), 10);
  Tensor mosaic = uniform({1, 1, 64, 64}, 11, 0.0f, 1.0f);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(mosaic));
}
BENCHMARK(BM_TinyForward)->Unit(benchmark::kMillisecond);

void BM_TinyTrainStep(benchmark::State& state) {
  TrainState ts = TrainState::init(ModelConfig::tiny(), 12);
  PatchBatch batch;
  batch.targets = uniform({state.range(0), 3, 64, 64}, 13, 0.0f, 1.0f);
  batch.mosaics = mosaic_rggb(batch.targets);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(ts, batch, 1e-4));
}
BENCHMARK(BM_TinyTrainStep)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_VariantBForward(benchmark::State& state) {
  const RstcaNet net = RstcaNet::build(ModelConfig::variant_b(), 14);
  Tensor mosaic = uniform({1, 1, 64, 64}, 15, 0.0f, 1.0f);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(mosaic));
}
BENCHMARK(BM_VariantBForward)->Unit(benchmark::kMillisecond);

void BM_Bilinear(benchmark::State& state) {
  Tensor mosaic = uniform({1, 256, 256}, 16, 0.0f, 1.0f);
  for (auto _ : state) benchmark::DoNotOptimize(bilinear_demosaic(mosaic));
}
BENCHMARK(BM_Bilinear)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  Tensor a = uniform({3, 256, 256}, 17, 0.0f, 1.0f), b = uniform({3, 256, 256}, 18, 0.0f, 1.0f);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
