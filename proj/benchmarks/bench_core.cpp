#include <benchmark/benchmark.h>

#include "climdiff/baselines.hpp"
#include "climdiff/datagen.hpp"
#include "climdiff/diffusion.hpp"
#include "climdiff/nn/ops.hpp"
#include "climdiff/resample.hpp"
#include "climdiff/unet.hpp"

namespace {

using namespace climdiff;
using nn::Tensor;
using nn::Var;

Var<float> randn(nn::Shape shape, Rng& rng, bool grad = false) {
  Tensor<float> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return Var<float>(std::move(t), grad);
}

Field randf(std::vector<std::string> ch, std::size_t h, std::size_t w, Rng& rng) {
  Field f(std::move(ch), h, w);
  for (auto& v : f.data()) v = static_cast<float>(rng.normal());
  return f;
}

// args: channels, spatial size
void BM_Conv3x3Forward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), s = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const auto x = randn({2, c, s, s}, rng), w = randn({c, c, 3, 3}, rng), b = randn({c}, rng);
  nn::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, w, b, 1, 1));
  state.SetItemsProcessed(state.iterations() * 2 * static_cast<std::int64_t>(9 * c * c * s * s));
}
BENCHMARK(BM_Conv3x3Forward)->Args({16, 48})->Args({32, 48})->Args({64, 24})->Unit(benchmark::kMicrosecond);

void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0)), s = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  const auto x = randn({2, c, s, s}, rng, true), w = randn({c, c, 3, 3}, rng, true), b = randn({c}, rng, true);
  for (auto _ : state) nn::backward(nn::sum(nn::conv2d(x, w, b, 1, 1)));
}
BENCHMARK(BM_Conv3x3ForwardBackward)->Args({16, 48})->Args({32, 48})->Unit(benchmark::kMicrosecond);

// args: base width, batch size
void BM_DiffusionTrainStep(benchmark::State& state) {
  DenoiserConfig dc;
  dc.base_width = static_cast<std::size_t>(state.range(0));
  dc.level_multipliers = {1, 2, 2};
  dc.blocks_per_level = 1;
  auto net = build_denoiser<float>(dc, 0);
  DiffusionTrainer trainer(net, linear_schedule(100), nn::CosineLr{1e-3, 1000000});
  Rng rng(3);
  TrainBatch b;
  for (std::int64_t i = 0; i < state.range(1); ++i) {
    b.lr_cond.push_back(randf({"TS", "PRECT", "dPHIS"}, 48, 48, rng));
    b.hr_target.push_back(randf({"PRECT"}, 48, 48, rng));
    b.eps.push_back(randf({"PRECT"}, 48, 48, rng));
    b.t.push_back(static_cast<int>(rng.uniform_int(100)));
  }
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(b));
}
BENCHMARK(BM_DiffusionTrainStep)->Args({16, 2})->Args({16, 4})->Args({32, 4})->Unit(benchmark::kMillisecond);

void BM_DenoiserForward(benchmark::State& state) {
  DenoiserConfig dc;
  dc.base_width = 16;
  dc.level_multipliers = {1, 2, 2};
  dc.blocks_per_level = 1;
  auto net = build_denoiser<float>(dc, 0);
  Rng rng(4);
  const auto x = randn({2, 4, 48, 48}, rng);
  const std::vector<int> t{10, 90};
  nn::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, t));
}
BENCHMARK(BM_DenoiserForward)->Unit(benchmark::kMillisecond);

void BM_BicubicUpscale(benchmark::State& state) {
  const auto scale = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  const Field lr = randf({"TS", "PRECT", "dPHIS"}, 48 / scale, 48 / scale, rng);
  for (auto _ : state) benchmark::DoNotOptimize(bicubic_upscale(lr, scale));
}
BENCHMARK(BM_BicubicUpscale)->Arg(4)->Arg(8)->Unit(benchmark::kMicrosecond);

void BM_Degrade(benchmark::State& state) {
  Rng rng(6);
  const Field hr = randf({"TS", "PRECT", "dPHIS"}, 48, 48, rng);
  for (auto _ : state) benchmark::DoNotOptimize(degrade(hr, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_Degrade)->Arg(4)->Arg(8)->Unit(benchmark::kMicrosecond);

void BM_GenerateSample(benchmark::State& state) {
  SyntheticSpec spec;
  spec.n_samples = 1;
  for (auto _ : state) benchmark::DoNotOptimize(generate_fields(spec));
}
BENCHMARK(BM_GenerateSample)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
