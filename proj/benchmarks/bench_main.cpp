#include <benchmark/benchmark.h>

#include <random>

#include "fancgan/data.hpp"
#include "fancgan/evaluation.hpp"
#include "fancgan/generation.hpp"
#include "fancgan/ops.hpp"
#include "fancgan/training.hpp"

using namespace fancgan;

namespace {

Tensor uniform(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor::uniform(std::move(s), rng, -1.0, 1.0);
}

train::ModelConfig toy_model() {
  train::ModelConfig m;
  m.image_size = {64, 64};
  m.generator = {3, 8, 16, 16, 4, 1e-5, 0.2};
  m.segmenter = {3, 8, 0.2};
  m.discriminator.base_width = 16;
  return m;
}

}  // namespace

static void BM_Conv2dForwardBackward(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  Var x(uniform({2, 16, size, size}, 1), true);
  Var w(uniform({16, 16, 3, 3}, 2), true);
  Var b(uniform({16}, 3), true);
  for (auto _ : state) {
    ops::sum(ops::conv2d(x, w, b, 1, 1)).backward();
    benchmark::DoNotOptimize(w.grad()[0]);
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_GeneratorForward(benchmark::State& state) {
  const auto st = train::init_state(toy_model(), 1);
  const auto mask = gen::synthesize_mask(gen::toy_mask_spec(64, 0), 0).mask;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gen::generate(mask, st.generator, seed++));
}
BENCHMARK(BM_GeneratorForward)->Unit(benchmark::kMillisecond);

static void BM_SegmenterForward(benchmark::State& state) {
  const auto st = train::init_state(toy_model(), 1);
  const auto img = gen::make_toy_dataset(1, 64, 0)[0].image;
  for (auto _ : state) benchmark::DoNotOptimize(gen::segment_probabilities(img, st.segmenter));
}
BENCHMARK(BM_SegmenterForward)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  auto st = train::init_state(toy_model(), 1);
  const auto pairs = gen::make_toy_dataset(2, 64, 0);
  const auto ex = make_fallback_extractor();
  train::TrainingConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(train::train_step(pairs, st, {}, cfg, *ex));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

static void BM_Fid(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  std::mt19937_64 rng(4);
  const auto a = eval::gaussian_stats(Tensor::randn({4 * d, d}, rng));
  const auto b = eval::gaussian_stats(Tensor::randn({4 * d, d}, rng));
  for (auto _ : state) benchmark::DoNotOptimize(eval::fid(a, b));
}
BENCHMARK(BM_Fid)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_Ssim(benchmark::State& state) {
  const auto pairs = gen::make_toy_dataset(2, 256, 0);
  for (auto _ : state) benchmark::DoNotOptimize(eval::ssim(pairs[0].image, pairs[1].image));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMillisecond);

static void BM_Clahe(benchmark::State& state) {
  const auto img = gen::make_toy_dataset(1, 256, 0)[0].image;
  for (auto _ : state) benchmark::DoNotOptimize(data::clahe(img, 2.0, {8, 8}));
}
BENCHMARK(BM_Clahe)->Unit(benchmark::kMillisecond);

static void BM_MaskSynthesis(benchmark::State& state) {
  gen::MaskSynthesisSpec spec;
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gen::synthesize_mask(spec, i++));
}
BENCHMARK(BM_MaskSynthesis)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
