#include <benchmark/benchmark.h>

#include <random>

#include "mtdeblur/ops.hpp"

namespace {

mtdeblur::TensorF random_tensor(mtdeblur::Shape shape, unsigned seed) {
  mtdeblur::TensorF t(std::move(shape));
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(-1.f, 1.f);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// args: channels, spatial extent
void BM_Conv2d3x3(benchmark::State& state) {
  const auto c = state.range(0);
  const auto hw = state.range(1);
  auto x = random_tensor({4, c, hw, hw}, 1);
  auto w = random_tensor({c, c, 3, 3}, 2);
  auto b = random_tensor({c}, 3);
  for (auto _ : state) {
    auto y = mtdeblur::conv2d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.counters["MAC/s"] = benchmark::Counter(
      static_cast<double>(4 * c * c * 9 * hw * hw), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv2d3x3)->Args({16, 64})->Args({32, 32})->Args({64, 16})->Args({32, 64});

void BM_Conv2d3x3Backward(benchmark::State& state) {
  const auto c = state.range(0);
  const auto hw = state.range(1);
  auto x = random_tensor({4, c, hw, hw}, 1);
  auto w = random_tensor({c, c, 3, 3}, 2);
  auto g = random_tensor({4, c, hw, hw}, 3);
  for (auto _ : state) {
    mtdeblur::TensorF gx(x.shape()), gw(w.shape()), gb(mtdeblur::Shape{c});
    mtdeblur::conv2d_backward(x, w, g, 1, 1, &gx, &gw, &gb);
    benchmark::DoNotOptimize(gx.data().data());
  }
  state.counters["MAC/s"] = benchmark::Counter(
      static_cast<double>(2 * 4 * c * c * 9 * hw * hw), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv2d3x3Backward)->Args({16, 64})->Args({64, 16});

}  // namespace
