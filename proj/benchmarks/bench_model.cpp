#include <benchmark/benchmark.h>

#include "mtdeblur/model.hpp"

namespace {

// args: base channels, resblocks per stage, patch extent (batch of 4)
void BM_ForwardBackward(benchmark::State& state) {
  mtdeblur::ModelConfig config;
  config.base_channels = static_cast<int>(state.range(0));
  config.resblocks_per_stage = static_cast<int>(state.range(1));
  const auto hw = state.range(2);
  auto params = mtdeblur::init_model<float>(config, 1);
  mtdeblur::TensorF image({4, 3, hw, hw}, 0.5f);
  auto zero = mtdeblur::init_recurrent_state<float>(config, image.shape());
  for (auto _ : state) {
    mtdeblur::Graph<float> g;
    auto vars = mtdeblur::bind_params(g, params);
    auto b = g.constant(image);
    auto out = mtdeblur::forward_graph(g, config, vars, b, b, g.constant(zero.f1), g.constant(zero.f2));
    auto loss = g.l1_loss(out.output, g.constant(image));
    auto grads = g.backward(loss);
    benchmark::DoNotOptimize(&grads);
  }
}
BENCHMARK(BM_ForwardBackward)
    ->Args({16, 3, 64})
    ->Args({16, 1, 64})
    ->Args({16, 2, 48})
    ->Args({16, 1, 32})
    ->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  mtdeblur::ModelConfig config;
  config.base_channels = static_cast<int>(state.range(0));
  auto params = mtdeblur::init_model<float>(config, 1);
  const auto hw = state.range(1);
  mtdeblur::TensorF image({1, 3, hw, hw}, 0.5f);
  auto zero = mtdeblur::init_recurrent_state<float>(config, image.shape());
  for (auto _ : state) {
    auto r = mtdeblur::forward(params, image, image, zero);
    benchmark::DoNotOptimize(r.output.data().data());
  }
}
BENCHMARK(BM_Forward)->Args({16, 64})->Args({32, 256})->Unit(benchmark::kMillisecond);

}  // namespace
