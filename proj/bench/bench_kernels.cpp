// Serial reference kernels against their OpenMP counterparts, at the layer
// sizes of the default network.

#include <benchmark/benchmark.h>

#include <vector>

#include "drgaze/kernels.hpp"
#include "drgaze/rng.hpp"

using namespace drgaze;
using namespace drgaze::kernels;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

// Widest dense layer of an RDB: f + (l-1)k = 44 channels in, k = 4 out.
ConvGeometry dense_layer(std::size_t batch) {
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = 44;
  g.in_height = 36;
  g.in_width = 60;
  g.out_channels = 4;
  g.kernel_height = g.kernel_width = 3;
  g.padding = 1;
  return g;
}

// Global fusion: (b+1)f = 1056 channels in, 1x1, f = 32 out.
ConvGeometry global_fusion(std::size_t batch) {
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = 1056;
  g.in_height = 36;
  g.in_width = 60;
  g.out_channels = 32;
  return g;
}

void conv_forward(benchmark::State& state, ConvGeometry g, bool parallel_kernels) {
  const auto in = random_values(g.input_size(), 1);
  const auto w = random_values(g.weight_size(), 2);
  const auto b = random_values(g.out_channels, 3);
  std::vector<float> out(g.output_size());
  for (auto _ : state) {
    if (parallel_kernels) parallel::conv2d_forward<float>(g, in, w, b, out);
    else serial::conv2d_forward<float>(g, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["threads"] = parallel_kernels ? max_threads() : 1;
}

void conv_backward(benchmark::State& state, ConvGeometry g, bool parallel_kernels) {
  const auto in = random_values(g.input_size(), 1);
  const auto w = random_values(g.weight_size(), 2);
  const auto gout = random_values(g.output_size(), 3);
  std::vector<float> gin(g.input_size()), gw(g.weight_size()), gb(g.out_channels);
  for (auto _ : state) {
    if (parallel_kernels) {
      parallel::conv2d_backward_input<float>(g, gout, w, gin);
      parallel::conv2d_backward_weight<float>(g, gout, in, gw);
      parallel::conv2d_backward_bias<float>(g, gout, gb);
    } else {
      serial::conv2d_backward_input<float>(g, gout, w, gin);
      serial::conv2d_backward_weight<float>(g, gout, in, gw);
      serial::conv2d_backward_bias<float>(g, gout, gb);
    }
    benchmark::DoNotOptimize(gin.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

// Fusion head first layer: 6496 -> 500 over a batch of 32.
void head_linear(benchmark::State& state, bool parallel_kernels) {
  const LinearGeometry g{32, 6496, 500};
  const auto x = random_values(g.rows * g.in_features, 1);
  const auto w = random_values(g.out_features * g.in_features, 2);
  const auto b = random_values(g.out_features, 3);
  std::vector<float> out(g.rows * g.out_features);
  for (auto _ : state) {
    if (parallel_kernels) parallel::linear_forward<float>(g, x, w, b, out);
    else serial::linear_forward<float>(g, x, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK_CAPTURE(conv_forward, dense_layer_serial, dense_layer(8), false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(conv_forward, dense_layer_parallel, dense_layer(8), true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(conv_forward, global_fusion_serial, global_fusion(2), false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(conv_forward, global_fusion_parallel, global_fusion(2), true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(conv_backward, dense_layer_serial, dense_layer(8), false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(conv_backward, dense_layer_parallel, dense_layer(8), true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(head_linear, serial, false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(head_linear, parallel, true)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
