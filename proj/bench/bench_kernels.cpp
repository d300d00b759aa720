// OpenMP convolution kernels against the serial reference on desk-scale layers.
// Set OMP_NUM_THREADS to compare thread counts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ilioseg/kernels/conv3d.hpp"

namespace k = ilio::kernels;

namespace {

// in_ch, out_ch, x, y, z, kernel, stride
const std::vector<std::array<std::size_t, 7>> kLayers{
    {1, 2, 32, 32, 64, 5, 1},   // I at desk scale
    {4, 8, 16, 16, 32, 5, 1},   // D1
    {8, 8, 8, 8, 16, 5, 1},     // D2
    {2, 4, 32, 32, 64, 2, 2},   // I down-conv
    {16, 16, 4, 4, 8, 5, 1},    // D3 / L
};

struct Buffers {
  k::ConvGeometry g;
  std::vector<float> x, w, b, y, gx, gw, gb;
};

Buffers make(std::size_t layer) {
  const auto& l = kLayers[layer];
  Buffers B;
  B.g.in_ch = l[0];
  B.g.out_ch = l[1];
  B.g.in = {l[2], l[3], l[4]};
  B.g.kernel = l[5];
  B.g.stride = l[6];
  B.g.pad = l[5] == 5 ? 2 : 0;
  std::mt19937 rng(1);
  std::normal_distribution<float> n;
  B.x.resize(B.g.input_size());
  B.w.resize(B.g.weight_size());
  B.b.resize(B.g.out_ch);
  B.y.resize(B.g.output_size());
  B.gx.resize(B.g.input_size());
  B.gw.resize(B.g.weight_size());
  B.gb.resize(B.g.out_ch);
  for (auto* v : {&B.x, &B.w, &B.b, &B.y}) for (auto& e : *v) e = n(rng);
  return B;
}

void label(benchmark::State& state, const Buffers& B) {
  const auto& l = kLayers[state.range(0)];
  state.SetLabel(std::to_string(l[0]) + "->" + std::to_string(l[1]) + " ch " + std::to_string(l[2]) + "x" +
                 std::to_string(l[3]) + "x" + std::to_string(l[4]) + " k" + std::to_string(l[5]) + "/" +
                 std::to_string(l[6]));
  const double macs = static_cast<double>(B.g.output_size()) * B.g.in_ch * B.g.kernel * B.g.kernel * B.g.kernel;
  state.counters["GMAC/s"] = benchmark::Counter(macs * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Reference>
void forward(benchmark::State& state) {
  auto B = make(state.range(0));
  for (auto _ : state) {
    if constexpr (Reference)
      k::reference::conv3d_forward<float>(B.g, B.x, B.w, B.b, B.y);
    else
      k::conv3d_forward<float>(B.g, B.x, B.w, B.b, B.y);
    benchmark::DoNotOptimize(B.y.data());
  }
  label(state, B);
}

template <bool Reference>
void backward_input(benchmark::State& state) {
  auto B = make(state.range(0));
  for (auto _ : state) {
    if constexpr (Reference)
      k::reference::conv3d_backward_input<float>(B.g, B.y, B.w, B.gx);
    else
      k::conv3d_backward_input<float>(B.g, B.y, B.w, B.gx);
    benchmark::DoNotOptimize(B.gx.data());
  }
  label(state, B);
}

template <bool Reference>
void backward_weight(benchmark::State& state) {
  auto B = make(state.range(0));
  for (auto _ : state) {
    if constexpr (Reference)
      k::reference::conv3d_backward_weight<float>(B.g, B.x, B.y, B.gw, B.gb);
    else
      k::conv3d_backward_weight<float>(B.g, B.x, B.y, B.gw, B.gb);
    benchmark::DoNotOptimize(B.gw.data());
  }
  label(state, B);
}

}  // namespace

#define LAYERS DenseRange(0, static_cast<int>(kLayers.size()) - 1)->Unit(benchmark::kMillisecond)
BENCHMARK(forward<false>)->Name("forward/openmp")->LAYERS;
BENCHMARK(forward<true>)->Name("forward/reference")->LAYERS;
BENCHMARK(backward_input<false>)->Name("backward_input/openmp")->LAYERS;
BENCHMARK(backward_input<true>)->Name("backward_input/reference")->LAYERS;
BENCHMARK(backward_weight<false>)->Name("backward_weight/openmp")->LAYERS;
BENCHMARK(backward_weight<true>)->Name("backward_weight/reference")->LAYERS;

BENCHMARK_MAIN();
