#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ilioseg/autograd/tensor.hpp"

namespace ilio::ag {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moments are held in double, one buffer per parameter tensor.
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected Adam update of a single buffer at step t >= 1.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<double> m,
                 std::span<double> v, std::uint64_t t, const AdamConfig& config);

// Updates every parameter from its accumulated gradient (a parameter without
// a gradient counts as zero). Throws NumericError before touching anything if
// a gradient is non-finite.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState& state);

}  // namespace ilio::ag
