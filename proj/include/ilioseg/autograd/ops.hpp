#pragma once

// Differentiable operators used by the segmentation network. Feature maps are
// rank-5 tensors (batch, channel, x, y, z) stored x-fastest.

#include <cstdint>
#include <vector>

#include "ilioseg/autograd/tensor.hpp"

namespace ilio::ag {

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kDiceSmooth = 1e-6;

// Weights (out_ch, in_ch, k, k, k) plus one bias per output channel.
// For conv3d_transpose the same kernel is read as the adjoint: it maps
// out_ch input channels to in_ch output channels, and the bias has in_ch
// entries.
template <typename T>
struct ConvKernel {
  Tensor<T> weight;
  Tensor<T> bias;

  // Zero-initialised; kernel size must be 1, 2 or 5.
  static ConvKernel create(std::size_t out_ch, std::size_t in_ch, std::size_t k,
                           bool transpose = false);

  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t size() const { return weight.dim(2); }
  std::size_t parameter_count() const { return weight.size() + (bias.defined() ? bias.size() : 0); }
};

// Default padding: half the window for stride 1 (5 -> 2, 1 -> 0), none otherwise.
std::size_t default_padding(std::size_t kernel, std::size_t stride);

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const ConvKernel<T>& k, std::size_t stride, std::size_t pad);

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const ConvKernel<T>& k, std::size_t stride = 1) {
  return conv3d(x, k, stride, default_padding(k.size(), stride));
}

// Upsampling by `stride`; the adjoint of the stride-`stride` conv3d with the same weights.
template <typename T>
Tensor<T> conv3d_transpose(const Tensor<T>& x, const ConvKernel<T>& k, std::size_t stride = 2);

template <typename T>
Tensor<T> selu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// input + output when channel counts match; otherwise a 1x1x1 projection of
// the input (required then) is added to the output.
template <typename T>
Tensor<T> residual_combine(const Tensor<T>& block_input, const Tensor<T>& block_output,
                           const ConvKernel<T>* projection = nullptr);

// 1 - 2 sum(p g) / (sum p^2 + sum g^2 + eps). The target is a constant.
template <typename T>
Tensor<T> soft_dice_loss(const Tensor<T>& probs, const Tensor<T>& target);

// sum_i c_i x_i with constant coefficients; handy for turning a map into a scalar.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& coeffs);

}  // namespace ilio::ag
