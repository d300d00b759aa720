#pragma once

// 3D convolution kernels over x-fastest NCXYZ buffers.
//
// Memory layout of a feature map: index = x + X*(y + Y*(z + Z*(c + C*n))).
// Weights use the same convention with shape (out_ch, in_ch, k, k, k), i.e.
// index = kx + K*(ky + K*(kz + K*(ic + in_ch*oc))).
//
// The top-level functions are OpenMP-parallel. Work is split over independent
// output slices and every reduction runs in a fixed order, so results are
// bitwise identical for any thread count. The `reference` namespace holds the
// serial direct-summation versions kept for tests and benchmarks.

#include <array>
#include <cstddef>
#include <span>

namespace ilio::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::array<std::size_t, 3> in{1, 1, 1};  // x, y, z
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::array<std::size_t, 3> out() const {
    std::array<std::size_t, 3> o{};
    for (int a = 0; a < 3; ++a) o[a] = (in[a] + 2 * pad - kernel) / stride + 1;
    return o;
  }
  // Throws ArgumentError if the window does not fit or strides do not tile.
  void validate() const;

  std::size_t in_voxels() const { return in[0] * in[1] * in[2]; }
  std::size_t out_voxels() const {
    auto o = out();
    return o[0] * o[1] * o[2];
  }
  std::size_t input_size() const { return batch * in_ch * in_voxels(); }
  std::size_t output_size() const { return batch * out_ch * out_voxels(); }
  std::size_t weight_size() const { return out_ch * in_ch * kernel * kernel * kernel; }
};

// y = conv(x, w) + bias. `bias` may be empty.
template <typename T>
void conv3d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);

// gx = d<gy, conv(x)>/dx (overwrites gx).
template <typename T>
void conv3d_backward_input(const ConvGeometry& g, std::span<const T> gy, std::span<const T> w,
                           std::span<T> gx);

// gw, gbias = gradients w.r.t. weights and bias (overwrite). `gbias` may be empty.
template <typename T>
void conv3d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> gy,
                            std::span<T> gw, std::span<T> gbias);

namespace reference {

template <typename T>
void conv3d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);

template <typename T>
void conv3d_backward_input(const ConvGeometry& g, std::span<const T> gy, std::span<const T> w,
                           std::span<T> gx);

template <typename T>
void conv3d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> gy,
                            std::span<T> gw, std::span<T> gbias);

}  // namespace reference

}  // namespace ilio::kernels
