#include "ilioseg/kernels/conv3d.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <algorithm>
#include <string>
#include <vector>

#include "ilioseg/error.hpp"

namespace ilio::kernels {

void ConvGeometry::validate() const {
  if (batch == 0 || in_ch == 0 || out_ch == 0) throw ArgumentError("conv3d: empty batch or channels");
  if (kernel == 0 || stride == 0) throw ArgumentError("conv3d: kernel and stride must be positive");
  for (int a = 0; a < 3; ++a) {
    if (in[a] == 0) throw ArgumentError("conv3d: empty spatial axis");
    if (in[a] + 2 * pad < kernel) throw ArgumentError("conv3d: kernel larger than padded input");
    if ((in[a] + 2 * pad - kernel) % stride != 0) {
      throw ArgumentError("conv3d: spatial dim " + std::to_string(in[a]) +
                          " not tiled by stride " + std::to_string(stride));
    }
  }
}

namespace {

struct Padded {
  std::size_t px, py, pz;
  std::size_t plane() const { return px * py; }
  std::size_t volume() const { return px * py * pz; }
};

// Copies each (n, c) volume into a zero-padded buffer.
template <typename T>
std::vector<T> pad_volumes(std::span<const T> src, std::size_t count,
                           const std::array<std::size_t, 3>& dims, std::size_t pad,
                           Padded& p) {
  p = {dims[0] + 2 * pad, dims[1] + 2 * pad, dims[2] + 2 * pad};
  std::vector<T> out(count * p.volume(), T(0));
  const std::size_t vox = dims[0] * dims[1] * dims[2];
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < count; ++c) {
    for (std::size_t z = 0; z < dims[2]; ++z) {
      for (std::size_t y = 0; y < dims[1]; ++y) {
        const T* s = src.data() + c * vox + (z * dims[1] + y) * dims[0];
        T* d = out.data() + c * p.volume() + ((z + pad) * p.py + (y + pad)) * p.px + pad;
        std::copy(s, s + dims[0], d);
      }
    }
  }
  return out;
}

// acc[i] += sum_k w[k] * src[i + k] over a contiguous run.
template <typename T, int K>
inline void accumulate_taps(T* __restrict acc, const T* __restrict src, const T* w,
                            std::size_t len) {
  if constexpr (K == 5) {
    const T w0 = w[0], w1 = w[1], w2 = w[2], w3 = w[3], w4 = w[4];
    for (std::size_t i = 0; i < len; ++i) {
      acc[i] += w0 * src[i] + w1 * src[i + 1] + w2 * src[i + 2] + w3 * src[i + 3] +
                w4 * src[i + 4];
    }
  } else if constexpr (K == 1) {
    const T w0 = w[0];
    for (std::size_t i = 0; i < len; ++i) acc[i] += w0 * src[i];
  } else {
    for (int k = 0; k < K; ++k) {
      const T wk = w[k];
      for (std::size_t i = 0; i < len; ++i) acc[i] += wk * src[i + k];
    }
  }
}

template <typename T>
inline void accumulate_taps_dyn(T* __restrict acc, const T* __restrict src, const T* w,
                                std::size_t k, std::size_t len) {
  switch (k) {
    case 5: accumulate_taps<T, 5>(acc, src, w, len); break;
    case 1: accumulate_taps<T, 1>(acc, src, w, len); break;
    case 2: accumulate_taps<T, 2>(acc, src, w, len); break;
    case 3: accumulate_taps<T, 3>(acc, src, w, len); break;
    default:
      for (std::size_t t = 0; t < k; ++t) {
        const T wk = w[t];
        for (std::size_t i = 0; i < len; ++i) acc[i] += wk * src[i + t];
      }
  }
}

// Dot products of one gradient run against K shifted source runs. The SIMD
// reduction order is fixed by the build, not by the thread count.
template <typename T>
inline void dot_taps(const T* __restrict g, const T* __restrict src, std::size_t k,
                     std::size_t len, double* out) {
  if (k == 5) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0;
#pragma omp simd reduction(+ : s0, s1, s2, s3, s4)
    for (std::size_t i = 0; i < len; ++i) {
      const T gv = g[i];
      s0 += gv * src[i];
      s1 += gv * src[i + 1];
      s2 += gv * src[i + 2];
      s3 += gv * src[i + 3];
      s4 += gv * src[i + 4];
    }
    out[0] += s0;
    out[1] += s1;
    out[2] += s2;
    out[3] += s3;
    out[4] += s4;
    return;
  }
  for (std::size_t t = 0; t < k; ++t) {
    T s = 0;
#pragma omp simd reduction(+ : s)
    for (std::size_t i = 0; i < len; ++i) s += g[i] * src[i + t];
    out[t] += s;
  }
}

template <typename T>
inline double dot_strided(const T* __restrict g, const T* __restrict src, std::size_t stride,
                          std::size_t len) {
  double s = 0.0;
  for (std::size_t i = 0; i < len; ++i) s += static_cast<double>(g[i]) * src[i * stride];
  return s;
}

// Small output planes make the row-pitch loops overhead-bound; there the
// convolution is lowered to a matrix product over an im2col buffer.
constexpr std::size_t kGemmPlaneForward = 16;
constexpr std::size_t kGemmPlaneWeight = 64;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// col[(ic * k3 + tap) * ovox + pos] for one batch item, stride 1.
template <typename T>
void im2col_stride1(const T* xp_n, const Padded& p, std::size_t in_ch, std::size_t K,
                    const std::array<std::size_t, 3>& o, T* col) {
  const std::size_t ovox = o[0] * o[1] * o[2];
  for (std::size_t ic = 0; ic < in_ch; ++ic) {
    const T* vol = xp_n + ic * p.volume();
    for (std::size_t kz = 0; kz < K; ++kz) {
      for (std::size_t ky = 0; ky < K; ++ky) {
        for (std::size_t kx = 0; kx < K; ++kx) {
          T* dst = col + (ic * K * K * K + (kz * K + ky) * K + kx) * ovox;
          for (std::size_t oz = 0; oz < o[2]; ++oz) {
            for (std::size_t oy = 0; oy < o[1]; ++oy) {
              const T* src = vol + (oz + kz) * p.plane() + (oy + ky) * p.px + kx;
              std::copy_n(src, o[0], dst + (oz * o[1] + oy) * o[0]);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void forward_gemm(const ConvGeometry& g, const std::vector<T>& xp, const Padded& p,
                  std::span<const T> w, std::span<const T> bias, std::span<T> y) {
  const std::size_t K = g.kernel;
  const auto o = g.out();
  const std::size_t rows = g.in_ch * K * K * K;
  const std::size_t ovox = g.out_voxels();
  Eigen::Map<const RowMat<T>> W(w.data(), g.out_ch, rows);
#pragma omp parallel
  {
    std::vector<T> col(rows * ovox);
#pragma omp for schedule(static)
    for (std::size_t n = 0; n < g.batch; ++n) {
      im2col_stride1(xp.data() + n * g.in_ch * p.volume(), p, g.in_ch, K, o, col.data());
      Eigen::Map<const RowMat<T>> C(col.data(), rows, ovox);
      Eigen::Map<RowMat<T>> Y(y.data() + n * g.out_ch * ovox, g.out_ch, ovox);
      Y.noalias() = W * C;
      if (!bias.empty()) {
        for (std::size_t oc = 0; oc < g.out_ch; ++oc) Y.row(oc).array() += bias[oc];
      }
    }
  }
}

// Stride-1 forward: each output z-plane is computed in the padded row pitch
// (px) so the inner loop runs over the whole plane. Columns x >= ox are junk
// and are dropped when the plane is written back.
template <typename T>
void forward_stride1(const ConvGeometry& g, const std::vector<T>& xp, const Padded& p,
                     std::span<const T> w, std::span<const T> bias, std::span<T> y) {
  const std::size_t K = g.kernel;
  const auto o = g.out();
  if (o[0] * o[1] <= kGemmPlaneForward) {
    forward_gemm(g, xp, p, w, bias, y);
    return;
  }
  const std::size_t run = (o[1] - 1) * p.px + o[0];
  const std::size_t k3 = K * K * K;
  const std::size_t ovox = g.out_voxels();
  const std::size_t jobs = g.batch * g.out_ch;

#pragma omp parallel
  {
    std::vector<T> acc(run);
#pragma omp for schedule(static)
    for (std::size_t job = 0; job < jobs; ++job) {
      const std::size_t n = job / g.out_ch;
      const std::size_t oc = job % g.out_ch;
      const T b = bias.empty() ? T(0) : bias[oc];
      for (std::size_t oz = 0; oz < o[2]; ++oz) {
        std::fill(acc.begin(), acc.end(), b);
        for (std::size_t ic = 0; ic < g.in_ch; ++ic) {
          const T* wbase = w.data() + (oc * g.in_ch + ic) * k3;
          const T* vol = xp.data() + (n * g.in_ch + ic) * p.volume();
          for (std::size_t kz = 0; kz < K; ++kz) {
            const T* plane = vol + (oz + kz) * p.plane();
            for (std::size_t ky = 0; ky < K; ++ky) {
              accumulate_taps_dyn(acc.data(), plane + ky * p.px, wbase + (kz * K + ky) * K, K,
                                  run);
            }
          }
        }
        T* dst = y.data() + job * ovox + oz * o[0] * o[1];
        for (std::size_t oy = 0; oy < o[1]; ++oy) {
          std::copy_n(acc.data() + oy * p.px, o[0], dst + oy * o[0]);
        }
      }
    }
  }
}

template <typename T>
void forward_strided(const ConvGeometry& g, const std::vector<T>& xp, const Padded& p,
                     std::span<const T> w, std::span<const T> bias, std::span<T> y) {
  const std::size_t K = g.kernel, S = g.stride;
  const auto o = g.out();
  const std::size_t k3 = K * K * K;
  const std::size_t ovox = g.out_voxels();
  const std::size_t jobs = g.batch * g.out_ch;

#pragma omp parallel
  {
    std::vector<T> acc(o[0]);
#pragma omp for schedule(static)
    for (std::size_t job = 0; job < jobs; ++job) {
      const std::size_t n = job / g.out_ch;
      const std::size_t oc = job % g.out_ch;
      const T b = bias.empty() ? T(0) : bias[oc];
      for (std::size_t oz = 0; oz < o[2]; ++oz) {
        for (std::size_t oy = 0; oy < o[1]; ++oy) {
          std::fill(acc.begin(), acc.end(), b);
          for (std::size_t ic = 0; ic < g.in_ch; ++ic) {
            const T* wbase = w.data() + (oc * g.in_ch + ic) * k3;
            const T* vol = xp.data() + (n * g.in_ch + ic) * p.volume();
            for (std::size_t kz = 0; kz < K; ++kz) {
              for (std::size_t ky = 0; ky < K; ++ky) {
                const T* row = vol + ((oz * S + kz) * p.py + (oy * S + ky)) * p.px;
                const T* wrow = wbase + (kz * K + ky) * K;
                for (std::size_t kx = 0; kx < K; ++kx) {
                  const T wk = wrow[kx];
                  for (std::size_t ox = 0; ox < o[0]; ++ox) acc[ox] += wk * row[ox * S + kx];
                }
              }
            }
          }
          std::copy(acc.begin(), acc.end(), y.data() + job * ovox + (oz * o[1] + oy) * o[0]);
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv3d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  g.validate();
  if (x.size() != g.input_size() || w.size() != g.weight_size() || y.size() != g.output_size() ||
      (!bias.empty() && bias.size() != g.out_ch)) {
    throw ArgumentError("conv3d_forward: buffer sizes do not match geometry");
  }
  Padded p{};
  const auto xp = pad_volumes(x, g.batch * g.in_ch, g.in, g.pad, p);
  if (g.stride == 1) {
    forward_stride1(g, xp, p, w, bias, y);
  } else {
    forward_strided(g, xp, p, w, bias, y);
  }
}

template <typename T>
void conv3d_backward_input(const ConvGeometry& g, std::span<const T> gy, std::span<const T> w,
                           std::span<T> gx) {
  g.validate();
  if (gy.size() != g.output_size() || w.size() != g.weight_size() || gx.size() != g.input_size()) {
    throw ArgumentError("conv3d_backward_input: buffer sizes do not match geometry");
  }
  const std::size_t K = g.kernel;
  const std::size_t k3 = K * K * K;

  if (g.stride == 1 && g.pad < K) {
    // Correlation of gy with the spatially flipped, channel-transposed kernel.
    std::vector<T> wf(w.size());
    for (std::size_t oc = 0; oc < g.out_ch; ++oc) {
      for (std::size_t ic = 0; ic < g.in_ch; ++ic) {
        const T* src = w.data() + (oc * g.in_ch + ic) * k3;
        T* dst = wf.data() + (ic * g.out_ch + oc) * k3;
        for (std::size_t k = 0; k < k3; ++k) dst[k3 - 1 - k] = src[k];
      }
    }
    ConvGeometry t = g;
    t.in_ch = g.out_ch;
    t.out_ch = g.in_ch;
    t.in = g.out();
    t.pad = K - 1 - g.pad;
    Padded p{};
    const auto gyp = pad_volumes(gy, t.batch * t.in_ch, t.in, t.pad, p);
    forward_stride1<T>(t, gyp, p, std::span<const T>(wf), std::span<const T>(), gx);
    return;
  }

  // Strided: scatter into a padded buffer per (n, ic), then crop.
  const auto o = g.out();
  const std::size_t S = g.stride;
  const Padded p{g.in[0] + 2 * g.pad, g.in[1] + 2 * g.pad, g.in[2] + 2 * g.pad};
  const std::size_t ovox = g.out_voxels();
  const std::size_t ivox = g.in_voxels();
  const std::size_t jobs = g.batch * g.in_ch;

#pragma omp parallel
  {
    std::vector<T> buf(p.volume());
#pragma omp for schedule(static)
    for (std::size_t job = 0; job < jobs; ++job) {
      const std::size_t n = job / g.in_ch;
      const std::size_t ic = job % g.in_ch;
      std::fill(buf.begin(), buf.end(), T(0));
      for (std::size_t oc = 0; oc < g.out_ch; ++oc) {
        const T* wbase = w.data() + (oc * g.in_ch + ic) * k3;
        const T* gvol = gy.data() + (n * g.out_ch + oc) * ovox;
        for (std::size_t kz = 0; kz < K; ++kz) {
          for (std::size_t ky = 0; ky < K; ++ky) {
            const T* wrow = wbase + (kz * K + ky) * K;
            for (std::size_t oz = 0; oz < o[2]; ++oz) {
              for (std::size_t oy = 0; oy < o[1]; ++oy) {
                const T* grow = gvol + (oz * o[1] + oy) * o[0];
                T* drow = buf.data() + ((oz * S + kz) * p.py + (oy * S + ky)) * p.px;
                for (std::size_t kx = 0; kx < K; ++kx) {
                  const T wk = wrow[kx];
                  for (std::size_t ox = 0; ox < o[0]; ++ox) drow[ox * S + kx] += wk * grow[ox];
                }
              }
            }
          }
        }
      }
      T* dst = gx.data() + job * ivox;
      for (std::size_t z = 0; z < g.in[2]; ++z) {
        for (std::size_t y = 0; y < g.in[1]; ++y) {
          const T* s = buf.data() + ((z + g.pad) * p.py + (y + g.pad)) * p.px + g.pad;
          std::copy_n(s, g.in[0], dst + (z * g.in[1] + y) * g.in[0]);
        }
      }
    }
  }
}

template <typename T>
void conv3d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> gy,
                            std::span<T> gw, std::span<T> gbias) {
  g.validate();
  if (x.size() != g.input_size() || gy.size() != g.output_size() || gw.size() != g.weight_size() ||
      (!gbias.empty() && gbias.size() != g.out_ch)) {
    throw ArgumentError("conv3d_backward_weight: buffer sizes do not match geometry");
  }
  const std::size_t K = g.kernel, S = g.stride;
  const std::size_t k3 = K * K * K;
  const auto o = g.out();
  const std::size_t ovox = g.out_voxels();
  Padded p{};
  const auto xp = pad_volumes(x, g.batch * g.in_ch, g.in, g.pad, p);

  if (!gbias.empty()) {
#pragma omp parallel for schedule(static)
    for (std::size_t oc = 0; oc < g.out_ch; ++oc) {
      double s = 0.0;
      for (std::size_t n = 0; n < g.batch; ++n) {
        const T* gv = gy.data() + (n * g.out_ch + oc) * ovox;
        for (std::size_t i = 0; i < ovox; ++i) s += gv[i];
      }
      gbias[oc] = static_cast<T>(s);
    }
  }

  const std::size_t jobs = g.out_ch * g.in_ch;

  if (S == 1 && o[0] * o[1] <= kGemmPlaneWeight) {
    // gw (out_ch x in_ch*k3) = sum_n gy_n (out_ch x ovox) * col_n^T.
    const std::size_t rows = g.in_ch * k3;
    std::vector<double> acc(g.out_ch * rows, 0.0);
    std::vector<T> col(rows * ovox);
    RowMat<T> part(g.out_ch, rows);
    for (std::size_t n = 0; n < g.batch; ++n) {
      im2col_stride1(xp.data() + n * g.in_ch * p.volume(), p, g.in_ch, K, o, col.data());
      Eigen::Map<const RowMat<T>> C(col.data(), rows, ovox);
      Eigen::Map<const RowMat<T>> G(gy.data() + n * g.out_ch * ovox, g.out_ch, ovox);
      part.noalias() = G * C.transpose();
      const T* src = part.data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += src[i];
    }
    for (std::size_t i = 0; i < acc.size(); ++i) gw[i] = static_cast<T>(acc[i]);
    return;
  }

  if (S == 1) {
    // Re-lay gy in the padded row pitch with zeroed junk columns so each
    // (kz, ky, kx) tap becomes one contiguous dot product per plane.
    const std::size_t run = (o[1] - 1) * p.px + o[0];
    std::vector<T> gyr(g.batch * g.out_ch * o[2] * run, T(0));
#pragma omp parallel for schedule(static)
    for (std::size_t c = 0; c < g.batch * g.out_ch; ++c) {
      for (std::size_t oz = 0; oz < o[2]; ++oz) {
        for (std::size_t oy = 0; oy < o[1]; ++oy) {
          const T* s = gy.data() + c * ovox + (oz * o[1] + oy) * o[0];
          std::copy_n(s, o[0], gyr.data() + (c * o[2] + oz) * run + oy * p.px);
        }
      }
    }

#pragma omp parallel
    {
      std::vector<double> sums(k3);
#pragma omp for schedule(static)
      for (std::size_t job = 0; job < jobs; ++job) {
        const std::size_t oc = job / g.in_ch;
        const std::size_t ic = job % g.in_ch;
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t n = 0; n < g.batch; ++n) {
          const T* vol = xp.data() + (n * g.in_ch + ic) * p.volume();
          const T* gbase = gyr.data() + (n * g.out_ch + oc) * o[2] * run;
          for (std::size_t oz = 0; oz < o[2]; ++oz) {
            const T* gp = gbase + oz * run;
            for (std::size_t kz = 0; kz < K; ++kz) {
              const T* plane = vol + (oz + kz) * p.plane();
              for (std::size_t ky = 0; ky < K; ++ky) {
                dot_taps(gp, plane + ky * p.px, K, run, sums.data() + (kz * K + ky) * K);
              }
            }
          }
        }
        T* dst = gw.data() + job * k3;
        for (std::size_t k = 0; k < k3; ++k) dst[k] = static_cast<T>(sums[k]);
      }
    }
    return;
  }

#pragma omp parallel
  {
    std::vector<double> sums(k3);
#pragma omp for schedule(static)
    for (std::size_t job = 0; job < jobs; ++job) {
      const std::size_t oc = job / g.in_ch;
      const std::size_t ic = job % g.in_ch;
      std::fill(sums.begin(), sums.end(), 0.0);
      for (std::size_t n = 0; n < g.batch; ++n) {
        const T* vol = xp.data() + (n * g.in_ch + ic) * p.volume();
        const T* gvol = gy.data() + (n * g.out_ch + oc) * ovox;
        for (std::size_t oz = 0; oz < o[2]; ++oz) {
          for (std::size_t oy = 0; oy < o[1]; ++oy) {
            const T* grow = gvol + (oz * o[1] + oy) * o[0];
            for (std::size_t kz = 0; kz < K; ++kz) {
              for (std::size_t ky = 0; ky < K; ++ky) {
                const T* row = vol + ((oz * S + kz) * p.py + (oy * S + ky)) * p.px;
                for (std::size_t kx = 0; kx < K; ++kx) {
                  sums[(kz * K + ky) * K + kx] += dot_strided(grow, row + kx, S, o[0]);
                }
              }
            }
          }
        }
      }
      T* dst = gw.data() + job * k3;
      for (std::size_t k = 0; k < k3; ++k) dst[k] = static_cast<T>(sums[k]);
    }
  }
}

namespace reference {

namespace {

template <typename T>
long in_index(const ConvGeometry& g, std::size_t n, std::size_t c, long x, long y, long z) {
  if (x < 0 || y < 0 || z < 0 || x >= static_cast<long>(g.in[0]) ||
      y >= static_cast<long>(g.in[1]) || z >= static_cast<long>(g.in[2])) {
    return -1;
  }
  return static_cast<long>(x + g.in[0] * (y + g.in[1] * (z + g.in[2] * (c + g.in_ch * n))));
}

}  // namespace

template <typename T>
void conv3d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  g.validate();
  const auto o = g.out();
  const long K = static_cast<long>(g.kernel), S = static_cast<long>(g.stride),
             P = static_cast<long>(g.pad);
  std::size_t yi = 0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_ch; ++oc) {
      for (std::size_t oz = 0; oz < o[2]; ++oz) {
        for (std::size_t oy = 0; oy < o[1]; ++oy) {
          for (std::size_t ox = 0; ox < o[0]; ++ox, ++yi) {
            double s = bias.empty() ? 0.0 : static_cast<double>(bias[oc]);
            for (std::size_t ic = 0; ic < g.in_ch; ++ic) {
              for (long kz = 0; kz < K; ++kz) {
                for (long ky = 0; ky < K; ++ky) {
                  for (long kx = 0; kx < K; ++kx) {
                    const long xi = in_index<T>(g, n, ic, static_cast<long>(ox) * S + kx - P,
                                                static_cast<long>(oy) * S + ky - P,
                                                static_cast<long>(oz) * S + kz - P);
                    if (xi < 0) continue;
                    const std::size_t wi = kx + K * (ky + K * (kz + K * (ic + g.in_ch * oc)));
                    s += static_cast<double>(w[wi]) * x[xi];
                  }
                }
              }
            }
            y[yi] = static_cast<T>(s);
          }
        }
      }
    }
  }
}

template <typename T>
void conv3d_backward_input(const ConvGeometry& g, std::span<const T> gy, std::span<const T> w,
                           std::span<T> gx) {
  g.validate();
  const auto o = g.out();
  const long K = static_cast<long>(g.kernel), S = static_cast<long>(g.stride),
             P = static_cast<long>(g.pad);
  std::vector<double> acc(gx.size(), 0.0);
  std::size_t yi = 0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_ch; ++oc) {
      for (std::size_t oz = 0; oz < o[2]; ++oz) {
        for (std::size_t oy = 0; oy < o[1]; ++oy) {
          for (std::size_t ox = 0; ox < o[0]; ++ox, ++yi) {
            for (std::size_t ic = 0; ic < g.in_ch; ++ic) {
              for (long kz = 0; kz < K; ++kz) {
                for (long ky = 0; ky < K; ++ky) {
                  for (long kx = 0; kx < K; ++kx) {
                    const long xi = in_index<T>(g, n, ic, static_cast<long>(ox) * S + kx - P,
                                                static_cast<long>(oy) * S + ky - P,
                                                static_cast<long>(oz) * S + kz - P);
                    if (xi < 0) continue;
                    const std::size_t wi = kx + K * (ky + K * (kz + K * (ic + g.in_ch * oc)));
                    acc[xi] += static_cast<double>(w[wi]) * gy[yi];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = static_cast<T>(acc[i]);
}

template <typename T>
void conv3d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> gy,
                            std::span<T> gw, std::span<T> gbias) {
  g.validate();
  const auto o = g.out();
  const long K = static_cast<long>(g.kernel), S = static_cast<long>(g.stride),
             P = static_cast<long>(g.pad);
  std::vector<double> acc(gw.size(), 0.0);
  std::vector<double> bacc(g.out_ch, 0.0);
  std::size_t yi = 0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_ch; ++oc) {
      for (std::size_t oz = 0; oz < o[2]; ++oz) {
        for (std::size_t oy = 0; oy < o[1]; ++oy) {
          for (std::size_t ox = 0; ox < o[0]; ++ox, ++yi) {
            bacc[oc] += gy[yi];
            for (std::size_t ic = 0; ic < g.in_ch; ++ic) {
              for (long kz = 0; kz < K; ++kz) {
                for (long ky = 0; ky < K; ++ky) {
                  for (long kx = 0; kx < K; ++kx) {
                    const long xi = in_index<T>(g, n, ic, static_cast<long>(ox) * S + kx - P,
                                                static_cast<long>(oy) * S + ky - P,
                                                static_cast<long>(oz) * S + kz - P);
                    if (xi < 0) continue;
                    const std::size_t wi = kx + K * (ky + K * (kz + K * (ic + g.in_ch * oc)));
                    acc[wi] += static_cast<double>(gy[yi]) * x[xi];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < gw.size(); ++i) gw[i] = static_cast<T>(acc[i]);
  if (!gbias.empty()) {
    for (std::size_t i = 0; i < gbias.size(); ++i) gbias[i] = static_cast<T>(bacc[i]);
  }
}

}  // namespace reference

#define ILIO_INSTANTIATE(T)                                                                     \
  template void conv3d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,  \
                                  std::span<const T>, std::span<T>);                            \
  template void conv3d_backward_input<T>(const ConvGeometry&, std::span<const T>,               \
                                         std::span<const T>, std::span<T>);                     \
  template void conv3d_backward_weight<T>(const ConvGeometry&, std::span<const T>,              \
                                          std::span<const T>, std::span<T>, std::span<T>);      \
  template void reference::conv3d_forward<T>(const ConvGeometry&, std::span<const T>,           \
                                             std::span<const T>, std::span<const T>,            \
                                             std::span<T>);                                     \
  template void reference::conv3d_backward_input<T>(const ConvGeometry&, std::span<const T>,    \
                                                    std::span<const T>, std::span<T>);          \
  template void reference::conv3d_backward_weight<T>(const ConvGeometry&, std::span<const T>,   \
                                                     std::span<const T>, std::span<T>,          \
                                                     std::span<T>);

ILIO_INSTANTIATE(float)
ILIO_INSTANTIATE(double)

#undef ILIO_INSTANTIATE

}  // namespace ilio::kernels
