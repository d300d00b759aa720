#include "ilioseg/autograd/ops.hpp"

#include <cmath>
#include <sstream>

#include "ilioseg/kernels/conv3d.hpp"

namespace ilio::ag {

std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

namespace {

template <typename T>
void require_rank5(const Tensor<T>& x, const char* op) {
  if (!x.defined() || x.rank() != 5) {
    throw ArgumentError(std::string(op) + ": expected (batch, channel, x, y, z) tensor, got " +
                        (x.defined() ? shape_string(x.shape()) : std::string("undefined")));
  }
}

template <typename T>
void accumulate(std::span<T> dst, std::span<const T> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
std::vector<T> channel_sums(std::span<const T> g, std::size_t batch, std::size_t ch,
                            std::size_t vox) {
  std::vector<T> out(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    double s = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const T* p = g.data() + (n * ch + c) * vox;
      for (std::size_t i = 0; i < vox; ++i) s += p[i];
    }
    out[c] = static_cast<T>(s);
  }
  return out;
}

}  // namespace

std::size_t default_padding(std::size_t kernel, std::size_t stride) {
  return stride == 1 ? (kernel - 1) / 2 : 0;
}

template <typename T>
ConvKernel<T> ConvKernel<T>::create(std::size_t out_ch, std::size_t in_ch, std::size_t k,
                                    bool transpose) {
  if (k != 1 && k != 2 && k != 5) throw ArgumentError("conv kernel size must be 1, 2 or 5");
  if (out_ch == 0 || in_ch == 0) throw ArgumentError("conv kernel needs positive channel counts");
  ConvKernel kernel;
  kernel.weight = Tensor<T>::zeros({out_ch, in_ch, k, k, k}, true);
  kernel.bias = Tensor<T>::zeros({transpose ? in_ch : out_ch}, true);
  return kernel;
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const ConvKernel<T>& k, std::size_t stride, std::size_t pad) {
  require_rank5(x, "conv3d");
  const auto& ws = k.weight.shape();
  if (ws.size() != 5 || ws[2] != ws[3] || ws[2] != ws[4]) throw ArgumentError("conv3d: bad kernel shape");
  if (ws[1] != x.dim(1)) {
    throw ArgumentError("conv3d: kernel expects " + std::to_string(ws[1]) + " input channels, got " +
                        std::to_string(x.dim(1)));
  }
  if (k.bias.defined() && k.bias.size() != ws[0]) throw ArgumentError("conv3d: bias size mismatch");
  if (stride != 1 && stride != 2) throw ArgumentError("conv3d: stride must be 1 or 2");

  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_ch = x.dim(1);
  g.out_ch = ws[0];
  g.in = {x.dim(2), x.dim(3), x.dim(4)};
  g.kernel = ws[2];
  g.stride = stride;
  g.pad = pad;
  g.validate();
  const auto o = g.out();

  std::vector<T> y(g.output_size());
  std::span<const T> bias = k.bias.defined() ? k.bias.values() : std::span<const T>();
  kernels::conv3d_forward<T>(g, x.values(), k.weight.values(), bias, y);

  auto xn = x.node();
  auto wn = k.weight.node();
  auto bn = k.bias.defined() ? k.bias.node() : nullptr;
  return Tensor<T>::make_result(
      {g.batch, g.out_ch, o[0], o[1], o[2]}, std::move(y), {xn, wn, bn},
      [g, xn, wn, bn](Node<T>& self) {
        std::span<const T> gy = self.grad;
        if (xn->requires_grad) {
          std::vector<T> gx(g.input_size());
          kernels::conv3d_backward_input<T>(g, gy, wn->value, gx);
          accumulate<T>(xn->ensure_grad(), gx);
        }
        const bool need_b = bn && bn->requires_grad;
        if (wn->requires_grad || need_b) {
          std::vector<T> gw(g.weight_size());
          std::vector<T> gb(need_b ? g.out_ch : 0);
          kernels::conv3d_backward_weight<T>(g, xn->value, gy, gw, gb);
          if (wn->requires_grad) accumulate<T>(wn->ensure_grad(), gw);
          if (need_b) accumulate<T>(bn->ensure_grad(), gb);
        }
      });
}

template <typename T>
Tensor<T> conv3d_transpose(const Tensor<T>& x, const ConvKernel<T>& k, std::size_t stride) {
  require_rank5(x, "conv3d_transpose");
  const auto& ws = k.weight.shape();
  if (ws.size() != 5) throw ArgumentError("conv3d_transpose: bad kernel shape");
  if (ws[0] != x.dim(1)) {
    throw ArgumentError("conv3d_transpose: kernel expects " + std::to_string(ws[0]) +
                        " input channels, got " + std::to_string(x.dim(1)));
  }
  if (k.bias.defined() && k.bias.size() != ws[1]) {
    throw ArgumentError("conv3d_transpose: bias size mismatch");
  }
  if (stride != 2 || ws[2] != 2) throw ArgumentError("conv3d_transpose: only 2x2x2 stride-2 supported");

  // Geometry of the forward conv whose adjoint this is.
  kernels::ConvGeometry g;
  g.batch = x.dim(0);
  g.in_ch = ws[1];
  g.out_ch = ws[0];
  g.in = {(x.dim(2) - 1) * stride + ws[2], (x.dim(3) - 1) * stride + ws[2],
          (x.dim(4) - 1) * stride + ws[2]};
  g.kernel = ws[2];
  g.stride = stride;
  g.pad = 0;
  g.validate();

  std::vector<T> y(g.input_size());
  kernels::conv3d_backward_input<T>(g, x.values(), k.weight.values(), y);
  if (k.bias.defined()) {
    const std::size_t vox = g.in_voxels();
    auto b = k.bias.values();
    for (std::size_t n = 0; n < g.batch; ++n) {
      for (std::size_t c = 0; c < g.in_ch; ++c) {
        T* p = y.data() + (n * g.in_ch + c) * vox;
        for (std::size_t i = 0; i < vox; ++i) p[i] += b[c];
      }
    }
  }

  auto xn = x.node();
  auto wn = k.weight.node();
  auto bn = k.bias.defined() ? k.bias.node() : nullptr;
  return Tensor<T>::make_result(
      {g.batch, g.in_ch, g.in[0], g.in[1], g.in[2]}, std::move(y), {xn, wn, bn},
      [g, xn, wn, bn](Node<T>& self) {
        std::span<const T> gy = self.grad;
        if (xn->requires_grad) {
          std::vector<T> gx(g.output_size());
          kernels::conv3d_forward<T>(g, gy, wn->value, std::span<const T>(), gx);
          accumulate<T>(xn->ensure_grad(), gx);
        }
        if (wn->requires_grad) {
          std::vector<T> gw(g.weight_size());
          kernels::conv3d_backward_weight<T>(g, gy, xn->value, gw, std::span<T>());
          accumulate<T>(wn->ensure_grad(), gw);
        }
        if (bn && bn->requires_grad) {
          auto gb = channel_sums<T>(gy, g.batch, g.in_ch, g.in_voxels());
          accumulate<T>(bn->ensure_grad(), gb);
        }
      });
}

template <typename T>
Tensor<T> selu(const Tensor<T>& x) {
  const T lambda = static_cast<T>(kSeluLambda);
  const T la = static_cast<T>(kSeluLambda * kSeluAlpha);
  auto xv = x.values();
  std::vector<T> y(xv.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < xv.size(); ++i) {
    y[i] = xv[i] > T(0) ? lambda * xv[i] : la * std::expm1(xv[i]);
  }
  auto xn = x.node();
  return Tensor<T>::make_result(x.shape(), std::move(y), {xn}, [xn, lambda, la](Node<T>& self) {
    auto gx = xn->ensure_grad();
    const auto& xv = xn->value;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += self.grad[i] * (xv[i] > T(0) ? lambda : la * std::exp(xv[i]));
    }
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto xv = x.values();
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    if (v >= T(0)) {
      y[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      y[i] = e / (T(1) + e);
    }
  }
  auto xn = x.node();
  return Tensor<T>::make_result(x.shape(), y, {xn}, [xn, y](Node<T>& self) {
    auto gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ArgumentError("add: shapes differ " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
  }
  auto av = a.values();
  auto bv = b.values();
  std::vector<T> y(av.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  auto an = a.node();
  auto bn = b.node();
  return Tensor<T>::make_result(a.shape(), std::move(y), {an, bn}, [an, bn](Node<T>& self) {
    std::span<const T> g = self.grad;
    if (an->requires_grad) accumulate<T>(an->ensure_grad(), g);
    if (bn->requires_grad) accumulate<T>(bn->ensure_grad(), g);
  });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank5(a, "concat_channels");
  require_rank5(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3) || a.dim(4) != b.dim(4)) {
    throw ArgumentError("concat_channels: batch/spatial dims differ " + shape_string(a.shape()) +
                        " vs " + shape_string(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t vox = a.dim(2) * a.dim(3) * a.dim(4);
  std::vector<T> y(n * (ca + cb) * vox);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.values().data() + i * ca * vox, ca * vox, y.data() + i * (ca + cb) * vox);
    std::copy_n(b.values().data() + i * cb * vox, cb * vox,
                y.data() + (i * (ca + cb) + ca) * vox);
  }
  auto an = a.node();
  auto bn = b.node();
  return Tensor<T>::make_result(
      {n, ca + cb, a.dim(2), a.dim(3), a.dim(4)}, std::move(y), {an, bn},
      [an, bn, n, ca, cb, vox](Node<T>& self) {
        for (std::size_t i = 0; i < n; ++i) {
          const T* g = self.grad.data() + i * (ca + cb) * vox;
          if (an->requires_grad) {
            T* d = an->ensure_grad().data() + i * ca * vox;
            for (std::size_t j = 0; j < ca * vox; ++j) d[j] += g[j];
          }
          if (bn->requires_grad) {
            T* d = bn->ensure_grad().data() + i * cb * vox;
            for (std::size_t j = 0; j < cb * vox; ++j) d[j] += g[ca * vox + j];
          }
        }
      });
}

template <typename T>
Tensor<T> residual_combine(const Tensor<T>& block_input, const Tensor<T>& block_output,
                           const ConvKernel<T>* projection) {
  require_rank5(block_input, "residual_combine");
  require_rank5(block_output, "residual_combine");
  for (std::size_t a : {0u, 2u, 3u, 4u}) {
    if (block_input.dim(a) != block_output.dim(a)) {
      throw ArgumentError("residual_combine: batch/spatial mismatch " +
                          shape_string(block_input.shape()) + " vs " +
                          shape_string(block_output.shape()));
    }
  }
  if (block_input.dim(1) == block_output.dim(1)) return add(block_input, block_output);
  if (projection == nullptr) {
    throw ArgumentError("residual_combine: channel mismatch needs a 1x1x1 projection");
  }
  if (projection->size() != 1) throw ArgumentError("residual_combine: projection must be 1x1x1");
  return add(conv3d(block_input, *projection, 1, 0), block_output);
}

template <typename T>
Tensor<T> soft_dice_loss(const Tensor<T>& probs, const Tensor<T>& target) {
  if (probs.shape() != target.shape()) {
    throw ArgumentError("soft_dice_loss: shapes differ " + shape_string(probs.shape()) + " vs " +
                        shape_string(target.shape()));
  }
  auto p = probs.values();
  auto g = target.values();
  double inter = 0.0, pp = 0.0, gg = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inter += static_cast<double>(p[i]) * g[i];
    pp += static_cast<double>(p[i]) * p[i];
    gg += static_cast<double>(g[i]) * g[i];
  }
  const double denom = pp + gg + kDiceSmooth;
  const double loss = 1.0 - 2.0 * inter / denom;

  auto pn = probs.node();
  auto gn = target.node();
  return Tensor<T>::make_result({1}, {static_cast<T>(loss)}, {pn},
                                [pn, gn, inter, denom](Node<T>& self) {
                                  auto gp = pn->ensure_grad();
                                  const double up = self.grad[0];
                                  const double a = -2.0 / denom;
                                  const double b = 4.0 * inter / (denom * denom);
                                  for (std::size_t i = 0; i < gp.size(); ++i) {
                                    gp[i] += static_cast<T>(
                                        up * (a * gn->value[i] + b * pn->value[i]));
                                  }
                                });
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& coeffs) {
  if (coeffs.size() != x.size()) throw ArgumentError("weighted_sum: coefficient count mismatch");
  double s = 0.0;
  auto v = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) s += static_cast<double>(coeffs[i]) * v[i];
  auto xn = x.node();
  return Tensor<T>::make_result({1}, {static_cast<T>(s)}, {xn}, [xn, coeffs](Node<T>& self) {
    auto gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[0] * coeffs[i];
  });
}

#define ILIO_INSTANTIATE(T)                                                                   \
  template struct ConvKernel<T>;                                                              \
  template Tensor<T> conv3d<T>(const Tensor<T>&, const ConvKernel<T>&, std::size_t,           \
                               std::size_t);                                                  \
  template Tensor<T> conv3d_transpose<T>(const Tensor<T>&, const ConvKernel<T>&, std::size_t); \
  template Tensor<T> selu<T>(const Tensor<T>&);                                               \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                            \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> concat_channels<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> residual_combine<T>(const Tensor<T>&, const Tensor<T>&,                  \
                                         const ConvKernel<T>*);                               \
  template Tensor<T> soft_dice_loss<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> weighted_sum<T>(const Tensor<T>&, const std::vector<T>&);

ILIO_INSTANTIATE(float)
ILIO_INSTANTIATE(double)

#undef ILIO_INSTANTIATE

}  // namespace ilio::ag
