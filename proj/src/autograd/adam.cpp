#include "ilioseg/autograd/adam.hpp"

#include <cmath>
#include <string>

namespace ilio::ag {

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<double> m,
                 std::span<double> v, std::uint64_t t, const AdamConfig& c) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw ArgumentError("adam_update: buffer sizes differ");
  }
  if (t == 0) throw ArgumentError("adam_update: step counter starts at 1");
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] = static_cast<T>(static_cast<double>(param[i]) - c.lr * mhat / (std::sqrt(vhat) + c.epsilon));
  }
}

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState& state) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ArgumentError("adam_step: parameter list changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.m[k].size() != params[k].size()) throw ArgumentError("adam_step: parameter shape changed");
    if (!params[k].has_grad()) continue;
    for (T g : params[k].grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(k));
      }
    }
  }
  ++state.step;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (p.has_grad()) {
      adam_update<T>(p.mutable_values(), p.grad(), state.m[k], state.v[k], state.step, state.config);
    } else {
      std::vector<T> zero(p.size(), T(0));
      adam_update<T>(p.mutable_values(), std::span<const T>(zero), state.m[k], state.v[k],
                     state.step, state.config);
    }
  }
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<double>,
                                 std::span<double>, std::uint64_t, const AdamConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                  std::span<double>, std::uint64_t, const AdamConfig&);
template void adam_step<float>(std::span<Tensor<float>>, AdamState&);
template void adam_step<double>(std::span<Tensor<double>>, AdamState&);

}  // namespace ilio::ag
