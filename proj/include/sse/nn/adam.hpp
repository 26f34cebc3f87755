#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sse/core/error.hpp"
#include "sse/nn/tensor.hpp"

namespace sse::nn {

template <typename Real>
struct AdamState {
  std::vector<Tensor<Real>> m;
  std::vector<Tensor<Real>> v;
  std::uint64_t t = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Real>
AdamState<Real> make_adam(const std::vector<Tensor<Real>>& params, double learning_rate = 1e-3) {
  AdamState<Real> s;
  s.learning_rate = learning_rate;
  for (const auto& p : params) {
    s.m.emplace_back(p.shape);
    s.v.emplace_back(p.shape);
  }
  return s;
}

/// Bias-corrected Adam: p -= lr * m_hat / (sqrt(v_hat) + eps).
template <typename Real>
void adam_step(std::vector<Tensor<Real>>& params, const std::vector<Tensor<Real>>& grads, AdamState<Real>& state) {
  require(params.size() == grads.size() && params.size() == state.m.size() && params.size() == state.v.size(),
          ErrorCode::ShapeMismatch, "parameter, gradient and optimizer state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "adam gradient");
    require_same_shape(params[i], state.m[i], "adam state");
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      m[j] = static_cast<Real>(mj);
      v[j] = static_cast<Real>(vj);
      const double update = state.learning_rate * (mj / c1) / (std::sqrt(vj / c2) + state.eps);
      p[j] = static_cast<Real>(p[j] - update);
    }
  }
}

}  // namespace sse::nn
