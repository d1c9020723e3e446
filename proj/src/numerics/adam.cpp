// SPDX-License-Identifier: Apache-2.0
#include "vlg/numerics/adam.hpp"

#include <algorithm>
#include <cmath>

#include "vlg/errors.hpp"

namespace vlg::num {

Real scheduled_lr(const AdamConfig& config, std::uint64_t t) {
  if (config.warmup_steps == 0) return config.lr;
  const Real ramp = static_cast<Real>(t + 1) / static_cast<Real>(config.warmup_steps);
  return config.lr * std::min<Real>(1.0, ramp);
}

AdamState make_adam_state(const AdamConfig& config, std::span<const Tensor> params) {
  AdamState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.numel(), 0.0);
    state.second_moment.emplace_back(p.numel(), 0.0);
  }
  return state;
}

void adam_step(AdamState& state, std::span<Tensor> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params, " +
                         std::to_string(grads.size()) + " grads, " + std::to_string(state.first_moment.size()) +
                         " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || state.first_moment[i].size() != params[i].numel()) {
      throw DimensionError("adam_step: param " + std::to_string(i) + " has shape " +
                           shape_str(params[i].shape()) + " but grad has shape " + shape_str(grads[i].shape()));
    }
  }
  const auto& c = state.config;
  const Real lr = scheduled_lr(c, state.step);
  const Real t = static_cast<Real>(state.step + 1);
  const Real bc1 = 1.0 - std::pow(c.beta1, t);
  const Real bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = round_to_precision(c.beta1 * m[j] + (1.0 - c.beta1) * g[j]);
      v[j] = round_to_precision(c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j]);
      const Real m_hat = m[j] / bc1;
      const Real v_hat = v[j] / bc2;
      p[j] = round_to_precision(p[j] - lr * m_hat / (std::sqrt(v_hat) + c.eps));
    }
  }
  ++state.step;
}

void adam_step(AdamState& state, std::span<Tensor> params) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad_tensor());
  adam_step(state, params, grads);
}

}  // namespace vlg::num
