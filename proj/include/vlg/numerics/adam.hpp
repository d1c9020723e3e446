// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vlg/numerics/tensor.hpp"

namespace vlg::num {

struct AdamConfig {
  Real lr = 3e-4;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  std::uint64_t warmup_steps = 100;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<Real>> first_moment;
  std::vector<std::vector<Real>> second_moment;
  // Number of updates applied so far.
  std::uint64_t step = 0;
};

// lr·min(1, (t+1)/warmup) for the update with zero-based index t.
Real scheduled_lr(const AdamConfig& config, std::uint64_t t);

AdamState make_adam_state(const AdamConfig& config, std::span<const Tensor> params);

// One bias-corrected Adam update of `params` using `grads` (same shapes).
void adam_step(AdamState& state, std::span<Tensor> params, std::span<const Tensor> grads);
// Same, reading each parameter's accumulated grad (absent grad counts as zero).
void adam_step(AdamState& state, std::span<Tensor> params);

}  // namespace vlg::num
