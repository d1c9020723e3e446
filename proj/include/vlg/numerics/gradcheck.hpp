// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vlg/numerics/tensor.hpp"

namespace vlg::num {

struct GradCheckOptions {
  Real step = 1e-5;
  // Denominator floor for the relative error, so entries whose true gradient
  // is ~0 are judged on absolute error instead.
  Real floor = 1e-6;
};

struct GradCheckReport {
  Real max_rel_error = 0.0;
  Real max_abs_error = 0.0;
  std::size_t entries = 0;
  std::string worst;  // "name[index]" of the entry with max_rel_error

  bool passed(Real tolerance) const { return max_rel_error < tolerance; }
};

// Compares the tape gradient of `loss_fn` with central finite differences for
// every entry of every tensor in `params` (which must require grad). The
// params' grad slots are cleared before and after.
GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn, std::span<const NamedTensor> params,
                                const GradCheckOptions& options = {});

struct OpGradientCheck {
  std::string op;
  GradCheckReport report;
};

// Every differentiable op on small random shapes drawn from `seed`, each
// reduced to a scalar through random weights.
std::vector<OpGradientCheck> op_gradient_suite(std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace vlg::num
