// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlg/numerics/gradcheck.hpp"

namespace vlg::train {

struct LossGradientCheck {
  std::string loss;  // "L_c", "L_t2i" or "L_i2t"
  num::GradCheckReport report;
};

struct GradientSuiteReport {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  std::vector<LossGradientCheck> checks;

  double max_rel_error() const;
  bool passed() const;
  nlohmann::ordered_json to_json() const;
};

// Finite-difference check of the three training objectives against all five
// adapter tensors on a small seeded model and a concatenated batch. Always
// runs in 64-bit.
GradientSuiteReport end_to_end_gradient_check(std::uint64_t seed, double tolerance = 1e-4);

}  // namespace vlg::train
