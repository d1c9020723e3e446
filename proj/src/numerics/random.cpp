// SPDX-License-Identifier: Apache-2.0
#include "vlg/numerics/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace vlg::num {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Tensor uniform_tensor(Shape shape, Rng& rng, Real lo, Real hi) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

Tensor normal_tensor(Shape shape, Rng& rng, Real stddev) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = stddev * rng.normal();
  return t;
}

}  // namespace vlg::num
