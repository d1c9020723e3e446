// SPDX-License-Identifier: Apache-2.0
#include "vlg/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "vlg/errors.hpp"
#include "vlg/numerics/ops.hpp"
#include "vlg/numerics/random.hpp"
#include "vlg/numerics/tape.hpp"

namespace vlg::num {

GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn, std::span<const NamedTensor> params,
                                const GradCheckOptions& options) {
  for (const auto& p : params) {
    if (!p.tensor.requires_grad()) throw ContractError("check_gradients: '" + p.name + "' does not require grad");
    Tensor handle = p.tensor;
    handle.zero_grad();
  }

  {
    Tape tape;
    TapeScope scope(tape);
    backward(tape, loss_fn());
  }

  std::vector<std::vector<Real>> analytic;
  for (const auto& p : params) {
    auto g = p.tensor.grad();
    analytic.emplace_back(p.tensor.numel(), 0.0);
    std::copy(g.begin(), g.end(), analytic.back().begin());
  }

  GradCheckReport report;
  NoGradScope no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi].tensor;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const Real saved = t[i];
      t[i] = saved + options.step;
      const Real up = loss_fn().item();
      t[i] = saved - options.step;
      const Real down = loss_fn().item();
      t[i] = saved;
      const Real numeric = (up - down) / (2.0 * options.step);
      const Real a = analytic[pi][i];
      const Real abs_err = std::abs(a - numeric);
      Real rel = abs_err / std::max({std::abs(a), std::abs(numeric), options.floor});
      if (!std::isfinite(rel)) rel = std::numeric_limits<Real>::infinity();
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        report.worst = params[pi].name + "[" + std::to_string(i) + "]";
      }
      ++report.entries;
    }
    t.zero_grad();
  }
  return report;
}

namespace {

Tensor param(Shape shape, Rng& rng) {
  Tensor t = uniform_tensor(std::move(shape), rng, -1.0, 1.0);
  t.set_requires_grad(true);
  return t;
}

std::size_t small_dim(Rng& rng) { return 1 + static_cast<std::size_t>(rng.below(4)); }

}  // namespace

std::vector<OpGradientCheck> op_gradient_suite(std::uint64_t seed, const GradCheckOptions& options) {
  Rng rng(seed * 7919 + 1);
  const auto r = small_dim(rng), c = small_dim(rng), s = small_dim(rng);
  Tensor a = param({r, c}, rng);
  Tensor b = param({r, c}, rng);
  Tensor m = param({c, s}, rng);
  Tensor mt = param({s, c}, rng);
  Tensor bias = param({c}, rng);
  Tensor sc = param({1}, rng);
  Rng proj(seed);

  std::vector<OpGradientCheck> out;
  auto check = [&](const std::string& name, const std::function<Tensor()>& op, std::vector<NamedTensor> ps) {
    Rng local(seed + 1);
    Tensor probe;
    {
      NoGradScope ng;
      probe = op();
    }
    const Tensor weights = uniform_tensor(probe.shape(), local, -1, 1);
    out.push_back({name, check_gradients([&] { return sum(mul(op(), weights)); }, ps, options)});
  };

  check("matmul", [&] { return matmul(a, m); }, {{"a", a}, {"m", m}});
  check("matmul_nt", [&] { return matmul_nt(a, mt); }, {{"a", a}, {"mt", mt}});
  check("transpose", [&] { return transpose(a); }, {{"a", a}});
  check("add", [&] { return add(a, b); }, {{"a", a}, {"b", b}});
  check("sub", [&] { return sub(a, b); }, {{"a", a}, {"b", b}});
  check("mul", [&] { return mul(a, b); }, {{"a", a}, {"b", b}});
  check("add_bias", [&] { return add_bias(a, bias); }, {{"a", a}, {"bias", bias}});
  check("scale", [&] { return scale(a, -1.7); }, {{"a", a}});
  check("scale_by", [&] { return scale_by(a, sc); }, {{"a", a}, {"sc", sc}});
  check("exp", [&] { return exp(a); }, {{"a", a}});
  check("gelu", [&] { return gelu(a); }, {{"a", a}});
  check("softmax0", [&] { return softmax(a, 0); }, {{"a", a}});
  check("softmax1", [&] { return softmax(a, 1); }, {{"a", a}});
  check("row", [&] { return row(a, r - 1); }, {{"a", a}});
  check("slice_rows", [&] { return slice_rows(a, 0, r); }, {{"a", a}});
  check("reshape", [&] { return reshape(a, Shape{r * c}); }, {{"a", a}});
  check("sum", [&] { return sum(a); }, {{"a", a}});
  check("mean", [&] { return mean(a); }, {{"a", a}});
  check("concat_rows", [&] {
    const Tensor parts[] = {a, b};
    return concat_rows(parts);
  }, {{"a", a}, {"b", b}});
  check("stack", [&] {
    const Tensor rows[] = {bias, mul(bias, bias)};
    return stack(rows);
  }, {{"bias", bias}});
  check("l2_normalize", [&] { return l2_normalize(bias); }, {{"bias", bias}});
  check("l2_normalize_rows", [&] { return l2_normalize_rows(a); }, {{"a", a}});

  if (c >= 2) {
    Tensor gain = param({c}, rng);
    check("layer_norm", [&] { return layer_norm(a, gain, bias); }, {{"a", a}, {"gain", gain}, {"bias", bias}});
  }

  std::vector<std::int64_t> ids;
  for (std::size_t i = 0; i < r + 2; ++i) ids.push_back(static_cast<std::int64_t>(proj.below(r)));
  check("gather_rows", [&] { return gather_rows(a, ids); }, {{"a", a}});

  std::vector<std::int64_t> targets;
  std::vector<bool> mask;
  for (std::size_t i = 0; i < r; ++i) {
    targets.push_back(static_cast<std::int64_t>(proj.below(c)));
    mask.push_back(i == 0 || proj.below(3) != 0);
  }
  check("cross_entropy", [&] { return cross_entropy(a, targets, mask); }, {{"a", a}});

  const std::size_t heads = 1 + seed % 2;
  const std::size_t t_len = 1 + rng.below(4);
  Tensor q = param({t_len, 2 * heads}, rng), k = param({t_len, 2 * heads}, rng), v = param({t_len, 2 * heads}, rng);
  check("causal_attention", [&] { return causal_attention(q, k, v, heads); }, {{"q", q}, {"k", k}, {"v", v}});
  return out;
}

}  // namespace vlg::num
