// SPDX-License-Identifier: Apache-2.0
#include "vlg/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <numbers>

#include "vlg/errors.hpp"
#include "vlg/numerics/tape.hpp"

namespace vlg::num {

namespace {

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->needs_grad()) return true;
  }
  return false;
}

void finalize(Tensor& out) {
  if (precision() == Precision::k64) return;
  for (auto& v : out.data()) v = round_to_precision(v);
}

void record(const Tensor& out, BackwardFn fn) { Tape::active()->record(out.impl(), std::move(fn)); }

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void add_into(std::span<Real> dst, std::span<const Real> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// out[r×t] += a[r×s] · b[s×t]
void gemm_nn(const Real* a, const Real* b, Real* out, std::size_t r, std::size_t s, std::size_t t) {
  for (std::size_t i = 0; i < r; ++i) {
    Real* o = out + i * t;
    for (std::size_t k = 0; k < s; ++k) {
      const Real aik = a[i * s + k];
      const Real* bk = b + k * t;
      for (std::size_t j = 0; j < t; ++j) o[j] += aik * bk[j];
    }
  }
}

// out[r×t] += a[r×s] · b[t×s]ᵀ
void gemm_nt(const Real* a, const Real* b, Real* out, std::size_t r, std::size_t s, std::size_t t) {
  for (std::size_t i = 0; i < r; ++i) {
    const Real* ai = a + i * s;
    for (std::size_t j = 0; j < t; ++j) {
      const Real* bj = b + j * s;
      Real acc = 0.0;
      for (std::size_t k = 0; k < s; ++k) acc += ai[k] * bj[k];
      out[i * t + j] += acc;
    }
  }
}

// out[s×t] += a[r×s]ᵀ · b[r×t]
void gemm_tn(const Real* a, const Real* b, Real* out, std::size_t r, std::size_t s, std::size_t t) {
  for (std::size_t i = 0; i < r; ++i) {
    const Real* bi = b + i * t;
    for (std::size_t k = 0; k < s; ++k) {
      const Real aik = a[i * s + k];
      Real* o = out + k * t;
      for (std::size_t j = 0; j < t; ++j) o[j] += aik * bi[j];
    }
  }
}

Real l2_norm(const Real* x, std::size_t n) {
  Real acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return std::sqrt(acc);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t r = a.dim(0), s = a.dim(1), t = b.dim(1);
  Tensor out(Shape{r, t});
  gemm_nn(a.data().data(), b.data().data(), out.data().data(), r, s, t);
  finalize(out);
  if (tracking({&a, &b})) {
    record(out, [ai = a.impl(), bi = b.impl(), r, s, t](std::span<const Real> g, GradientMap& grads) {
      if (auto da = grads.slot(ai); !da.empty()) gemm_nt(g.data(), bi->data.data(), da.data(), r, t, s);
      if (auto db = grads.slot(bi); !db.empty()) gemm_tn(ai->data.data(), g.data(), db.data(), r, s, t);
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t r = a.dim(0), s = a.dim(1), t = b.dim(0);
  Tensor out(Shape{r, t});
  gemm_nt(a.data().data(), b.data().data(), out.data().data(), r, s, t);
  finalize(out);
  if (tracking({&a, &b})) {
    record(out, [ai = a.impl(), bi = b.impl(), r, s, t](std::span<const Real> g, GradientMap& grads) {
      // dA = G·B, dB = Gᵀ·A
      if (auto da = grads.slot(ai); !da.empty()) gemm_nn(g.data(), bi->data.data(), da.data(), r, t, s);
      if (auto db = grads.slot(bi); !db.empty()) gemm_tn(g.data(), ai->data.data(), db.data(), r, t, s);
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  if (tracking({&a})) {
    record(out, [ai = a.impl(), r, c](std::span<const Real> g, GradientMap& grads) {
      auto da = grads.slot(ai);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) da[i * c + j] += g[j * r + i];
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  finalize(out);
  if (tracking({&a, &b})) {
    record(out, [ai = a.impl(), bi = b.impl()](std::span<const Real> g, GradientMap& grads) {
      if (auto da = grads.slot(ai); !da.empty()) add_into(da, g);
      if (auto db = grads.slot(bi); !db.empty()) add_into(db, g);
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] - b[i];
  finalize(out);
  if (tracking({&a, &b})) {
    record(out, [ai = a.impl(), bi = b.impl()](std::span<const Real> g, GradientMap& grads) {
      if (auto da = grads.slot(ai); !da.empty()) add_into(da, g);
      if (auto db = grads.slot(bi); !db.empty()) {
        for (std::size_t i = 0; i < db.size(); ++i) db[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  finalize(out);
  if (tracking({&a, &b})) {
    record(out, [ai = a.impl(), bi = b.impl()](std::span<const Real> g, GradientMap& grads) {
      if (auto da = grads.slot(ai); !da.empty()) {
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bi->data[i];
      }
      if (auto db = grads.slot(bi); !db.empty()) {
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * ai->data[i];
      }
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_bias");
  require_rank(bias, 1, "add_bias");
  if (bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  const std::size_t r = x.dim(0), c = x.dim(1);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + bias[j];
  finalize(out);
  if (tracking({&x, &bias})) {
    record(out, [xi = x.impl(), bi = bias.impl(), r, c](std::span<const Real> g, GradientMap& grads) {
      if (auto dx = grads.slot(xi); !dx.empty()) add_into(dx, g);
      if (auto db = grads.slot(bi); !db.empty()) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) db[j] += g[i * c + j];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, Real factor) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * factor;
  finalize(out);
  if (tracking({&x})) {
    record(out, [xi = x.impl(), factor](std::span<const Real> g, GradientMap& grads) {
      auto dx = grads.slot(xi);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw DimensionError("scale_by: factor must be scalar, got " + shape_str(s.shape()));
  const Real f = s[0];
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] * f;
  finalize(out);
  if (tracking({&x, &s})) {
    record(out, [xi = x.impl(), si = s.impl()](std::span<const Real> g, GradientMap& grads) {
      if (auto dx = grads.slot(xi); !dx.empty()) {
        const Real f = si->data[0];
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * f;
      }
      if (auto ds = grads.slot(si); !ds.empty()) {
        Real acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xi->data[i];
        ds[0] += acc;
      }
    });
  }
  return out;
}

Tensor exp(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(x[i]);
  finalize(out);
  if (tracking({&x})) {
    record(out, [xi = x.impl(), oi = out.impl()](std::span<const Real> g, GradientMap& grads) {
      auto dx = grads.slot(xi);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * oi->data[i];
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  constexpr Real kInvSqrt2 = 0.70710678118654752440;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
  finalize(out);
  if (tracking({&x})) {
    record(out, [xi = x.impl()](std::span<const Real> g, GradientMap& grads) {
      const Real inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      auto dx = grads.slot(xi);
      for (std::size_t i = 0; i < dx.size(); ++i) {
        const Real v = xi->data[i];
        const Real cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const Real pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        dx[i] += g[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (gain.shape() != Shape{c} || bias.shape() != Shape{c}) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match " + shape_str(x.shape()));
  }
  Tensor out(x.shape());
  std::vector<Real> xhat(r * c), inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const Real* xr = x.data().data() + i * c;
    Real mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<Real>(c);
    Real var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<Real>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (xr[j] - mu) * inv_std[i];
      out[i * c + j] = xhat[i * c + j] * gain[j] + bias[j];
    }
  }
  finalize(out);
  if (tracking({&x, &gain, &bias})) {
    record(out, [xi = x.impl(), gi = gain.impl(), bi = bias.impl(), xhat = std::move(xhat),
                 inv_std = std::move(inv_std), r, c](std::span<const Real> g, GradientMap& grads) {
      if (auto dg = grads.slot(gi); !dg.empty()) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) dg[j] += g[i * c + j] * xhat[i * c + j];
      }
      if (auto db = grads.slot(bi); !db.empty()) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) db[j] += g[i * c + j];
      }
      if (auto dx = grads.slot(xi); !dx.empty()) {
        const Real n = static_cast<Real>(c);
        for (std::size_t i = 0; i < r; ++i) {
          Real mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const Real d = g[i * c + j] * gi->data[j];
            mean_d += d;
            mean_dx += d * xhat[i * c + j];
          }
          mean_d /= n;
          mean_dx /= n;
          for (std::size_t j = 0; j < c; ++j) {
            const Real d = g[i * c + j] * gi->data[j];
            dx[i * c + j] += inv_std[i] * (d - mean_d - xhat[i * c + j] * mean_dx);
          }
        }
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (x.rank() == 0 || axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t l = 0; l < len; ++l) mx = std::max(mx, x[base + l * inner]);
      Real z = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const Real e = std::exp(x[base + l * inner] - mx);
        out[base + l * inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= z;
    }
  }
  finalize(out);
  if (tracking({&x})) {
    record(out, [xi = x.impl(), oi = out.impl(), outer, inner, len](std::span<const Real> g, GradientMap& grads) {
      auto dx = grads.slot(xi);
      const auto& y = oi->data;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          Real dot = 0.0;
          for (std::size_t l = 0; l < len; ++l) dot += g[base + l * inner] * y[base + l * inner];
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t idx = base + l * inner;
            dx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets, const std::vector<bool>& mask) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t n = logits.dim(0), v = logits.dim(1);
  if (targets.size() != n || mask.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets and " +
                         std::to_string(mask.size()) + " mask entries for logits " + shape_str(logits.shape()));
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw ContractError("cross_entropy: target " + std::to_string(targets[i]) + " at row " + std::to_string(i) +
                          " outside [0, " + std::to_string(v) + ")");
    }
    ++count;
  }
  if (count == 0) throw DegenerateInputError("cross_entropy: every position is masked");

  std::vector<Real> probs(n * v, 0.0);
  Real total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    const Real* row = logits.data().data() + i * v;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, row[j]);
    Real z = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      const Real e = std::exp(row[j] - mx);
      probs[i * v + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= z;
    total += mx + std::log(z) - row[targets[i]];
  }
  Tensor out = Tensor::scalar(total / static_cast<Real>(count));
  finalize(out);
  if (tracking({&logits})) {
    std::vector<std::int64_t> tgt(targets.begin(), targets.end());
    record(out, [li = logits.impl(), probs = std::move(probs), tgt = std::move(tgt), mask, n, v,
                 count](std::span<const Real> g, GradientMap& grads) {
      auto dl = grads.slot(li);
      const Real w = g[0] / static_cast<Real>(count);
      for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        for (std::size_t j = 0; j < v; ++j) dl[i * v + j] += w * probs[i * v + j];
        dl[i * v + static_cast<std::size_t>(tgt[i])] -= w;
      }
    });
  }
  return out;
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  require_rank(q, 2, "causal_attention");
  require_same_shape(q, k, "causal_attention");
  require_same_shape(q, v, "causal_attention");
  const std::size_t t_len = q.dim(0), d = q.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("causal_attention: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const Real sc = 1.0 / std::sqrt(static_cast<Real>(dh));
  // probs[h][i][j] for j <= i, stored densely as T×T per head.
  std::vector<Real> probs(heads * t_len * t_len, 0.0);
  Tensor out(q.shape());
  const Real* qd = q.data().data();
  const Real* kd = k.data().data();
  const Real* vd = v.data().data();
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < t_len; ++i) {
      Real* p = probs.data() + (h * t_len + i) * t_len;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j <= i; ++j) {
        Real s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qd[i * d + off + c] * kd[j * d + off + c];
        p[j] = s * sc;
        mx = std::max(mx, p[j]);
      }
      Real z = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      for (std::size_t j = 0; j <= i; ++j) p[j] /= z;
      for (std::size_t j = 0; j <= i; ++j) {
        const Real pj = p[j];
        for (std::size_t c = 0; c < dh; ++c) out[i * d + off + c] += pj * vd[j * d + off + c];
      }
    }
  }
  finalize(out);
  if (tracking({&q, &k, &v})) {
    record(out, [qi = q.impl(), ki = k.impl(), vi = v.impl(), probs = std::move(probs), t_len, d, dh, heads,
                 sc](std::span<const Real> g, GradientMap& grads) {
      auto dq = grads.slot(qi);
      auto dk = grads.slot(ki);
      auto dv = grads.slot(vi);
      const auto& qd = qi->data;
      const auto& kd = ki->data;
      const auto& vd = vi->data;
      std::vector<Real> dp(t_len);
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * dh;
        for (std::size_t i = 0; i < t_len; ++i) {
          const Real* p = probs.data() + (h * t_len + i) * t_len;
          const Real* gi = g.data() + i * d + off;
          Real dot = 0.0;
          for (std::size_t j = 0; j <= i; ++j) {
            Real s = 0.0;
            for (std::size_t c = 0; c < dh; ++c) s += gi[c] * vd[j * d + off + c];
            dp[j] = s;
            dot += p[j] * s;
          }
          for (std::size_t j = 0; j <= i; ++j) {
            if (!dv.empty()) {
              for (std::size_t c = 0; c < dh; ++c) dv[j * d + off + c] += p[j] * gi[c];
            }
            const Real ds = p[j] * (dp[j] - dot) * sc;
            if (!dq.empty()) {
              for (std::size_t c = 0; c < dh; ++c) dq[i * d + off + c] += ds * kd[j * d + off + c];
            }
            if (!dk.empty()) {
              for (std::size_t c = 0; c < dh; ++c) dk[j * d + off + c] += ds * qd[i * d + off + c];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids) {
  require_rank(table, 2, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: empty id list");
  const std::size_t rows = table.dim(0), c = table.dim(1);
  Tensor out(Shape{ids.size(), c});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw ContractError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                          std::to_string(rows) + " rows");
    }
    std::copy_n(table.data().data() + ids[i] * c, c, out.data().data() + i * c);
  }
  if (tracking({&table})) {
    std::vector<std::int64_t> idx(ids.begin(), ids.end());
    record(out, [ti = table.impl(), idx = std::move(idx), c](std::span<const Real> g, GradientMap& grads) {
      auto dt = grads.slot(ti);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) dt[idx[i] * c + j] += g[i * c + j];
    });
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t c = parts[0].rank() == 2 ? parts[0].dim(1) : 0;
  std::size_t rows = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != c) {
      throw DimensionError("concat_rows: part of shape " + shape_str(p.shape()) + " does not have " +
                           std::to_string(c) + " columns");
    }
    rows += p.dim(0);
    track = track || tracking({&p});
  }
  Tensor out(Shape{rows, c});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.numel();
  }
  if (track) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    record(out, [impls = std::move(impls)](std::span<const Real> g, GradientMap& grads) {
      std::size_t offset = 0;
      for (const auto& pi : impls) {
        if (auto dp = grads.slot(pi); !dp.empty()) add_into(dp, g.subspan(offset, dp.size()));
        offset += pi->data.size();
      }
    });
  }
  return out;
}

Tensor stack(std::span<const Tensor> rows) {
  std::vector<Tensor> parts;
  parts.reserve(rows.size());
  for (const auto& r : rows) {
    require_rank(r, 1, "stack");
    parts.push_back(reshape(r, Shape{1, r.dim(0)}));
  }
  return concat_rows(parts);
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank(x, 2, "slice_rows");
  if (count == 0 || begin + count > x.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + shape_str(x.shape()));
  }
  const std::size_t c = x.dim(1);
  Tensor out(Shape{count, c});
  std::copy_n(x.data().data() + begin * c, count * c, out.data().data());
  if (tracking({&x})) {
    record(out, [xi = x.impl(), begin, c](std::span<const Real> g, GradientMap& grads) {
      auto dx = grads.slot(xi);
      add_into(dx.subspan(begin * c, g.size()), g);
    });
  }
  return out;
}

Tensor row(const Tensor& x, std::size_t index) {
  require_rank(x, 2, "row");
  return reshape(slice_rows(x, index, 1), Shape{x.dim(1)});
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<Real>(x.data().begin(), x.data().end()));
  if (tracking({&x})) {
    record(out, [xi = x.impl()](std::span<const Real> g, GradientMap& grads) { add_into(grads.slot(xi), g); });
  }
  return out;
}

Tensor l2_normalize(const Tensor& x) {
  const Real norm = l2_norm(x.data().data(), x.numel());
  if (!std::isfinite(norm)) throw NumericError("l2_normalize: norm is not finite");
  if (!(norm > kNormTolerance)) {
    throw DegenerateInputError("l2_normalize: norm " + std::to_string(norm) + " is below tolerance");
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[i] / norm;
  finalize(out);
  if (tracking({&x})) {
    record(out, [xi = x.impl(), oi = out.impl(), norm](std::span<const Real> g, GradientMap& grads) {
      auto dx = grads.slot(xi);
      const auto& y = oi->data;
      Real dot = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * g[i];
      for (std::size_t i = 0; i < y.size(); ++i) dx[i] += (g[i] - y[i] * dot) / norm;
    });
  }
  return out;
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_rank(x, 2, "l2_normalize_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<Real> norms(r);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    norms[i] = l2_norm(x.data().data() + i * c, c);
    if (!std::isfinite(norms[i])) throw NumericError("l2_normalize_rows: norm of row " + std::to_string(i) + " is not finite");
    if (!(norms[i] > kNormTolerance)) {
      throw DegenerateInputError("l2_normalize_rows: row " + std::to_string(i) + " has near-zero norm");
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] / norms[i];
  }
  finalize(out);
  if (tracking({&x})) {
    record(out, [xi = x.impl(), oi = out.impl(), norms = std::move(norms), r, c](std::span<const Real> g,
                                                                                 GradientMap& grads) {
      auto dx = grads.slot(xi);
      const auto& y = oi->data;
      for (std::size_t i = 0; i < r; ++i) {
        Real dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += y[i * c + j] * g[i * c + j];
        for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += (g[i * c + j] - y[i * c + j] * dot) / norms[i];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Real acc = 0.0;
  for (auto v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  finalize(out);
  if (tracking({&x})) {
    record(out, [xi = x.impl()](std::span<const Real> g, GradientMap& grads) {
      for (auto& d : grads.slot(xi)) d += g[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<Real>(x.numel())); }

}  // namespace vlg::num
