// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vlg/numerics/tensor.hpp"

// Differentiable operations. Each op records a backward rule on the active
// tape when any input needs gradient. Reductions run in ascending index order.
namespace vlg::num {

// Norms at or below this are treated as zero by the normalising ops.
inline constexpr Real kNormTolerance = 1e-12;

Tensor matmul(const Tensor& a, const Tensor& b);
// a · bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[r×c] + bias[c] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, Real factor);
// x * s for a scalar tensor s.
Tensor scale_by(const Tensor& x, const Tensor& s);
Tensor exp(const Tensor& x);
Tensor gelu(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps = 1e-5);
Tensor softmax(const Tensor& x, std::size_t axis);

// Mean over unmasked rows of -log softmax(logits[row])[targets[row]].
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets,
                     const std::vector<bool>& mask);

// Multi-head scaled dot-product attention with a causal mask. q, k, v are
// T×d with d divisible by heads.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids);
Tensor concat_rows(std::span<const Tensor> parts);
// Stacks rank-1 tensors of equal length into a matrix.
Tensor stack(std::span<const Tensor> rows);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor row(const Tensor& x, std::size_t index);
Tensor reshape(const Tensor& x, Shape shape);

Tensor l2_normalize(const Tensor& x);
Tensor l2_normalize_rows(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace vlg::num
