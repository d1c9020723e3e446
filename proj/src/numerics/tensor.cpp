// SPDX-License-Identifier: Apache-2.0
#include "vlg/numerics/tensor.hpp"

#include <sstream>

#include "vlg/errors.hpp"

namespace vlg::num {

namespace {
thread_local Precision g_precision = Precision::k64;
}  // namespace

void set_precision(Precision p) { g_precision = p; }
Precision precision() { return g_precision; }

Real round_to_precision(Real x) {
  if (g_precision == Precision::k32) return static_cast<Real>(static_cast<float>(x));
  return x;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape) : impl_(std::make_shared<TensorImpl>()) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  impl_->data.assign(shape_numel(shape), 0.0);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<Real> values) : Tensor(std::move(shape)) {
  if (values.size() != impl_->data.size()) {
    throw DimensionError("tensor of shape " + shape_str(impl_->shape) + " given " +
                         std::to_string(values.size()) + " values");
  }
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(Real value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::vector(std::vector<Real> values) {
  const auto n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<Real> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::filled(Shape shape, Real value) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = value;
  return t;
}

Real Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) on tensor of shape " + shape_str(shape()));
  return impl_->data.at(row * impl_->shape[1] + col);
}

Real Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  impl_->needs_grad = on;
  if (!on) impl_->grad.reset();
}

std::span<const Real> Tensor::grad() const {
  if (!impl_->grad) return {};
  return *impl_->grad;
}

Tensor Tensor::grad_tensor() const {
  if (!impl_->grad) return Tensor(impl_->shape);
  return Tensor(impl_->shape, *impl_->grad);
}

void Tensor::zero_grad() { impl_->grad.reset(); }

Tensor Tensor::clone() const {
  Tensor out;
  out.impl_ = std::make_shared<TensorImpl>();
  out.impl_->shape = impl_->shape;
  out.impl_->data = impl_->data;
  return out;
}

}  // namespace vlg::num
