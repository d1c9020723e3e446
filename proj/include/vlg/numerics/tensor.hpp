// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vlg::num {

using Real = double;
using Shape = std::vector<std::size_t>;

// Element storage precision. k64 is the verification mode; k32 rounds every
// op output and accumulated gradient to binary32 on write.
enum class Precision { k64, k32 };

void set_precision(Precision p);
Precision precision();
Real round_to_precision(Real x);

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::optional<std::vector<Real>> grad;
  bool requires_grad = false;
  // True when the value depends on a requires_grad leaf through a recorded
  // tape. Only such tensors take part in backward.
  bool needs_grad = false;
};

// Shared handle to a dense row-major array. Copies alias the same storage;
// use clone() for an independent copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor scalar(Real value);
  static Tensor vector(std::vector<Real> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<Real> values);
  static Tensor filled(Shape shape, Real value);

  bool valid() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<Real> data() { return impl_->data; }
  std::span<const Real> data() const { return impl_->data; }
  Real& operator[](std::size_t i) { return impl_->data[i]; }
  Real operator[](std::size_t i) const { return impl_->data[i]; }
  Real at(std::size_t row, std::size_t col) const;
  Real item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool needs_grad() const { return impl_->needs_grad; }

  bool has_grad() const { return impl_->grad.has_value(); }
  std::span<const Real> grad() const;
  Tensor grad_tensor() const;
  void zero_grad();

  // Values only: no grad, no tape history.
  Tensor clone() const;

  const TensorImpl* id() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

}  // namespace vlg::num
