// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "vlg/numerics/tensor.hpp"

namespace vlg::num {

// Gradient buffers for one backward sweep, keyed by tensor identity.
class GradientMap {
 public:
  // Zero-initialised accumulator for `t`, or an empty span when `t` does not
  // take part in differentiation.
  std::span<Real> slot(const std::shared_ptr<TensorImpl>& t);
  std::span<const Real> find(const TensorImpl* t) const;
  void erase(const TensorImpl* t);

  template <typename F>
  void for_each(F&& f) const {
    for (const auto& [key, entry] : buffers_) f(entry.first, entry.second);
  }

 private:
  std::unordered_map<const TensorImpl*, std::pair<std::shared_ptr<TensorImpl>, std::vector<Real>>>
      buffers_;
};

using BackwardFn = std::function<void(std::span<const Real> grad_out, GradientMap& grads)>;

// Ordered record of differentiable operations. Entries are appended as ops
// execute, so every entry's inputs were produced by earlier entries or are
// leaves.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::shared_ptr<TensorImpl> output, BackwardFn backward);
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // The tape ops record onto on this thread, or nullptr (inference).
  static Tape* active();

 private:
  friend void backward(Tape& tape, const Tensor& loss);
  struct Entry {
    std::shared_ptr<TensorImpl> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
};

// Makes `tape` active for the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Accumulates d(loss)/d(leaf) into the grad slot of every requires_grad leaf
// reachable from `loss`. Intermediate tensors carry gradient during the sweep
// but never store it.
void backward(Tape& tape, const Tensor& loss);

}  // namespace vlg::num
