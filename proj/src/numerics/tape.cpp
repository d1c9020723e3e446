// SPDX-License-Identifier: Apache-2.0
#include "vlg/numerics/tape.hpp"

#include "vlg/errors.hpp"

namespace vlg::num {

namespace {
thread_local Tape* g_active = nullptr;
}  // namespace

std::span<Real> GradientMap::slot(const std::shared_ptr<TensorImpl>& t) {
  if (!t->needs_grad) return {};
  auto it = buffers_.find(t.get());
  if (it == buffers_.end()) {
    it = buffers_.emplace(t.get(), std::make_pair(t, std::vector<Real>(t->data.size(), 0.0))).first;
  }
  return it->second.second;
}

std::span<const Real> GradientMap::find(const TensorImpl* t) const {
  auto it = buffers_.find(t);
  if (it == buffers_.end()) return {};
  return it->second.second;
}

void GradientMap::erase(const TensorImpl* t) { buffers_.erase(t); }

void Tape::record(std::shared_ptr<TensorImpl> output, BackwardFn backward) {
  output->needs_grad = true;
  entries_.push_back(Entry{std::move(output), std::move(backward)});
}

Tape* Tape::active() { return g_active; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

NoGradScope::NoGradScope() : previous_(g_active) { g_active = nullptr; }
NoGradScope::~NoGradScope() { g_active = previous_; }

void backward(Tape& tape, const Tensor& loss) {
  if (!loss.valid() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        (loss.valid() ? shape_str(loss.shape()) : std::string("(null)")));
  }
  if (!loss.needs_grad()) return;

  GradientMap grads;
  grads.slot(loss.impl())[0] = 1.0;

  for (auto it = tape.entries_.rbegin(); it != tape.entries_.rend(); ++it) {
    const TensorImpl* out = it->output.get();
    auto g = grads.find(out);
    if (g.empty()) continue;
    // Copy: the closure may create new slots and rehash the map.
    std::vector<Real> grad_out(g.begin(), g.end());
    if (!out->requires_grad) grads.erase(out);
    it->backward(grad_out, grads);
  }

  grads.for_each([](const std::shared_ptr<TensorImpl>& t, const std::vector<Real>& g) {
    if (!t->requires_grad) return;
    if (!t->grad) t->grad.emplace(t->data.size(), 0.0);
    auto& dst = *t->grad;
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] = round_to_precision(dst[i] + g[i]);
  });
}

}  // namespace vlg::num
