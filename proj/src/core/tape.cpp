#include "ditcod/tape.hpp"

#include <algorithm>

#include "ditcod/errors.hpp"

namespace ditcod {

namespace {
thread_local Tape* g_active = nullptr;
}

Tape* Tape::active() { return g_active; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

NoGradScope::NoGradScope() : previous_(g_active) { g_active = nullptr; }
NoGradScope::~NoGradScope() { g_active = previous_; }

void Tape::record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn) {
  entries_.push_back(Entry{std::move(inputs), output, std::move(fn)});
}

std::span<double> Tape::grad_buffer(const Tensor& t) {
  if (!t.requires_grad()) return {};
  auto [it, inserted] = grads_.try_emplace(t.id());
  if (inserted) it->second.assign(t.numel(), 0.0);
  return it->second;
}

bool Tape::has_grad(const Tensor& t) const { return grads_.count(t.id()) != 0; }

Tensor Tape::grad(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), it->second);
}

void Tape::backward(const Tensor& root) {
  if (root.numel() != 1) {
    throw ShapeError("backward() needs a one-element root, got " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;
  auto seed = grad_buffer(root);
  seed[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto g = grads_.find(it->output.id());
    if (g == grads_.end()) continue;
    // Node-based map: inserts made by the rule leave this reference valid.
    it->backward(g->second, *this);
  }
}

void Tape::clear() {
  grads_.clear();
  entries_.clear();
}

}  // namespace ditcod
