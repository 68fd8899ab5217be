#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ditcod/tensor.hpp"

namespace ditcod {

class Tape;

// Receives d(loss)/d(output) and accumulates into the inputs through the tape.
using BackwardFn = std::function<void(std::span<const double> grad_out, Tape& tape)>;

/// Ordered record of differentiable op applications.
///
/// Ops record themselves onto the tape that is active on the calling thread
/// (see TapeScope) whenever at least one input requires a gradient. Recording
/// order is a topological order, so backward() is a single reverse sweep that
/// visits every entry once. Gradient buffers live here, keyed by tensor.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn);

  /// Seeds d(root)/d(root) = 1 (root must hold one element) and propagates.
  void backward(const Tensor& root);

  bool has_grad(const Tensor& t) const;
  /// Gradient w.r.t. t, or zeros of t's shape if nothing reached it.
  Tensor grad(const Tensor& t) const;

  /// Mutable gradient buffer for t, created zero-filled on first use. Returns an
  /// empty span when t does not require a gradient.
  std::span<double> grad_buffer(const Tensor& t);

  std::size_t size() const { return entries_.size(); }
  void clear();

  static Tape* active();

 private:
  friend class TapeScope;
  friend class NoGradScope;

  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  std::vector<Entry> entries_;
  // Keys stay unique while entries_ holds the tensors they point at.
  std::unordered_map<const TensorImpl*, std::vector<double>> grads_;
};

/// Makes a tape the recording target for the current thread until destroyed.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Disables recording on the current thread (inference, finite differences).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace ditcod
