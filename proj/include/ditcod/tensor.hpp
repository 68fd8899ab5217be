#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ditcod {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
};

/// Dense row-major f64 array.
///
/// Tensor is a shared handle: copies alias the same storage, which is what lets
/// the tape refer back to parameters and intermediates. Use clone() for an
/// independent copy. Gradients are not stored on the tensor itself but on the
/// Tape that recorded the computation (see tape.hpp), so several tapes can
/// differentiate through the same read-only parameters at once.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }
  static Tensor from(Shape shape, std::initializer_list<double> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }
  /// True for a default-constructed tensor (used for optional operands).
  bool empty() const { return impl_->data.empty(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  const double* ptr() const { return impl_->data.data(); }
  double* mutable_ptr() { return impl_->data.data(); }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double& operator[](std::size_t i) { return impl_->data[i]; }

  /// Single value of a one-element tensor.
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  Tensor clone() const;
  /// Same data, new shape; the result is a fresh leaf (no tape link).
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape() == other.shape(); }

  const TensorImpl* id() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

}  // namespace ditcod
