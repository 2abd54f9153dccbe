#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bitturbo {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float64 array with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage, which is what the
/// tape needs to route gradients back to parameters. Use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<double> values();
  std::span<const double> values() const;
  double& operator[](std::size_t i) { return impl_->data[i]; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool on);

  bool has_grad() const noexcept { return impl_ && !impl_->grad.empty(); }
  std::span<double> grad();
  std::span<const double> grad() const;
  /// Grad buffer, zero-allocated on first use. Const because the buffer belongs
  /// to the shared storage, not to this handle.
  std::span<double> ensure_grad() const;
  void clear_grad();

  Tensor clone() const;
  bool aliases(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Throws std::runtime_error naming `op` if any value is NaN or infinite.
void check_finite(const Tensor& t, const char* op);

/// Ordered record of differentiable ops. backward() replays the recorded
/// rules in reverse, each exactly once.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(BackwardFn fn);
  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws std::logic_error when the
  /// tape is empty or was already consumed without reset().
  void backward(Tensor& loss);
  void reset();

  std::size_t size() const noexcept { return ops_.size(); }
  bool consumed() const noexcept { return consumed_; }

 private:
  std::vector<BackwardFn> ops_;
  bool consumed_ = false;
};

}  // namespace bitturbo
