#include "bitturbo/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace bitturbo {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<Impl>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor: shape " + shape_string(shape) + " does not hold " +
                                std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw std::logic_error("tensor: undefined");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw std::out_of_range("tensor: axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<double> Tensor::values() { return impl_->data; }
std::span<const double> Tensor::values() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("tensor: item() on tensor with " + std::to_string(numel()) + " elements");
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool on) {
  if (!impl_) throw std::logic_error("tensor: undefined");
  impl_->requires_grad = on;
}

std::span<double> Tensor::grad() { return impl_->grad; }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::ensure_grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::clear_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::clone() const {
  if (!impl_) return {};
  Tensor out(impl_->shape, impl_->data);
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw std::runtime_error(std::string(op) + ": non-finite output");
  }
}

void Tape::record(BackwardFn fn) { ops_.push_back(std::move(fn)); }

void Tape::backward(Tensor& loss) {
  if (ops_.empty()) throw std::logic_error("tape: backward without a recorded forward pass");
  if (consumed_) throw std::logic_error("tape: backward called twice without reset");
  if (loss.numel() != 1) throw std::invalid_argument("tape: loss must be a scalar");
  consumed_ = true;
  loss.ensure_grad()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

void Tape::reset() {
  ops_.clear();
  consumed_ = false;
}

}  // namespace bitturbo
