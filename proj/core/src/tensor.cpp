#include "epireader/tensor.hpp"

#include <cmath>

namespace epi {

namespace {
thread_local Tape* g_active_tape = nullptr;

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}
}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  t.node_ = std::make_shared<detail::TensorData>();
  t.node_->shape = std::move(shape);
  t.node_->values.assign(shape_product(t.node_->shape), 0.0);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<Scalar> values,
                    bool requires_grad) {
  if (shape_product(shape) != values.size()) {
    throw DimensionError("tensor init: shape " + shape_string(shape) +
                         " does not match " + std::to_string(values.size()) +
                         " values");
  }
  Tensor t;
  t.node_ = std::make_shared<detail::TensorData>();
  t.node_->shape = std::move(shape);
  t.node_->values = std::move(values);
  t.node_->requires_grad = requires_grad;
  check_finite("tensor init", t);
  return t;
}

Tensor Tensor::scalar(Scalar value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Scalar Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->values[0];
}

std::vector<Scalar>& Tensor::grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.node_ = std::make_shared<detail::TensorData>();
  t.node_->shape = node_->shape;
  t.node_->values = node_->values;
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

Tensor Tensor::detach() const {
  Tensor t;
  t.node_ = std::make_shared<detail::TensorData>();
  t.node_->shape = node_->shape;
  t.node_->values = node_->values;
  t.node_->requires_grad = false;
  return t;
}

void Tape::backward(Tensor loss) {
  if (loss.size() != 1) {
    throw DimensionError("backward requires a scalar loss, got shape " +
                         shape_string(loss.shape()));
  }
  if (loss.requires_grad()) loss.accumulate(0, 1.0);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

void check_finite(const char* op, const Tensor& t) {
  for (Scalar v : t.values()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + " produced a non-finite value");
    }
  }
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace epi
