#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "epireader/errors.hpp"

namespace epi {

// All in-memory math runs on 64-bit floats; checkpoints narrow to 32-bit.
using Scalar = double;
using Shape = std::vector<std::size_t>;

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<Scalar> values;
  std::vector<Scalar> grad;  // empty until the first accumulation
  bool requires_grad = false;
};
}  // namespace detail

// Dense row-major tensor handle. Copies share storage; use clone() to fork.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Scalar> values,
                     bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t size() const { return node_->values.size(); }

  Scalar* data() { return node_->values.data(); }
  const Scalar* data() const { return node_->values.data(); }
  std::vector<Scalar>& values() { return node_->values; }
  const std::vector<Scalar>& values() const { return node_->values; }

  Scalar at(std::size_t i) const { return node_->values[i]; }
  Scalar& at(std::size_t i) { return node_->values[i]; }
  // Row-major 2-D access.
  Scalar at2(std::size_t r, std::size_t c) const {
    return node_->values[r * node_->shape[1] + c];
  }
  Scalar& at2(std::size_t r, std::size_t c) {
    return node_->values[r * node_->shape[1] + c];
  }
  // Value of a scalar (rank-0-like, stored as shape {1}) tensor.
  Scalar item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient storage, allocated (zeroed) on first use.
  std::vector<Scalar>& grad();
  const std::vector<Scalar>& grad() const { return node_->grad; }
  void zero_grad();

  // Adds v to grad[i]; no-op unless this tensor requires grad.
  void accumulate(std::size_t i, Scalar v) {
    if (!node_->requires_grad) return;
    if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
    node_->grad[i] += v;
  }

  // Deep copy of values (grad not copied).
  Tensor clone() const;
  // Same values, no grad tracking; cuts the tensor out of the backward graph.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<detail::TensorData> node_;
};

// Ordered record of executed operations. Replaying the recorded backward
// rules in reverse order propagates gradients from a scalar loss to every
// requires_grad tensor that participated.
class Tape {
 public:
  void record(std::function<void()> backward_rule) {
    records_.push_back(std::move(backward_rule));
  }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays every rule once, newest first.
  // Calling again without zeroing grads accumulates.
  void backward(Tensor loss);

  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<std::function<void()>> records_;
};

// Makes `tape` the recorder for ops executed on this thread. Ops run without
// an active scope are pure forward computations.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Throws NumericError naming `op` if the tensor holds a NaN/Inf.
void check_finite(const char* op, const Tensor& t);

std::string shape_string(const Shape& shape);

}  // namespace epi
