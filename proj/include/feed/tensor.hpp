#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace feed {

using Index = std::int64_t;
using Vector = Eigen::VectorXf;

// Extents of a dense row-major tensor. Rank 0 denotes a scalar.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> dims);
  explicit Shape(std::vector<Index> dims);

  std::size_t rank() const { return dims_.size(); }
  Index operator[](std::size_t axis) const { return dims_[axis]; }
  const std::vector<Index>& dims() const { return dims_; }
  Index numel() const;

  bool operator==(const Shape&) const = default;

  // "[2,3,4]"
  std::string str() const;

 private:
  std::vector<Index> dims_;
};

struct TensorImpl;

// Backward rule of a recorded op: given dLoss/dOutput, accumulate into the
// per-input gradient buffers. A null slot means that input needs no gradient.
using BackwardFn = std::function<void(const Vector& grad_out, std::span<Vector*> grad_in)>;

struct Node {
  std::string name;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  Vector value;
  Vector grad;  // empty until a backward pass reaches this leaf
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;
};

// Dense single-precision tensor with reverse-mode autodiff.
//
// Copies are shallow handles onto the same storage; use clone() for a deep copy.
// Ops record a graph node whenever gradient mode is on and any input requires
// a gradient. Values produced from finite inputs are checked to stay finite.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, Vector values);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor scalar(float value);
  static Tensor from(Shape shape, std::vector<float> values);

  const Shape& shape() const { return impl_->shape; }
  Index dim(std::size_t axis) const { return impl_->shape[axis]; }
  std::size_t rank() const { return impl_->shape.rank(); }
  Index numel() const { return impl_->shape.numel(); }

  Vector& data() { return impl_->value; }
  const Vector& data() const { return impl_->value; }
  float item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return impl_->grad.size() > 0; }
  // Empty vector when no gradient has been accumulated.
  const Vector& grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.resize(0); }

  bool is_leaf() const { return impl_->grad_fn == nullptr; }
  const std::shared_ptr<Node>& grad_fn() const { return impl_->grad_fn; }

  Tensor clone() const;
  Tensor detach() const;

  // Same storage and graph identity.
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape, Vector, std::initializer_list<Tensor>, const char*, BackwardFn);

  std::shared_ptr<TensorImpl> impl_;
};

// Thread-local switch: while alive, ops record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Build an op result. Records a node when grad mode is on and any input
// requires grad; throws NumericError when finite inputs give a non-finite value.
Tensor make_result(Shape shape, Vector value, std::initializer_list<Tensor> inputs,
                   const char* name, BackwardFn backward);

// Topologically ordered view of the ops that produced a tensor.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  // Inputs of every node appear before it.
  const std::vector<const Node*>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<const Node*> nodes_;
  std::vector<std::shared_ptr<TensorImpl>> outputs_;
  friend void backward(const Tensor& loss);
};

// Populate .grad of every requires_grad leaf reachable from a scalar loss.
// Leaf gradients accumulate across calls until zero_grad().
void backward(const Tensor& loss);

}  // namespace feed
