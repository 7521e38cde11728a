#include "feed/tensor.hpp"

#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "feed/errors.hpp"

namespace feed {

Shape::Shape(std::initializer_list<Index> dims) : dims_(dims) {
  for (Index d : dims_) {
    if (d < 0) throw DimensionError("negative extent in shape " + str());
  }
}

Shape::Shape(std::vector<Index> dims) : dims_(std::move(dims)) {
  for (Index d : dims_) {
    if (d < 0) throw DimensionError("negative extent in shape " + str());
  }
}

Index Shape::numel() const {
  Index n = 1;
  for (Index d : dims_) n *= d;
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << ',';
    os << dims_[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : impl_(std::make_shared<TensorImpl>()) {
  impl_->shape = Shape{0};
}

Tensor::Tensor(Shape shape, Vector values) : impl_(std::make_shared<TensorImpl>()) {
  if (shape.numel() != values.size()) {
    throw DimensionError("shape " + shape.str() + " holds " + std::to_string(shape.numel()) +
                         " values, got " + std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->value = std::move(values);
}

Tensor Tensor::zeros(Shape shape) {
  const Index n = shape.numel();
  return Tensor(std::move(shape), Vector::Zero(n));
}

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0f); }

Tensor Tensor::full(Shape shape, float value) {
  const Index n = shape.numel();
  return Tensor(std::move(shape), Vector::Constant(n, value));
}

Tensor Tensor::scalar(float value) { return Tensor(Shape{}, Vector::Constant(1, value)); }

Tensor Tensor::from(Shape shape, std::vector<float> values) {
  Vector v = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
  return Tensor(std::move(shape), std::move(v));
}

float Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape().str());
  }
  return impl_->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = on;
  if (!on) impl_->grad.resize(0);
  return *this;
}

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->value); }

Tensor Tensor::detach() const { return clone(); }

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, Vector value, std::initializer_list<Tensor> inputs,
                   const char* name, BackwardFn backward) {
  if (!value.allFinite()) {
    bool inputs_finite = true;
    for (const Tensor& in : inputs) inputs_finite = inputs_finite && in.data().allFinite();
    if (inputs_finite) {
      throw NumericError(std::string(name) + " produced a non-finite value from finite inputs");
    }
  }
  Tensor out(std::move(shape), std::move(value));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const Tensor& in : inputs) any = any || in.requires_grad();
  if (!any) return out;

  auto node = std::make_shared<Node>();
  node->name = name;
  node->inputs.reserve(inputs.size());
  for (const Tensor& in : inputs) node->inputs.push_back(in.impl());
  node->backward = std::move(backward);
  out.impl_->grad_fn = std::move(node);
  out.impl_->requires_grad = true;
  return out;
}

Graph Graph::trace(const Tensor& root) {
  Graph g;
  // Iterative post-order DFS over tensors that carry a grad_fn.
  std::unordered_set<const TensorImpl*> seen;
  std::vector<std::pair<std::shared_ptr<TensorImpl>, std::size_t>> stack;
  if (root.grad_fn()) {
    stack.emplace_back(root.impl(), 0);
    seen.insert(root.impl().get());
  }
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& inputs = impl->grad_fn->inputs;
    if (next < inputs.size()) {
      const auto& child = inputs[next++];
      if (child->grad_fn && child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    g.nodes_.push_back(impl->grad_fn.get());
    g.outputs_.push_back(impl);
    stack.pop_back();
  }
  return g;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + loss.shape().str());
  }
  if (!loss.requires_grad()) return;
  if (loss.is_leaf()) {
    auto& g = loss.impl()->grad;
    if (g.size() == 0) g = Vector::Zero(1);
    g[0] += 1.0f;
    return;
  }

  const Graph graph = Graph::trace(loss);
  std::unordered_map<const TensorImpl*, Vector> pending;
  pending[loss.impl().get()] = Vector::Ones(1);

  std::vector<Vector*> slots;
  for (std::size_t k = graph.nodes_.size(); k-- > 0;) {
    const Node* node = graph.nodes_[k];
    const TensorImpl* out = graph.outputs_[k].get();
    auto it = pending.find(out);
    if (it == pending.end()) continue;
    const Vector grad_out = std::move(it->second);
    pending.erase(it);

    slots.assign(node->inputs.size(), nullptr);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      TensorImpl* in = node->inputs[i].get();
      if (!in->requires_grad) continue;
      Vector* buf;
      if (in->grad_fn) {
        buf = &pending[in];
      } else {
        buf = &in->grad;
      }
      if (buf->size() == 0) *buf = Vector::Zero(in->value.size());
      slots[i] = buf;
    }
    node->backward(grad_out, slots);
  }
}

}  // namespace feed
