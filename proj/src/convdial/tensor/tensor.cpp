#include "convdial/tensor/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "convdial/util/error.hpp"

namespace convdial {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

}  // namespace detail

namespace {

thread_local bool t_grad_enabled = true;

void check_shape(const Shape& shape) {
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  check_shape(shape);
  node_->value.assign(shape_numel(shape), 0.0);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
  node_->value = std::move(values);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.node_->value.begin(), t.node_->value.end(), value);
  return t;
}

const Shape& Tensor::shape() const {
  if (!node_) throw StateError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::span<const double> Tensor::values() const {
  if (!node_) throw StateError("use of undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  if (!node_) throw StateError("use of undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw StateError("use of undefined tensor");
  node_->requires_grad = on;
}

std::span<const double> Tensor::grad() const {
  if (!node_) throw StateError("use of undefined tensor");
  return node_->grad_buffer();
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw StateError("use of undefined tensor");
  return node_->grad_buffer();
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value); }

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward) {
  Tensor out(std::move(shape), std::move(values));
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    auto& node = *out.node_;
    node.requires_grad = true;
    node.parents.reserve(parents.size());
    for (auto& p : parents) {
      if (p.defined()) node.parents.push_back(p.node());
    }
    node.backward = std::move(backward);
  }
  return out;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined()) throw StateError("backward on undefined tensor");
  if (loss.numel() != 1) throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  auto root = loss.node();
  if (root->consumed) throw StateError("backward called twice on the same graph; re-run the forward pass");
  if (!root->requires_grad) throw StateError("loss does not depend on any tensor requiring grad");

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<detail::Node*> order;
  std::vector<detail::Node*> leaves;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->consumed) throw StateError("graph already consumed by an earlier backward pass");
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
      continue;
    }
    if (node->backward) {
      order.push_back(node);
    } else if (node->requires_grad) {
      leaves.push_back(node);
    }
    stack.pop_back();
  }

  for (auto* node : order) {
    if (node != root.get()) node->grad.assign(node->value.size(), 0.0);
  }
  root->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    node->backward(*node);
  }
  for (auto* node : order) {
    node->backward = nullptr;
    node->parents.clear();
    node->consumed = true;
    if (node != root.get()) std::vector<double>().swap(node->grad);
  }
  for (auto* leaf : leaves) {
    for (double g : leaf->grad) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient of shape " + shape_str(leaf->shape));
    }
  }
}

}  // namespace convdial
