#include "snipper/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "snipper/error.hpp"

namespace snipper {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_finite(const std::vector<double>& values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->value.assign(shape_numel(shape), fill);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  check_finite(node->value, "constructor");
  node_ = std::move(node);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  check_finite(values, "constructor");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node_ = std::move(node);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           const std::vector<Tensor>& parents,
                           BackwardFn backward, const char* op) {
  check_finite(values, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  node->is_leaf = false;
  bool any = false;
  for (const auto& p : parents) {
    if (p.defined() && p.requires_grad()) any = true;
  }
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    // Parent slots keep their positions so backward closures can index them;
    // constant parents are kept too but never receive gradients.
    for (const auto& p : parents) node->parents.push_back(p.node_);
    node->backward_fn = std::move(backward);
  }
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::values() const {
  if (!node_) throw ContractError("undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  if (!node_) throw ContractError("undefined tensor");
  if (!node_->is_leaf) throw ContractError("only leaf tensors may be mutated");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_) throw ContractError("undefined tensor");
  if (!node_->is_leaf) throw ContractError("requires_grad is fixed for op results");
  node_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return node_ && node_->is_leaf; }

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size() && !node_->value.empty();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) return {};
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

Tensor Tensor::detach() const {
  return Tensor(shape(), std::vector<double>(values().begin(), values().end()));
}

Tensor Tensor::clone_leaf() const {
  return Tensor(shape(), std::vector<double>(values().begin(), values().end()),
                requires_grad());
}

Graph Graph::trace(const Tensor& root) {
  Graph g;
  if (!root.defined()) return g;
  std::unordered_set<detail::Node*> seen;
  // Iterative post-order DFS: parents are emitted before children.
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p && p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      g.order_.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

void backward(const Tensor& scalar_output) {
  if (!scalar_output.defined() || scalar_output.numel() != 1) {
    throw ContractError("backward requires a scalar output");
  }
  if (!scalar_output.requires_grad()) {
    throw ContractError("backward on an output that does not require grad");
  }
  Graph g = Graph::trace(scalar_output);
  for (auto* n : g.nodes()) {
    if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
  }
  detail::Node* root = scalar_output.node();
  root->ensure_grad()[0] += 1.0;
  const auto& order = g.nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace snipper
