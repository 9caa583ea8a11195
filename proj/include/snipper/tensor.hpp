#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace snipper {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents that require it.
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
  Node& parent(std::size_t i) { return *parents[i]; }
};

}  // namespace detail

/// Dense row-major tensor of 64-bit reals with an optional gradient slot.
/// A Tensor is a shared handle; results of operations record their parents so
/// that `backward` can run reverse-mode differentiation over the graph.
class Tensor {
 public:
  using BackwardFn = std::function<void(detail::Node&)>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);

  // Builds an operation result. `parents` that do not require gradients are
  // not retained; if none require gradients the result is a constant.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            const std::vector<Tensor>& parents,
                            BackwardFn backward, const char* op);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Only leaves may be written in place (parameter updates, test fixtures).
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  const char* op_name() const;
  Tensor detach() const;
  Tensor clone_leaf() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared_node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered view of the recorded graph below a root: every node
/// appears after all of its parents, and each node appears exactly once.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  const std::vector<detail::Node*>& nodes() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<detail::Node*> order_;
};

/// Reverse-mode pass from a scalar output. Leaves accumulate into their
/// gradient; intermediate gradients are reset at the start of every call.
void backward(const Tensor& scalar_output);

}  // namespace snipper
