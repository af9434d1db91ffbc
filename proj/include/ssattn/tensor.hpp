#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ssattn {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node& self)>;

// One vertex of the autodiff graph. Parents always precede children, so the
// graph reachable from any tensor is a DAG in creation order.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major f64 array with an autodiff graph handle.
///
/// Copies of a Tensor are cheap handles onto the same storage (the usual
/// autodiff-library convention); use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // In-place access for optimizers and test fixtures. Mutating a tensor that
  // already has graph children invalidates their saved forward values.
  std::span<double> data_mut();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  bool is_leaf() const;
  const char* op_name() const;

  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  // Builds an op result. When no input requires grad the result is a
  // constant leaf and `backward` is dropped.
  static Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                            std::initializer_list<const Tensor*> inputs,
                            detail::BackwardFn backward);
  static Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                            const std::vector<Tensor>& inputs, detail::BackwardFn backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode tape: the nodes reachable from a root that take part in
/// differentiation, in topological order (parents first).
class Tape {
 public:
  explicit Tape(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  const std::vector<detail::Node*>& nodes() const { return order_; }

  // Seeds d(root)/d(root) = 1 and visits every node once in reverse order.
  // Leaf gradients accumulate across calls; intermediate ones are reset.
  void backward();

 private:
  Tensor root_;
  std::vector<detail::Node*> order_;
};

// Runs backward from a scalar loss. Throws ShapeError for non-scalar losses.
void backward(const Tensor& loss);

}  // namespace ssattn
