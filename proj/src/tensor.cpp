#include "ssattn/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "ssattn/errors.hpp"

namespace ssattn {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
  if (numel_of(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     to_string(shape));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ShapeError("use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return numel_of(shape()); }

std::span<const double> Tensor::data() const {
  shape();
  return node_->data;
}

std::span<double> Tensor::data_mut() {
  shape();
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank mismatch for " + to_string(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw ShapeError("index out of range for " + to_string(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  shape();
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  shape();
  return node_->grad;
}

std::span<double> Tensor::grad_mut() {
  shape();
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

bool Tensor::is_leaf() const { return node_ && node_->parents.empty(); }

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }

Tensor Tensor::clone() const {
  Tensor t(shape(), node_->data, node_->requires_grad);
  return t;
}

Tensor Tensor::make_result(const char* op, Shape shape, std::vector<double> data,
                           std::initializer_list<const Tensor*> inputs,
                           detail::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data), false);
  out.node_->op = op;
  bool any = false;
  for (const Tensor* t : inputs) any = any || (t && t->requires_grad());
  if (!any) return out;
  out.node_->requires_grad = true;
  for (const Tensor* t : inputs) out.node_->parents.push_back(t->node_);
  out.node_->backward = std::move(backward);
  return out;
}

Tensor Tensor::make_result(const char* op, Shape shape, std::vector<double> data,
                           const std::vector<Tensor>& inputs, detail::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data), false);
  out.node_->op = op;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  for (const auto& t : inputs) out.node_->parents.push_back(t.node_);
  out.node_->backward = std::move(backward);
  return out;
}

Tape::Tape(const Tensor& root) : root_(root) {
  if (!root.defined()) throw ShapeError("tape root is undefined");
  if (!root.requires_grad()) return;
  // Iterative post-order DFS; each node is emitted after all of its parents.
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void Tape::backward() {
  if (root_.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + to_string(root_.shape()));
  }
  if (order_.empty()) return;
  for (auto* node : order_) {
    if (!node->parents.empty()) node->grad.clear();
  }
  auto* root = order_.back();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  Tape(loss).backward();
}

}  // namespace ssattn
