#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mga/core/tensor.hpp"

namespace mga::nn {

// A node in the reverse-mode tape. Interior nodes hold the closure that
// pushes their gradient into their parents; leaves (parameters, inputs)
// only accumulate.
struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows back
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node& self)> backward;

  Tensor& ensure_grad();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var leaf(Tensor value, bool requires_grad = true);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  // Gradient, or zeros of the value's shape when nothing has flowed back.
  Tensor grad() const;
  void zero_grad() { node_->grad = Tensor(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

// Builds an interior node. The backward closure is dropped when no parent
// needs a gradient, so inference graphs hold no tape.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node& self)> backward);

// While alive, make_op records no tape regardless of requires_grad.
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

// Seeds d(root)/d(root) = 1 and runs every registered backward in reverse
// topological order. The root must hold exactly one element.
void backward(const Var& root);

}  // namespace mga::nn
