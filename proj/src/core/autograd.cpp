#include "mga/core/autograd.hpp"

#include <algorithm>
#include <unordered_set>
#include <utility>

#include "mga/errors.hpp"

namespace mga::nn {

Tensor& Node::ensure_grad() {
  if (grad.empty()) grad = Tensor::zeros_like(value);
  return grad;
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

Tensor Var::grad() const {
  if (has_grad()) return node_->grad;
  return Tensor::zeros_like(node_->value);
}

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node& self)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& p : parents) {
    if (g_grad_enabled && p.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.shared());
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (!root) throw StateError("backward on an empty variable");
  if (root.value().size() != 1) {
    throw DimensionError("backward root must be scalar, got " + shape_string(root.shape()));
  }
  Node* start = root.node();
  if (!start->requires_grad) return;

  // Iterative post-order DFS; the graph can be a few hundred nodes deep.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{start, 0}};
  visited.insert(start);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  start->ensure_grad().fill(0.0);
  start->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace mga::nn
