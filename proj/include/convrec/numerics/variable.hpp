#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "convrec/numerics/tensor.hpp"

namespace convrec::numerics {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. Leaves (inputs, parameters) have no
// backward function; interior nodes push their gradient into their parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
    return grad;
  }
};

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables tape recording on this thread for its lifetime (inference, finite
// differences).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Shared handle to a tape node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad() { return node_->ensure_grad(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  const NodePtr& node() const noexcept { return node_; }

  void zero_grad() {
    if (node_->grad.size() == node_->value.size() && !node_->grad.empty()) {
      node_->grad.fill(0.0);
    } else {
      node_->grad = Tensor(node_->value.shape());
    }
  }

  // Reverse sweep from a scalar root. Gradients accumulate into leaves;
  // interior gradients and saved buffers are released as soon as they have
  // been propagated.
  void backward() {
    if (value().size() != 1) {
      throw DimensionError("backward() requires a scalar root, got " + shape_string(shape()));
    }
    if (!node_->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }

    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (!n->backward) continue;
      if (n->grad.size() == n->value.size()) {
        for (auto& p : n->parents) {
          if (p->requires_grad) p->ensure_grad();
        }
        n->backward(*n);
      }
      n->backward = nullptr;
      n->grad = Tensor();
    }
  }

 private:
  NodePtr node_;
};

inline Var constant(Tensor value) { return Var(std::move(value), false); }
inline Var leaf(Tensor value) { return Var(std::move(value), true); }

// Wraps an op result. The parent links and the backward closure are only kept
// when recording is on and some parent needs a gradient.
inline Var make_result(Tensor value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

}  // namespace convrec::numerics
