#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "probcast/core/error.hpp"
#include "probcast/nn/tensor.hpp"

namespace probcast::nn {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::string name;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.shape != value.shape) grad = Tensor<T>(value.shape);
    return grad;
  }
  bool is_leaf() const { return !backward_fn; }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

namespace detail {
inline thread_local bool grad_enabled = true;
// When set, piecewise-linear activations append the sign of every input so
// finite-difference checks can detect perturbations that cross a kink.
inline thread_local std::vector<std::uint8_t>* kink_trace = nullptr;
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled; }

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Records activation sign patterns on this thread while alive.
class KinkTrace {
 public:
  KinkTrace() : prev_(detail::kink_trace) { detail::kink_trace = &signs_; }
  ~KinkTrace() { detail::kink_trace = prev_; }
  KinkTrace(const KinkTrace&) = delete;
  KinkTrace& operator=(const KinkTrace&) = delete;
  const std::vector<std::uint8_t>& signs() const { return signs_; }

 private:
  std::vector<std::uint8_t> signs_;
  std::vector<std::uint8_t>* prev_;
};

template <class T>
Var<T> leaf(Tensor<T> value, bool requires_grad = false, std::string name = {}) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->name = std::move(name);
  return n;
}

template <class T>
Var<T> constant(Tensor<T> value) {
  return leaf(std::move(value), false);
}

/// Output node of an op. Inputs and the backward closure are kept only when
/// recording is on and some input needs a gradient.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in->requires_grad;
  if (needs && grad_enabled()) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(fn);
  }
  return n;
}

/// Reverse sweep from a scalar. Leaf gradients accumulate; the intermediate
/// graph is released afterwards, so a second call on the same loss fails.
template <class T>
void backward(const Var<T>& loss) {
  probcast::detail::require(loss != nullptr, "backward on a null node");
  probcast::detail::require(loss->value.size() == 1, "backward needs a scalar loss, got shape " + shape_string(loss->value.shape));
  if (loss->consumed) throw Error("backward already ran on this graph; run the forward pass again");
  probcast::detail::require(loss->requires_grad, "loss does not depend on any parameter that requires a gradient");

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.get(), 0}};
  seen.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && !child->is_leaf() && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->ensure_grad().data[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& n = **it;
    n.ensure_grad();
    n.backward_fn(n);
  }
  for (Node<T>* n : order) {
    n->inputs.clear();
    n->backward_fn = nullptr;
    n->grad = Tensor<T>();
    n->consumed = true;
  }
}

}  // namespace probcast::nn
