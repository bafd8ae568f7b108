#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "imagine/errors.hpp"

namespace imagine::num {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

// Handle to a node in the computation graph. Copies share the node.
template <typename T>
class Tensor {
public:
  using value_type = T;
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(shape_size(shape), T(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape_size(shape) != values.size())
      throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                           std::to_string(shape_size(shape)) + " values, got " +
                           std::to_string(values.size()));
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(T v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

  static Tensor vector(std::vector<T> v, bool requires_grad = false) {
    const std::size_t n = v.size();
    return from({n}, std::move(v), requires_grad);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> v,
                       bool requires_grad = false) {
    return from({rows, cols}, std::move(v), requires_grad);
  }

  // Row lists; every row must have the same length.
  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows, bool requires_grad = false) {
    const std::size_t m = rows.size(), n = m ? rows.begin()->size() : 0;
    std::vector<T> v;
    v.reserve(m * n);
    for (const auto& r : rows) {
      if (r.size() != n) throw DimensionError("matrix: ragged rows");
      v.insert(v.end(), r.begin(), r.end());
    }
    return from({m, n}, std::move(v), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  // Rank-1 tensors read as a single row.
  std::size_t rows() const { return rank() == 2 ? shape()[0] : 1; }
  std::size_t cols() const { return rank() == 0 ? 1 : shape().back(); }

  std::span<T> values() { return node_->value; }
  std::span<const T> values() const { return node_->value; }
  T operator[](std::size_t i) const { return node_->value[i]; }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  T item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Gradient accumulator; zeros when nothing has flowed in yet.
  std::span<const T> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  std::span<T> grad_mut() { return node_->ensure_grad(); }
  void zero_grad() {
    auto& g = node_->ensure_grad();
    std::fill(g.begin(), g.end(), T(0));
  }

  Node<T>& node() const { return *node_; }
  const NodePtr& ptr() const { return node_; }

  // Fresh leaf holding a copy of the values, detached from any graph.
  Tensor detach() const { return from(shape(), node_->value, false); }

private:
  NodePtr node_;
};

// Thread-local switch; when off, ops produce constants with no graph.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

class NoGradGuard {
public:
  NoGradGuard() : saved_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool saved_;
};

// Builds a result node; records inputs and the backward closure only when
// at least one input participates in differentiation.
template <typename T, typename Backward>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      std::initializer_list<Tensor<T>> inputs, Backward&& bw) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  bool any = false;
  if (grad_mode())
    for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    n->requires_grad = true;
    for (const auto& in : inputs) n->inputs.push_back(in.ptr());
    n->backward = std::forward<Backward>(bw);
  }
  return Tensor<T>(std::move(n));
}

template <typename T, typename Backward>
Tensor<T> make_result(Shape shape, std::vector<T> values, const std::vector<Tensor<T>>& inputs,
                      Backward&& bw) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  bool any = false;
  if (grad_mode())
    for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    n->requires_grad = true;
    for (const auto& in : inputs) n->inputs.push_back(in.ptr());
    n->backward = std::forward<Backward>(bw);
  }
  return Tensor<T>(std::move(n));
}

// Reverse-topological record of the graph reaching a scalar loss. Each node
// appears once; replaying visits them from the loss back to the leaves.
template <typename T>
class Tape {
public:
  explicit Tape(const Tensor<T>& loss) : root_(loss.ptr()) {
    if (!root_) throw ContractError("tape built from an undefined tensor");
    std::unordered_set<const Node<T>*> seen;
    // Iterative post-order DFS: a node is emitted after all of its inputs.
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root_.get(), 0);
    seen.insert(root_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node<T>* child = node->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
    std::reverse(order_.begin(), order_.end());
  }

  const std::vector<Node<T>*>& order() const { return order_; }

  // Seeds d(loss)/d(loss) = 1 and propagates. Leaf grads accumulate across
  // calls; interior grads are reset so a replay adds exactly one more copy.
  void backward() {
    if (root_->value.size() != 1)
      throw ContractError("backward needs a scalar loss, got shape " + shape_str(root_->shape));
    if (!root_->requires_grad) return;
    // Leaves gather this pass's gradient in a cleared buffer, then add it to
    // their running total once, so accumulation across passes is exact.
    std::vector<std::vector<T>> saved;
    for (Node<T>* n : order_) {
      auto& g = n->ensure_grad();
      if (n->is_leaf()) saved.push_back(g);
      std::fill(g.begin(), g.end(), T(0));
    }
    root_->grad[0] = T(1);
    for (Node<T>* n : order_)
      if (!n->is_leaf()) n->backward(*n);
    std::size_t k = 0;
    for (Node<T>* n : order_) {
      if (!n->is_leaf()) continue;
      const auto& prev = saved[k++];
      for (std::size_t i = 0; i < prev.size(); ++i) n->grad[i] += prev[i];
    }
  }

private:
  std::shared_ptr<Node<T>> root_;
  std::vector<Node<T>*> order_;
};

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>(loss).backward();
}

} // namespace imagine::num
