#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "ilioseg/error.hpp"

namespace ilio::ag {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& s);

// Graph recording is on by default; a NoGradGuard turns it off for the
// current thread (inference).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(enabled()) { enabled() = false; }
  ~NoGradGuard() { enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled() { return enabled(); }

 private:
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
  bool previous_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  std::span<T> ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

// Value handle to a graph node. Copies share the node.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = numel(shape);
    return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (numel(shape) != values.size()) {
      throw ArgumentError("tensor: " + std::to_string(values.size()) +
                          " values for shape " + shape_string(shape));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  // Result of an op. Parents and the backward closure are kept only if
  // recording is enabled and some parent needs a gradient.
  static Tensor make_result(Shape shape, std::vector<T> values,
                            std::vector<std::shared_ptr<Node<T>>> parents,
                            std::function<void(Node<T>&)> backward) {
    Tensor out = from(std::move(shape), std::move(values), false);
    if (NoGradGuard::grad_enabled()) {
      const bool needs = std::any_of(parents.begin(), parents.end(),
                                     [](const auto& p) { return p && p->requires_grad; });
      if (needs) {
        out.node_->requires_grad = true;
        out.node_->parents = std::move(parents);
        out.node_->backward = std::move(backward);
      }
    }
    return out;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }

  std::span<const T> values() const { return node_->value; }
  std::span<T> mutable_values() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  T item() const {
    if (size() != 1) throw ArgumentError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }

  // Reverse-mode sweep from a scalar.
  void backward() {
    if (size() != 1) throw ArgumentError("backward() needs a scalar tensor");
    std::vector<Node<T>*> order;
    {
      std::unordered_set<Node<T>*> seen;
      std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
      seen.insert(node_.get());
      while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
          Node<T>* p = n->parents[next++].get();
          if (p && p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
          order.push_back(n);
          stack.pop_back();
        }
      }
    }
    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    }
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<Node<T>> node_;
};

}  // namespace ilio::ag
