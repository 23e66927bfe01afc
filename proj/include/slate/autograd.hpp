#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "slate/tensor.hpp"

namespace slate {

// One recorded primitive application. `order` is the position on the
// per-thread tape; inputs always carry a smaller order than their consumers.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  std::uint64_t order = 0;
  bool requires_grad = false;

  // Zero-filled on first touch.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

// Handle to a tape node. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);

  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void zero_grad() {
    if (node_) node_->grad = Tensor<T>();
  }

  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

bool grad_enabled() noexcept;
std::uint64_t next_tape_order() noexcept;

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Records `value` as the output of a primitive over `inputs`. When recording
// is off or no input needs a gradient the result is a constant leaf.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward);

// Reverse pass from a scalar. Parameter grads accumulate; intermediate
// nodes release their grads and edges once processed.
template <typename T>
void backward(const Var<T>& loss);

}  // namespace slate
