#include "slate/autograd.hpp"

#include <algorithm>
#include <unordered_set>

namespace slate {

namespace {
thread_local bool t_grad_enabled = true;
thread_local std::uint64_t t_tape_counter = 0;
}  // namespace

bool grad_enabled() noexcept { return t_grad_enabled; }

std::uint64_t next_tape_order() noexcept { return ++t_tape_counter; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
  node_->order = next_tape_order();
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward) {
  Var<T> out(std::move(value));
  if (!t_grad_enabled) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Var<T>& v) { return v.requires_grad(); });
  if (!needs) return out;
  Node<T>* node = out.node();
  node->requires_grad = true;
  node->backward = std::move(backward);
  node->inputs.reserve(inputs.size());
  for (auto& in : inputs) node->inputs.push_back(in.node_ptr());
  return out;
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  using NodePtr = std::shared_ptr<Node<T>>;
  std::vector<NodePtr> tape;
  std::unordered_set<Node<T>*> seen;
  std::vector<NodePtr> stack{loss.node_ptr()};
  seen.insert(loss.node());
  while (!stack.empty()) {
    NodePtr n = std::move(stack.back());
    stack.pop_back();
    for (auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in);
    }
    tape.push_back(std::move(n));
  }
  std::sort(tape.begin(), tape.end(), [](const NodePtr& a, const NodePtr& b) { return a->order > b->order; });

  loss.node()->grad_buffer()[0] += T(1);
  for (NodePtr& n : tape) {
    if (n->backward) {
      if (!n->grad.empty()) n->backward(*n);
      n->backward = nullptr;
      n->inputs.clear();
      if (n.get() != loss.node()) n->grad = Tensor<T>();
    }
    n.reset();
  }
}

template class Var<float>;
template class Var<double>;
template Var<float> make_op(Tensor<float>, std::vector<Var<float>>, std::function<void(Node<float>&)>);
template Var<double> make_op(Tensor<double>, std::vector<Var<double>>, std::function<void(Node<double>&)>);
template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace slate
