#include "chanprune/autodiff.hpp"

#include "chanprune/kernels.hpp"

namespace chanprune {

template <typename T>
Var Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward, const char* op) {
  Node node;
  node.value = std::move(value);
  node.op = op;
  for (Var in : inputs) {
    if (!in.valid() || in.id >= nodes_.size()) throw Error(std::string("invalid input to op ") + op);
    node.inputs.push_back(in.id);
    node.requires_grad = node.requires_grad || nodes_[in.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Tensor<T> Tape<T>::grad(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (node.grad.empty()) return Tensor<T>(node.value.shape());
  return node.grad;
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var v) {
  Node& node = nodes_.at(v.id);
  if (node.grad.empty()) node.grad = Tensor<T>(node.value.shape());
  return node.grad;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_string(root.value.shape()));
  }
  ++kernels::counters().backward_passes;
  grad_buffer(loss)[0] += T{1};

  std::vector<char> reachable(nodes_.size(), 0);
  reachable[loss.id] = 1;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (!reachable[i]) continue;
    Node& node = nodes_[i];
    if (!node.requires_grad) continue;
    for (std::size_t in : node.inputs) reachable[in] = 1;
    if (node.is_leaf || !node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
    // Intermediate gradients are consumed here so a second backward() adds
    // exactly one more contribution to the leaves.
    node.grad = Tensor<T>();
  }

  for (std::size_t i = 0; i <= loss.id; ++i) {
    const Node& node = nodes_[i];
    if (reachable[i] && node.is_leaf && node.requires_grad && !node.grad.empty() && !node.grad.all_finite()) {
      throw NumericalError("non-finite gradient at tape leaf " + std::to_string(i));
    }
  }
}

template <typename T>
void Tape<T>::zero_grad() {
  for (Node& node : nodes_) node.grad = Tensor<T>();
}

template class Tape<float>;
template class Tape<double>;

}  // namespace chanprune
