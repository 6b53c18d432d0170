#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "chanprune/tensor.hpp"

namespace chanprune {

/// Handle to a node on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a reverse topological order and cycles cannot be built.
/// Single-threaded; use one tape per thread.
template <typename T>
class Tape {
 public:
  /// Receives the gradient of this node's output; adds into input gradients.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Var leaf(Tensor<T> value, bool requires_grad = true);
  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Records an op result. The backward closure is dropped when no input
  /// requires a gradient.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward, const char* op);

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  const char* op(Var v) const { return nodes_.at(v.id).op; }

  /// Gradient accumulated so far; zeros if backward never reached the node.
  /// Only leaves keep their gradient after backward().
  Tensor<T> grad(Var v) const;

  /// Mutable accumulator for `v`, allocated as zeros on first use.
  Tensor<T>& grad_buffer(Var v);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Repeated calls accumulate.
  /// Throws NumericalError if a leaf gradient is not finite.
  void backward(Var loss);

  void zero_grad();
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
    const char* op = "leaf";
  };
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace chanprune
