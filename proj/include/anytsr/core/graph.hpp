// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "anytsr/core/errors.hpp"
#include "anytsr/core/tensor.hpp"

namespace anytsr {

// Reverse-mode tape. Ops append nodes in topological order; backward() walks
// the tape in reverse, so one tape corresponds to one forward pass. Values
// live as long as the tape, which lets backward closures read their inputs
// without copies. With gradients disabled the tape records values only.
//
// A backward closure is called with the id of its own node and must
// accumulate (+=) into the gradients of its inputs.
template <typename T>
class Tape {
 public:
  using Id = int32_t;
  using BackwardFn = std::function<void(Id)>;

  bool grad_enabled() const { return grad_enabled_; }
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

  Id input(Tensor<T> v) { return push(std::move(v), false); }

  Id param(Tensor<T> v) { return push(std::move(v), grad_enabled_); }

  Id op_node(Tensor<T> value, bool needs_grad, BackwardFn backward) {
    const Id id = push(std::move(value), needs_grad && grad_enabled_);
    if (nodes_[static_cast<size_t>(id)].needs_grad)
      nodes_[static_cast<size_t>(id)].backward = std::move(backward);
    return id;
  }

  const Tensor<T>& val(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor<T>& val_mut(Id id) { return nodes_[static_cast<size_t>(id)].value; }

  bool needs_grad(Id id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  // Gradient buffer, allocated zero on first touch.
  Tensor<T>& grad(Id id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.numel() == 0 && n.value.numel() > 0) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  bool grad_touched(Id id) const {
    return nodes_[static_cast<size_t>(id)].grad.numel() > 0;
  }

  // Seeds d(root)/d(root) = 1 and propagates. Root must be scalar.
  void backward(Id root) {
    if (!grad_enabled_) throw NumericsError("backward() on a no-grad tape");
    if (val(root).numel() != 1) throw NumericsError("backward root must be scalar");
    grad(root)[0] = T(1);
    for (Id id = root; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.needs_grad && n.backward && n.grad.numel() > 0) n.backward(id);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    bool needs_grad = false;
  };

  Id push(Tensor<T> v, bool needs_grad) {
    nodes_.push_back(Node{std::move(v), Tensor<T>(), nullptr, needs_grad});
    return static_cast<Id>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

}  // namespace anytsr
