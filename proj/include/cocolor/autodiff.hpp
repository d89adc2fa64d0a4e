#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "cocolor/tensor.hpp"

namespace cocolor {

// Reverse-mode tape. A Tape owns every intermediate value of one forward
// computation; backward() walks the nodes in reverse creation order, which is
// a valid topological order because ops only consume already-created nodes.
template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first use during backward
    bool requires_grad = false;
    std::function<void(Tape&)> backward;
  };

  int add_node(Tensor<T> value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor<T>{}, requires_grad, {}});
    return static_cast<int>(nodes_.size()) - 1;
  }

  void set_backward(int id, std::function<void(Tape&)> fn) {
    nodes_[static_cast<std::size_t>(id)].backward = std::move(fn);
  }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  const Tensor<T>& value(int id) const { return node(id).value; }

  bool requires_grad(int id) const { return node(id).requires_grad; }

  // Grad buffer of a node, allocating zeros on first access.
  Tensor<T>& grad_buf(int id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape());
    return n.grad;
  }

  bool has_grad(int id) const { return !node(id).grad.empty(); }

  // Backpropagate from a scalar node. Only nodes created up to `root` are
  // visited; nodes whose grad buffer was never touched are skipped.
  void backward(int root) {
    Node& r = node(root);
    require(r.value.numel() == 1, "backward: root must be a scalar");
    require(r.requires_grad, "backward: root does not depend on any trainable input");
    grad_buf(root)[0] = T{1};
    for (int i = root; i >= 0; --i) {
      Node& n = node(i);
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

// Lightweight handle into a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& val() const { return tape->value(id); }
  bool requires_grad() const { return tape->requires_grad(id); }
  const Tensor<T>& grad() const { return tape->node(id).grad; }
};

template <typename T>
Var<T> make_leaf(Tape<T>& tape, Tensor<T> value, bool requires_grad) {
  int id = tape.add_node(std::move(value), requires_grad);
  return Var<T>{&tape, id};
}

template <typename T>
Var<T> make_constant(Tape<T>& tape, Tensor<T> value) {
  return make_leaf(tape, std::move(value), false);
}

}  // namespace cocolor
