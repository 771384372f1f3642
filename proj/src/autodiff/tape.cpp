// SPDX-License-Identifier: Apache-2.0
#include "padmae/autodiff/tape.hpp"

#include <stdexcept>

namespace padmae::ad {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("Var: use of an unbound variable");
  return tape_->value(*this);
}

Tensor Var::grad() const {
  if (!tape_) throw std::logic_error("Var: use of an unbound variable");
  const auto& node = tape_->nodes_.at(id_);
  return node.has_grad ? node.grad : Tensor::zeros(node.value.shape());
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw std::logic_error("Tape: variable belongs to a different tape");
  }
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(Param& p) {
  Node n;
  n.op = "param:" + p.name;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = &p;
  return push(std::move(n));
}

Var Tape::record(std::string op, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(std::move(op), std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(std::string op, Tensor value, const std::vector<Var>& inputs,
                 BackwardFn backward) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  for (const Var& in : inputs) {
    check_owned(in);
    n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const {
  check_owned(v);
  return nodes_[v.id_].value;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id_].requires_grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  check_owned(v);
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (g.numel() != n.value.numel()) throw ShapeError("accumulate", n.value.shape(), g.shape());
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), g.storage());
    n.has_grad = true;
  } else {
    n.grad.add_inplace(g);
  }
}

void Tape::backward(Var root) {
  check_owned(root);
  if (nodes_[root.id_].value.numel() != 1) {
    throw ShapeError("backward: root must be a scalar, got " +
                     shape_str(nodes_[root.id_].value.shape()));
  }
  backward(root, Tensor(nodes_[root.id_].value.shape(), 1.0));
}

void Tape::backward(Var root, const Tensor& seed) {
  check_owned(root);
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  visit_order_.clear();
  accumulate(root, seed);
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    visit_order_.push_back(i);
    if (n.param != nullptr) {
      if (n.param->trainable) n.param->grad.add_inplace(n.grad);
    } else if (n.backward) {
      n.backward(n.grad, *this);
    }
  }
}

}  // namespace padmae::ad
