// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "padmae/autodiff/param.hpp"
#include "padmae/autodiff/tensor.hpp"

namespace padmae::ad {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  /// Gradient accumulated by the last backward pass (zeros if none reached).
  Tensor grad() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Receives the output gradient of one node and pushes contributions to its
/// inputs through Tape::accumulate.
using BackwardFn = std::function<void(const Tensor& grad_out, Tape& tape)>;

/// Records executed primitives in order. backward() replays them in exact
/// reverse order; gradients add up across fan-out. Param leaves flush their
/// gradient into Param::grad when the param is trainable.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Param& p);

  /// Registers the output of a primitive. `backward` is skipped when none of
  /// `inputs` requires a gradient.
  Var record(std::string op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  void accumulate(Var v, const Tensor& g);

  /// Seeds a scalar root with 1 and propagates.
  void backward(Var root);
  void backward(Var root, const Tensor& seed);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
  /// Node ids in the order the last backward pass visited them.
  const std::vector<std::size_t>& last_backward_order() const { return visit_order_; }

 private:
  friend class Var;

  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Param* param = nullptr;
    BackwardFn backward;
  };

  Var push(Node node);
  void check_owned(Var v) const;

  std::deque<Node> nodes_;  // stable references to values across push_back
  std::vector<std::size_t> visit_order_;
};

}  // namespace padmae::ad
