#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "drgaze/tensor.hpp"

namespace drgaze {

template <Real T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <Real T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// What a backward rule sees: its output gradient, forward values, and slots
/// to accumulate input gradients into.
template <Real T>
class BackwardContext {
 public:
  BackwardContext(Tape<T>& tape, std::size_t node) : tape_(tape), node_(node) {}

  const Tensor<T>& output() const;
  const Tensor<T>& input(std::size_t i) const;
  std::size_t num_inputs() const;
  /// False when input i (and everything upstream of it) needs no gradient.
  bool needs(std::size_t i) const;
  /// Adds `grad` into input i's gradient.
  void accumulate(std::size_t i, Tensor<T> grad);

 private:
  Tape<T>& tape_;
  std::size_t node_;
};

template <Real T>
using BackwardFn = std::function<void(const Tensor<T>& grad_out, BackwardContext<T>& ctx)>;

/// Ordered record of every operation of one forward pass. Nodes are appended
/// in execution order, so the node sequence is a topological order and a
/// single reverse sweep computes all gradients.
template <Real T>
class Tape {
 public:
  struct Record {
    std::string op;
    std::vector<std::size_t> inputs;
    std::size_t output = 0;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient (data, targets).
  Var<T> constant(Tensor<T> value);
  /// Leaf whose gradient is kept after backward().
  Var<T> parameter(Tensor<T> value);

  Var<T> record(std::string op, std::span<const Var<T>> inputs, Tensor<T> value,
                BackwardFn<T> backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  /// Gradient of the last backward() loss with respect to `v`; zeros if none flowed.
  Tensor<T> grad(Var<T> v) const;

  /// Reverse sweep from a single-element `loss`. Throws ShapeError otherwise.
  void backward(Var<T> loss);

  std::size_t size() const { return nodes_.size(); }
  std::vector<Record> records() const;
  /// Node ids in the order the last backward() processed them.
  const std::vector<std::size_t>& last_backward_order() const { return visited_; }

 private:
  friend class BackwardContext<T>;

  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn<T> backward;
  };

  Var<T> push(Node node);

  std::vector<Node> nodes_;
  std::vector<std::size_t> visited_;
};

template <Real T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

/// Debug switch that deliberately breaks one backward rule, so gradient
/// checking can be shown to catch it.
enum class BackwardFault { kNone, kConvBias };

void set_backward_fault(BackwardFault fault);
BackwardFault backward_fault();

}  // namespace drgaze
