#include "drgaze/tape.hpp"

#include <atomic>

#include "drgaze/errors.hpp"

namespace drgaze {

namespace {
std::atomic<BackwardFault> g_fault{BackwardFault::kNone};
}  // namespace

void set_backward_fault(BackwardFault fault) { g_fault.store(fault); }
BackwardFault backward_fault() { return g_fault.load(); }

template <Real T>
const Tensor<T>& BackwardContext<T>::output() const {
  return tape_.nodes_[node_].value;
}

template <Real T>
const Tensor<T>& BackwardContext<T>::input(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].value;
}

template <Real T>
std::size_t BackwardContext<T>::num_inputs() const {
  return tape_.nodes_[node_].inputs.size();
}

template <Real T>
bool BackwardContext<T>::needs(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].requires_grad;
}

template <Real T>
void BackwardContext<T>::accumulate(std::size_t i, Tensor<T> grad) {
  auto& target = tape_.nodes_[tape_.nodes_[node_].inputs.at(i)];
  if (!target.requires_grad) return;
  if (grad.shape() != target.value.shape()) {
    throw ShapeError("backward of '" + tape_.nodes_[node_].op + "' produced gradient " +
                     shape_string(grad.shape()) + " for input of shape " +
                     shape_string(target.value.shape()));
  }
  if (!target.has_grad) {
    target.grad = std::move(grad);
    target.has_grad = true;
    return;
  }
  auto dst = target.grad.data();
  auto src = grad.data();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
}

template <Real T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <Real T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

template <Real T>
Var<T> Tape<T>::parameter(Tensor<T> value) {
  Node n;
  n.op = "parameter";
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <Real T>
Var<T> Tape<T>::record(std::string op, std::span<const Var<T>> inputs, Tensor<T> value,
                       BackwardFn<T> backward) {
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  for (const auto& v : inputs) {
    if (v.tape() != this) throw std::invalid_argument("'" + n.op + "' mixes vars from different tapes");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <Real T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
  const Node& n = nodes_.at(v.id());
  if (n.has_grad) return n.grad;
  return Tensor<T>::zeros(n.value.shape());
}

template <Real T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss belongs to another tape");
  const Node& root = nodes_.at(loss.id());
  if (root.value.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_string(root.value.shape()));
  }
  for (auto& n : nodes_) {
    n.grad = Tensor<T>();
    n.has_grad = false;
  }
  visited_.clear();

  Node& seed = nodes_[loss.id()];
  if (!seed.requires_grad) return;
  seed.grad = Tensor<T>::full(seed.value.shape(), T{1});
  seed.has_grad = true;

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad) continue;
    visited_.push_back(id);
    if (!n.backward) continue;
    BackwardContext<T> ctx(*this, id);
    // Inputs always precede their consumer, so `n` is not touched by accumulate().
    n.backward(n.grad, ctx);
  }
}

template <Real T>
std::vector<typename Tape<T>::Record> Tape<T>::records() const {
  std::vector<Record> out;
  out.reserve(nodes_.size());
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    out.push_back(Record{nodes_[id].op, nodes_[id].inputs, id});
  }
  return out;
}

template class BackwardContext<float>;
template class BackwardContext<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace drgaze
