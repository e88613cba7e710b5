#include "unseg/autograd.hpp"

namespace unseg {

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  if (value.is_null()) throw Error(ErrorCode::kShapeMismatch, "leaf from null tensor");
  Node node;
  node.owned = std::move(value);
  node.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  if (!p.materialized()) {
    throw Error(ErrorCode::kInvalidArgument, "parameter '" + p.name + "' was built in meta mode");
  }
  Node node;
  node.borrowed = &p.value;
  node.param = &p;
  node.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                std::move(backward));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::span<const Var<T>> inputs, BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var<T>& in : inputs) {
    if (&in.tape() != this) throw Error(ErrorCode::kInvalidArgument, "input recorded on another tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.borrowed ? *n.borrowed : n.owned;
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(std::size_t id) {
  Tensor<T>& g = grads_.at(id);
  if (g.is_null()) g = Tensor<T>::zeros_like(value(id));
  return g;
}

template <typename T>
const Tensor<T>* Tape<T>::grad(const Var<T>& v) const {
  if (v.id() >= grads_.size() || grads_[v.id()].is_null()) return nullptr;
  return &grads_[v.id()];
}

template <typename T>
void Tape<T>::backward(const Var<T>& root) {
  const Tensor<T>& root_value = value(root.id());
  if (root_value.numel() != 1) {
    throw Error(ErrorCode::kNotScalar, "backward root has shape " + shape_to_string(root_value.shape()));
  }
  grads_.assign(nodes_.size(), Tensor<T>());
  grads_[root.id()] = Tensor<T>::ones(root_value.shape());

  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (grads_[id].is_null() || !node.requires_grad) continue;
    if (node.backward) {
      // grads_ is sized up front, so this reference survives grad_buffer() calls.
      const Tensor<T>& g = grads_[id];
      node.backward(*this, g);
    }
    if (node.param != nullptr) {
      Parameter<T>& p = *node.param;
      if (p.grad.is_null()) {
        p.grad = grads_[id];
      } else {
        p.grad += grads_[id];
      }
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace unseg
