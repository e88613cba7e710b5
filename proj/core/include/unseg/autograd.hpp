#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "unseg/tensor.hpp"

namespace unseg {

// A trainable tensor owned by a model. In meta mode (shape-only
// construction) `value` stays null and only `shape` is meaningful.
template <typename T>
struct Parameter {
  std::string name;
  Shape shape;
  Tensor<T> value;
  Tensor<T> grad;

  std::size_t numel() const { return shape_numel(shape); }
  bool materialized() const { return !value.is_null(); }
  void zero_grad() {
    if (!grad.is_null()) grad.fill(T{0});
  }
};

template <typename T>
class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  std::size_t id() const noexcept { return id_; }
  Tape<T>& tape() const { return *tape_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only record of operations for reverse-mode differentiation.
// Node inputs always have smaller ids than the node itself, so a reverse
// sweep over ids is a valid topological order.
template <typename T>
class Tape {
 public:
  // Receives the gradient of the node's output and accumulates into the
  // gradients of its inputs through grad_buffer().
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var<T> leaf(Tensor<T> value, bool requires_grad = false);
  // Binds a model parameter without copying it; backward() adds the
  // parameter's gradient into Parameter::grad.
  Var<T> param(Parameter<T>& p);
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward);
  Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, BackwardFn backward);

  void backward(const Var<T>& root);

  // nullptr when the node received no gradient in the last backward().
  const Tensor<T>* grad(const Var<T>& v) const;

  const Tensor<T>& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  // Zero-initialised on first access during a backward sweep.
  Tensor<T>& grad_buffer(std::size_t id);
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* borrowed = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  bool grad_enabled_;
  std::deque<Node> nodes_;
  std::vector<Tensor<T>> grads_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace unseg
