#pragma once

#include "unseg/autograd.hpp"

// Differentiable elementwise, reduction, matrix and loss operations.
//
// Binary elementwise ops accept either equal shapes or, for the second
// operand, a rank-1 vector of length C broadcast over dim 1 of a rank-4
// NCHW tensor (per-channel bias/scale). Anything else is kShapeMismatch.

namespace unseg {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> add_scalar(const Var<T>& a, T offset);

// (M,K) x (K,N) -> (M,N)
template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);

template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);
// tanh approximation
template <typename T> Var<T> gelu(const Var<T>& x);

enum class Reduction { kMean, kSum };

// Stable binary cross-entropy on logits:
//   max(z,0) - z*y + log(1 + exp(-|z|))
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Var<T>& targets, Reduction reduction = Reduction::kMean);

// Plain-tensor helpers used outside the tape.
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> T bce_with_logits_value(const Tensor<T>& logits, const Tensor<T>& targets);

}  // namespace unseg
