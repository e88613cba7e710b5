#include "unseg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace unseg {

namespace {

enum class Broadcast { kNone, kChannel };

// Layout of a per-channel broadcast: a is (outer, C, inner), b is (C).
struct ChannelLayout {
  std::size_t outer = 1;
  std::size_t channels = 1;
  std::size_t inner = 1;
};

template <typename T>
Broadcast classify(const Tensor<T>& a, const Tensor<T>& b, const char* what, ChannelLayout& layout) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (b.rank() == 1 && a.rank() >= 2 && a.dim(1) == b.dim(0)) {
    layout.outer = a.dim(0);
    layout.channels = a.dim(1);
    layout.inner = 1;
    for (std::size_t i = 2; i < a.rank(); ++i) layout.inner *= a.dim(i);
    return Broadcast::kChannel;
  }
  throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": cannot broadcast " +
                                             shape_to_string(a.shape()) + " with " +
                                             shape_to_string(b.shape()));
}

template <typename T, typename Fwd>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, Broadcast mode, const ChannelLayout& l,
                      Fwd f) {
  Tensor<T> out(a.shape());
  if (mode == Broadcast::kNone) {
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
    return out;
  }
  std::size_t i = 0;
  for (std::size_t n = 0; n < l.outer; ++n) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      const T bc = b[c];
      for (std::size_t k = 0; k < l.inner; ++k, ++i) out[i] = f(a[i], bc);
    }
  }
  return out;
}

// Reduce a full-shaped gradient onto a channel vector.
template <typename T>
void reduce_to_channels(const Tensor<T>& full, const ChannelLayout& l, Tensor<T>& dst, T sign) {
  std::size_t i = 0;
  for (std::size_t n = 0; n < l.outer; ++n) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      T acc = 0;
      for (std::size_t k = 0; k < l.inner; ++k, ++i) acc += full[i];
      dst[c] += sign * acc;
    }
  }
}

template <typename T>
Var<T> add_sub(const Var<T>& a, const Var<T>& b, T sign, const char* what) {
  ChannelLayout l;
  const Broadcast mode = classify(a.value(), b.value(), what, l);
  Tensor<T> out = elementwise(a.value(), b.value(), mode, l, [sign](T x, T y) { return x + sign * y; });
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) t.grad_buffer(ia) += g;
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad_buffer(ib);
      if (mode == Broadcast::kNone) {
        for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += sign * g[i];
      } else {
        reduce_to_channels(g, l, gb, sign);
      }
    }
  });
}

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T, typename Fwd, typename Deriv>
Var<T> unary(const Var<T>& x, Fwd f, Deriv df) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = f(xv[i]);
  const std::size_t ix = x.id();
  const std::size_t iy = x.tape().size();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& in = t.value(ix);
    const Tensor<T>& y = t.value(iy);
    Tensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * df(in[i], y[i]);
  });
}

template <typename T>
T sigmoid_scalar(T z) {
  if (z >= 0) {
    const T e = std::exp(-z);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(z);
  return e / (T{1} + e);
}

template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
template <typename T>
constexpr T kGeluA = static_cast<T>(0.044715);

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return add_sub(a, b, T{1}, "add");
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return add_sub(a, b, T{-1}, "sub");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  ChannelLayout l;
  const Broadcast mode = classify(a.value(), b.value(), "mul", l);
  Tensor<T> out = elementwise(a.value(), b.value(), mode, l, [](T x, T y) { return x * y; });
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& av = t.value(ia);
    const Tensor<T>& bv = t.value(ib);
    if (mode == Broadcast::kNone) {
      if (t.requires_grad(ia)) {
        Tensor<T>& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
      }
      if (t.requires_grad(ib)) {
        Tensor<T>& gb = t.grad_buffer(ib);
        for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
      }
      return;
    }
    if (t.requires_grad(ia)) {
      Tensor<T>& ga = t.grad_buffer(ia);
      std::size_t i = 0;
      for (std::size_t n = 0; n < l.outer; ++n)
        for (std::size_t c = 0; c < l.channels; ++c)
          for (std::size_t k = 0; k < l.inner; ++k, ++i) ga[i] += g[i] * bv[c];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad_buffer(ib);
      std::size_t i = 0;
      for (std::size_t n = 0; n < l.outer; ++n)
        for (std::size_t c = 0; c < l.channels; ++c) {
          T acc = 0;
          for (std::size_t k = 0; k < l.inner; ++k, ++i) acc += g[i] * av[i];
          gb[c] += acc;
        }
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  return unary(a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T offset) {
  return unary(a, [offset](T x) { return x + offset; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_rank(av.shape(), 2, "matmul lhs");
  require_rank(bv.shape(), 2, "matmul rhs");
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  if (bv.dim(0) != k) {
    throw Error(ErrorCode::kShapeMismatch, "matmul: " + shape_to_string(av.shape()) + " x " +
                                               shape_to_string(bv.shape()));
  }
  using Mat = RowMajor<T>;
  Tensor<T> out(Shape{m, n});
  Eigen::Map<Mat>(out.ptr(), m, n).noalias() =
      Eigen::Map<const Mat>(av.ptr(), m, k) * Eigen::Map<const Mat>(bv.ptr(), k, n);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& g) {
    Eigen::Map<const Mat> gm(g.ptr(), m, n);
    if (t.requires_grad(ia)) {
      Eigen::Map<Mat>(t.grad_buffer(ia).ptr(), m, k).noalias() +=
          gm * Eigen::Map<const Mat>(t.value(ib).ptr(), k, n).transpose();
    }
    if (t.requires_grad(ib)) {
      Eigen::Map<Mat>(t.grad_buffer(ib).ptr(), k, n).noalias() +=
          Eigen::Map<const Mat>(t.value(ia).ptr(), m, k).transpose() * gm;
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().data()) acc += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor<T>::scalar(acc), {a}, [=](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& ga = t.grad_buffer(ia);
    const T s = g[0];
    for (T& v : ga.data()) v += s;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.value().numel()));
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary(x, [](T v) { return v > T{0} ? v : T{0}; }, [](T v, T) { return v > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary(x, [](T v) { return sigmoid_scalar(v); }, [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> gelu(const Var<T>& x) {
  auto f = [](T v) {
    const T u = kGeluC<T> * (v + kGeluA<T> * v * v * v);
    return T{0.5} * v * (T{1} + std::tanh(u));
  };
  auto df = [](T v, T) {
    const T u = kGeluC<T> * (v + kGeluA<T> * v * v * v);
    const T th = std::tanh(u);
    const T du = kGeluC<T> * (T{1} + T{3} * kGeluA<T> * v * v);
    return T{0.5} * (T{1} + th) + T{0.5} * v * (T{1} - th * th) * du;
  };
  return unary(x, f, df);
}

template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Var<T>& targets, Reduction reduction) {
  const Tensor<T>& z = logits.value();
  const Tensor<T>& y = targets.value();
  require_same_shape(z.shape(), y.shape(), "bce_with_logits");
  T acc = 0;
  for (std::size_t i = 0; i < z.numel(); ++i) {
    const T zi = z[i];
    acc += std::max(zi, T{0}) - zi * y[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  const T norm = reduction == Reduction::kMean ? T{1} / static_cast<T>(z.numel()) : T{1};
  const std::size_t iz = logits.id();
  const std::size_t iy = targets.id();
  return logits.tape().record(Tensor<T>::scalar(acc * norm), {logits, targets},
                              [=](Tape<T>& t, const Tensor<T>& g) {
                                const Tensor<T>& zv = t.value(iz);
                                const Tensor<T>& yv = t.value(iy);
                                const T s = g[0] * norm;
                                if (t.requires_grad(iz)) {
                                  Tensor<T>& gz = t.grad_buffer(iz);
                                  for (std::size_t i = 0; i < zv.numel(); ++i)
                                    gz[i] += s * (sigmoid_scalar(zv[i]) - yv[i]);
                                }
                                if (t.requires_grad(iy)) {
                                  Tensor<T>& gy = t.grad_buffer(iy);
                                  for (std::size_t i = 0; i < zv.numel(); ++i) gy[i] -= s * zv[i];
                                }
                              });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = sigmoid_scalar(x[i]);
  return out;
}

template <typename T>
T bce_with_logits_value(const Tensor<T>& logits, const Tensor<T>& targets) {
  Tape<T> tape(false);
  return bce_with_logits(tape.leaf(logits), tape.leaf(targets)).value().item();
}

#define UNSEG_INSTANTIATE_OPS(T)                                                 \
  template Var<T> add(const Var<T>&, const Var<T>&);                             \
  template Var<T> sub(const Var<T>&, const Var<T>&);                             \
  template Var<T> mul(const Var<T>&, const Var<T>&);                             \
  template Var<T> scale(const Var<T>&, T);                                       \
  template Var<T> add_scalar(const Var<T>&, T);                                  \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                          \
  template Var<T> sum(const Var<T>&);                                            \
  template Var<T> mean(const Var<T>&);                                           \
  template Var<T> relu(const Var<T>&);                                           \
  template Var<T> sigmoid(const Var<T>&);                                        \
  template Var<T> gelu(const Var<T>&);                                           \
  template Var<T> bce_with_logits(const Var<T>&, const Var<T>&, Reduction);      \
  template Tensor<T> sigmoid(const Tensor<T>&);                                  \
  template T bce_with_logits_value(const Tensor<T>&, const Tensor<T>&);

UNSEG_INSTANTIATE_OPS(float)
UNSEG_INSTANTIATE_OPS(double)

}  // namespace unseg
