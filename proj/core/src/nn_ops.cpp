#include "unseg/nn_ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <vector>

namespace unseg {

void ConvSpec::validate() const {
  if (kernel < 1 || stride < 1 || groups < 1 || in_channels < 1 || out_channels < 1) {
    throw Error(ErrorCode::kInvalidArgument, "conv spec: kernel, stride, groups and channels must be >= 1");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw Error(ErrorCode::kInvalidArgument, "conv spec: channels not divisible by groups");
  }
}

std::size_t ConvSpec::output_extent(std::size_t input) const {
  if (input + 2 * padding < kernel) {
    throw Error(ErrorCode::kShapeMismatch, "conv input extent " + std::to_string(input) +
                                               " smaller than kernel " + std::to_string(kernel));
  }
  return (input + 2 * padding - kernel) / stride + 1;
}

namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, k, stride, pad, groups, ho, wo;
  std::size_t cin_g() const { return cin / groups; }
  std::size_t cout_g() const { return cout / groups; }
  std::size_t patch() const { return cin_g() * k * k; }
  std::size_t positions() const { return ho * wo; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
  bool depthwise() const { return groups == cin && groups == cout && groups > 1; }
};

// col: (cin_g*k*k, ho*wo) for one image and group.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t p = g.positions();
  for (std::size_t ci = 0; ci < g.cin_g(); ++ci) {
    const T* plane = x + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((ci * g.k + ky) * g.k + kx) * p;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t p = g.positions();
  for (std::size_t ci = 0; ci < g.cin_g(); ++ci) {
    T* plane = dx + ci * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((ci * g.k + ky) * g.k + kx) * p;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          const T* src = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Depthwise kernels accumulate taps in (ky, kx) order from zero, then add bias.
template <typename T>
void depthwise_forward(const T* x, const T* w, const T* bias, const ConvGeometry& g, T* out) {
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t c = 0; c < g.cin; ++c) {
      const T* plane = x + (n * g.cin + c) * g.h * g.w;
      const T* kern = w + c * g.k * g.k;
      T* dst = out + (n * g.cout + c) * g.ho * g.wo;
      for (std::size_t oy = 0; oy < g.ho; ++oy) {
        for (std::size_t ox = 0; ox < g.wo; ++ox) {
          T acc = 0;
          for (std::size_t ky = 0; ky < g.k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t kx = 0; kx < g.k; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              acc += plane[static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)] * kern[ky * g.k + kx];
            }
          }
          dst[oy * g.wo + ox] = bias ? acc + bias[c] : acc;
        }
      }
    }
  }
}

template <typename T>
void depthwise_backward(const T* x, const T* w, const T* gout, const ConvGeometry& g, T* dx, T* dw) {
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t c = 0; c < g.cin; ++c) {
      const T* plane = x + (n * g.cin + c) * g.h * g.w;
      T* dplane = dx ? dx + (n * g.cin + c) * g.h * g.w : nullptr;
      const T* kern = w + c * g.k * g.k;
      T* dkern = dw ? dw + c * g.k * g.k : nullptr;
      const T* go = gout + (n * g.cout + c) * g.ho * g.wo;
      for (std::size_t oy = 0; oy < g.ho; ++oy) {
        for (std::size_t ox = 0; ox < g.wo; ++ox) {
          const T gv = go[oy * g.wo + ox];
          if (gv == T{0}) continue;
          for (std::size_t ky = 0; ky < g.k; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            for (std::size_t kx = 0; kx < g.k; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
              const std::size_t off = static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix);
              if (dkern) dkern[ky * g.k + kx] += gv * plane[off];
              if (dplane) dplane[off] += gv * kern[ky * g.k + kx];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void require_nchw(const Tensor<T>& x, const char* what) {
  require_rank(x.shape(), 4, what);
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvSpec& spec) {
  spec.validate();
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = weight.value();
  require_nchw(xv, "conv2d input");
  if (xv.dim(1) != spec.in_channels) {
    throw Error(ErrorCode::kShapeMismatch, "conv2d: input has " + std::to_string(xv.dim(1)) +
                                               " channels, spec expects " + std::to_string(spec.in_channels));
  }
  require_same_shape(wv.shape(), spec.weight_shape(), "conv2d weight");
  const bool with_bias = bias.valid();
  if (with_bias) require_same_shape(bias.value().shape(), Shape{spec.out_channels}, "conv2d bias");

  ConvGeometry g{xv.dim(0),   xv.dim(1),      xv.dim(2),   xv.dim(3), spec.out_channels,
                 spec.kernel, spec.stride,    spec.padding, spec.groups, spec.output_extent(xv.dim(2)),
                 spec.output_extent(xv.dim(3))};
  Tensor<T> out(Shape{g.n, g.cout, g.ho, g.wo});
  using Mat = RowMajor<T>;

  if (g.depthwise()) {
    depthwise_forward(xv.ptr(), wv.ptr(), with_bias ? bias.value().ptr() : nullptr, g, out.ptr());
  } else {
    std::vector<T> col(g.pointwise() ? 0 : g.patch() * g.positions());
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t gr = 0; gr < g.groups; ++gr) {
        const T* xin = xv.ptr() + (n * g.cin + gr * g.cin_g()) * g.h * g.w;
        const T* colp = xin;
        if (!g.pointwise()) {
          im2col(xin, g, col.data());
          colp = col.data();
        }
        Eigen::Map<const Mat> wm(wv.ptr() + gr * g.cout_g() * g.patch(), g.cout_g(), g.patch());
        Eigen::Map<const Mat> cm(colp, g.patch(), g.positions());
        Eigen::Map<Mat> om(out.ptr() + (n * g.cout + gr * g.cout_g()) * g.positions(), g.cout_g(), g.positions());
        om.noalias() = wm * cm;
      }
      if (with_bias) {
        const Tensor<T>& bv = bias.value();
        for (std::size_t c = 0; c < g.cout; ++c) {
          T* dst = out.ptr() + (n * g.cout + c) * g.positions();
          for (std::size_t p = 0; p < g.positions(); ++p) dst[p] += bv[c];
        }
      }
    }
  }

  const std::size_t ix = x.id();
  const std::size_t iw = weight.id();
  const std::size_t ib = with_bias ? bias.id() : 0;
  auto backward = [=](Tape<T>& t, const Tensor<T>& gout) {
    const Tensor<T>& xin = t.value(ix);
    const Tensor<T>& wt = t.value(iw);
    const bool need_x = t.requires_grad(ix);
    const bool need_w = t.requires_grad(iw);
    if (with_bias && t.requires_grad(ib)) {
      Tensor<T>& gb = t.grad_buffer(ib);
      for (std::size_t n = 0; n < g.n; ++n)
        for (std::size_t c = 0; c < g.cout; ++c) {
          const T* src = gout.ptr() + (n * g.cout + c) * g.positions();
          T acc = 0;
          for (std::size_t p = 0; p < g.positions(); ++p) acc += src[p];
          gb[c] += acc;
        }
    }
    if (!need_x && !need_w) return;
    if (g.depthwise()) {
      depthwise_backward(xin.ptr(), wt.ptr(), gout.ptr(), g, need_x ? t.grad_buffer(ix).ptr() : nullptr,
                         need_w ? t.grad_buffer(iw).ptr() : nullptr);
      return;
    }
    std::vector<T> col(g.pointwise() ? 0 : g.patch() * g.positions());
    std::vector<T> dcol(g.pointwise() ? 0 : g.patch() * g.positions());
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t gr = 0; gr < g.groups; ++gr) {
        const std::size_t x_off = (n * g.cin + gr * g.cin_g()) * g.h * g.w;
        Eigen::Map<const Mat> gm(gout.ptr() + (n * g.cout + gr * g.cout_g()) * g.positions(), g.cout_g(),
                                 g.positions());
        const std::size_t w_off = gr * g.cout_g() * g.patch();
        if (need_w) {
          const T* colp = xin.ptr() + x_off;
          if (!g.pointwise()) {
            im2col(xin.ptr() + x_off, g, col.data());
            colp = col.data();
          }
          Eigen::Map<Mat>(t.grad_buffer(iw).ptr() + w_off, g.cout_g(), g.patch()).noalias() +=
              gm * Eigen::Map<const Mat>(colp, g.patch(), g.positions()).transpose();
        }
        if (need_x) {
          Eigen::Map<const Mat> wm(wt.ptr() + w_off, g.cout_g(), g.patch());
          if (g.pointwise()) {
            Eigen::Map<Mat>(t.grad_buffer(ix).ptr() + x_off, g.patch(), g.positions()).noalias() +=
                wm.transpose() * gm;
          } else {
            Eigen::Map<Mat>(dcol.data(), g.patch(), g.positions()).noalias() = wm.transpose() * gm;
            col2im_add(dcol.data(), g, t.grad_buffer(ix).ptr() + x_off);
          }
        }
      }
    }
  };
  if (with_bias) return x.tape().record(std::move(out), {x, weight, bias}, backward);
  return x.tape().record(std::move(out), {x, weight}, backward);
}

template <typename T>
Var<T> maxpool2d(const Var<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  const Tensor<T>& xv = x.value();
  require_nchw(xv, "maxpool2d input");
  if (kernel < 1 || stride < 1 || padding >= kernel) {
    throw Error(ErrorCode::kInvalidArgument, "maxpool2d: bad kernel/stride/padding");
  }
  const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (h + 2 * padding < kernel || w + 2 * padding < kernel) {
    throw Error(ErrorCode::kShapeMismatch, "maxpool2d: input smaller than kernel");
  }
  const std::size_t ho = (h + 2 * padding - kernel) / stride + 1;
  const std::size_t wo = (w + 2 * padding - kernel) / stride + 1;
  Tensor<T> out(Shape{n, c, ho, wo});
  std::vector<std::size_t> argmax(out.numel());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = xv.ptr() + plane * h * w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
            if (src[idx] > best) {
              best = src[idx];
              best_idx = idx;
            }
          }
        }
        out[o] = best;
        argmax[o] = plane * h * w + best_idx;
      }
    }
  }
  const std::size_t ixn = x.id();
  return x.tape().record(std::move(out), {x}, [ixn, argmax = std::move(argmax)](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(ixn);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[argmax[i]] += g[i];
  });
}

template <typename T>
Var<T> maxpool2(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  require_nchw(xv, "maxpool2 input");
  if (xv.dim(2) % 2 != 0 || xv.dim(3) % 2 != 0) {
    throw Error(ErrorCode::kOddSpatialDim, "maxpool2 on " + shape_to_string(xv.shape()));
  }
  return maxpool2d(x, 2, 2, 0);
}

template <typename T>
Var<T> upsample2(const Var<T>& x, UpsampleMode mode) {
  const Tensor<T>& xv = x.value();
  require_nchw(xv, "upsample2 input");
  const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t ho = 2 * h, wo = 2 * w;
  Tensor<T> out(Shape{n, c, ho, wo});

  // Per output coordinate: two source taps and weights along one axis.
  struct Tap {
    std::size_t i0, i1;
    T l0, l1;
  };
  auto taps = [mode](std::size_t in, std::size_t outn) {
    std::vector<Tap> v(outn);
    for (std::size_t o = 0; o < outn; ++o) {
      if (mode == UpsampleMode::kNearest) {
        v[o] = {o / 2, o / 2, T{1}, T{0}};
        continue;
      }
      T src = (static_cast<T>(o) + T{0.5}) / T{2} - T{0.5};
      if (src < 0) src = 0;
      const std::size_t i0 = static_cast<std::size_t>(src);
      const std::size_t i1 = i0 + 1 < in ? i0 + 1 : i0;
      const T l1 = src - static_cast<T>(i0);
      v[o] = {i0, i1, T{1} - l1, l1};
    }
    return v;
  };
  const std::vector<Tap> ty = taps(h, ho);
  const std::vector<Tap> tx = taps(w, wo);

  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const T* src = xv.ptr() + plane * h * w;
    T* dst = out.ptr() + plane * ho * wo;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      const Tap& a = ty[oy];
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const Tap& b = tx[ox];
        dst[oy * wo + ox] = a.l0 * (b.l0 * src[a.i0 * w + b.i0] + b.l1 * src[a.i0 * w + b.i1]) +
                            a.l1 * (b.l0 * src[a.i1 * w + b.i0] + b.l1 * src[a.i1 * w + b.i1]);
      }
    }
  }
  const std::size_t ixn = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(ixn);
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      T* dst = gx.ptr() + plane * h * w;
      const T* src = g.ptr() + plane * ho * wo;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const Tap& a = ty[oy];
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const Tap& b = tx[ox];
          const T gv = src[oy * wo + ox];
          dst[a.i0 * w + b.i0] += gv * a.l0 * b.l0;
          dst[a.i0 * w + b.i1] += gv * a.l0 * b.l1;
          dst[a.i1 * w + b.i0] += gv * a.l1 * b.l0;
          dst[a.i1 * w + b.i1] += gv * a.l1 * b.l1;
        }
      }
    }
  });
}

template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                 Tensor<T>& running_var, const NormSpec& spec) {
  const Tensor<T>& xv = x.value();
  require_nchw(xv, "batchnorm input");
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (c != spec.num_features) {
    throw Error(ErrorCode::kShapeMismatch, "batchnorm: " + std::to_string(c) + " channels, spec has " +
                                               std::to_string(spec.num_features));
  }
  require_same_shape(gamma.value().shape(), Shape{c}, "batchnorm gamma");
  require_same_shape(beta.value().shape(), Shape{c}, "batchnorm beta");
  require_same_shape(running_mean.shape(), Shape{c}, "batchnorm running_mean");
  require_same_shape(running_var.shape(), Shape{c}, "batchnorm running_var");

  const T eps = static_cast<T>(spec.eps);
  const bool train = spec.mode == NormMode::kTrain;
  const std::size_t m = n * hw;
  std::vector<T> mu(c), invstd(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (!train) {
      mu[ch] = running_mean[ch];
      invstd[ch] = T{1} / std::sqrt(running_var[ch] + eps);
      continue;
    }
    T s = 0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* p = xv.ptr() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) s += p[i];
    }
    const T mean_v = s / static_cast<T>(m);
    T ss = 0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* p = xv.ptr() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mean_v) * (p[i] - mean_v);
    }
    const T var = ss / static_cast<T>(m);
    mu[ch] = mean_v;
    invstd[ch] = T{1} / std::sqrt(var + eps);
    const T mom = static_cast<T>(spec.momentum);
    const T unbiased = m > 1 ? ss / static_cast<T>(m - 1) : var;
    running_mean[ch] = (T{1} - mom) * running_mean[ch] + mom * mean_v;
    running_var[ch] = (T{1} - mom) * running_var[ch] + mom * unbiased;
  }

  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();
  Tensor<T> out(xv.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = xv.ptr() + (b * c + ch) * hw;
      T* o = out.ptr() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) o[i] = gv[ch] * (p[i] - mu[ch]) * invstd[ch] + bv[ch];
    }

  const std::size_t ix = x.id(), ig = gamma.id(), ibt = beta.id();
  return x.tape().record(std::move(out), {x, gamma, beta}, [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xin = t.value(ix);
    const Tensor<T>& gam = t.value(ig);
    for (std::size_t ch = 0; ch < c; ++ch) {
      T sum_g = 0, sum_gx = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xin.ptr() + (b * c + ch) * hw;
        const T* gp = g.ptr() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_g += gp[i];
          sum_gx += gp[i] * (p[i] - mu[ch]) * invstd[ch];
        }
      }
      if (t.requires_grad(ig)) t.grad_buffer(ig)[ch] += sum_gx;
      if (t.requires_grad(ibt)) t.grad_buffer(ibt)[ch] += sum_g;
      if (!t.requires_grad(ix)) continue;
      Tensor<T>& gx = t.grad_buffer(ix);
      const T k = gam[ch] * invstd[ch];
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xin.ptr() + (b * c + ch) * hw;
        const T* gp = g.ptr() + (b * c + ch) * hw;
        T* dx = gx.ptr() + (b * c + ch) * hw;
        if (!train) {
          for (std::size_t i = 0; i < hw; ++i) dx[i] += k * gp[i];
          continue;
        }
        const T inv_m = T{1} / static_cast<T>(m);
        for (std::size_t i = 0; i < hw; ++i) {
          const T xhat = (p[i] - mu[ch]) * invstd[ch];
          dx[i] += k * (gp[i] - inv_m * sum_g - xhat * inv_m * sum_gx);
        }
      }
    }
  });
}

template <typename T>
Var<T> layernorm_channels(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, const NormSpec& spec) {
  const Tensor<T>& xv = x.value();
  require_nchw(xv, "layernorm input");
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (c != spec.num_features) {
    throw Error(ErrorCode::kShapeMismatch, "layernorm: " + std::to_string(c) + " channels, spec has " +
                                               std::to_string(spec.num_features));
  }
  require_same_shape(gamma.value().shape(), Shape{c}, "layernorm gamma");
  require_same_shape(beta.value().shape(), Shape{c}, "layernorm beta");
  const T eps = static_cast<T>(spec.eps);
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();

  Tensor<T> out(xv.shape());
  std::vector<T> mu(n * hw), invstd(n * hw);
  for (std::size_t b = 0; b < n; ++b) {
    const T* base = xv.ptr() + b * c * hw;
    T* obase = out.ptr() + b * c * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      T s = 0;
      for (std::size_t ch = 0; ch < c; ++ch) s += base[ch * hw + i];
      const T mean_v = s / static_cast<T>(c);
      T ss = 0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T d = base[ch * hw + i] - mean_v;
        ss += d * d;
      }
      const T is = T{1} / std::sqrt(ss / static_cast<T>(c) + eps);
      mu[b * hw + i] = mean_v;
      invstd[b * hw + i] = is;
      for (std::size_t ch = 0; ch < c; ++ch) {
        obase[ch * hw + i] = gv[ch] * (base[ch * hw + i] - mean_v) * is + bv[ch];
      }
    }
  }

  const std::size_t ix = x.id(), ig = gamma.id(), ibt = beta.id();
  return x.tape().record(std::move(out), {x, gamma, beta}, [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xin = t.value(ix);
    const Tensor<T>& gam = t.value(ig);
    const bool need_x = t.requires_grad(ix);
    const bool need_g = t.requires_grad(ig);
    const bool need_b = t.requires_grad(ibt);
    T* dx = need_x ? t.grad_buffer(ix).ptr() : nullptr;
    T* dg = need_g ? t.grad_buffer(ig).ptr() : nullptr;
    T* db = need_b ? t.grad_buffer(ibt).ptr() : nullptr;
    const T inv_c = T{1} / static_cast<T>(c);
    for (std::size_t b = 0; b < n; ++b) {
      const T* base = xin.ptr() + b * c * hw;
      const T* gb = g.ptr() + b * c * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T m = mu[b * hw + i];
        const T is = invstd[b * hw + i];
        T sum_d = 0, sum_dx = 0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T xhat = (base[ch * hw + i] - m) * is;
          const T gv2 = gb[ch * hw + i];
          if (dg) dg[ch] += gv2 * xhat;
          if (db) db[ch] += gv2;
          const T d = gv2 * gam[ch];
          sum_d += d;
          sum_dx += d * xhat;
        }
        if (!dx) continue;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const T xhat = (base[ch * hw + i] - m) * is;
          const T d = gb[ch * hw + i] * gam[ch];
          dx[b * c * hw + ch * hw + i] += is * (d - inv_c * sum_d - xhat * inv_c * sum_dx);
        }
      }
    }
  });
}

template <typename T>
Var<T> grn(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const Tensor<T>& xv = x.value();
  require_nchw(xv, "grn input");
  const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  require_same_shape(gamma.value().shape(), Shape{c}, "grn gamma");
  require_same_shape(beta.value().shape(), Shape{c}, "grn beta");
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();

  std::vector<T> norms(n * c), denom(n);
  for (std::size_t b = 0; b < n; ++b) {
    T total = 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = xv.ptr() + (b * c + ch) * hw;
      T ss = 0;
      for (std::size_t i = 0; i < hw; ++i) ss += p[i] * p[i];
      norms[b * c + ch] = std::sqrt(ss);
      total += norms[b * c + ch];
    }
    denom[b] = total / static_cast<T>(c) + eps;
  }
  Tensor<T> out(xv.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T nc = norms[b * c + ch] / denom[b];
      const T* p = xv.ptr() + (b * c + ch) * hw;
      T* o = out.ptr() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) o[i] = gv[ch] * p[i] * nc + bv[ch] + p[i];
    }

  const std::size_t ix = x.id(), ig = gamma.id(), ibt = beta.id();
  return x.tape().record(std::move(out), {x, gamma, beta}, [=](Tape<T>& t, const Tensor<T>& g) {
    const Tensor<T>& xin = t.value(ix);
    const Tensor<T>& gam = t.value(ig);
    const bool need_x = t.requires_grad(ix);
    T* dgam = t.requires_grad(ig) ? t.grad_buffer(ig).ptr() : nullptr;
    T* dbeta = t.requires_grad(ibt) ? t.grad_buffer(ibt).ptr() : nullptr;
    std::vector<T> dn(c);
    for (std::size_t b = 0; b < n; ++b) {
      const T d = denom[b];
      T weighted = 0;  // sum_c dN_c * G_c
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* p = xin.ptr() + (b * c + ch) * hw;
        const T* gp = g.ptr() + (b * c + ch) * hw;
        T sgx = 0, sg = 0;
        for (std::size_t i = 0; i < hw; ++i) {
          sgx += gp[i] * p[i];
          sg += gp[i];
        }
        const T nc = norms[b * c + ch] / d;
        if (dgam) dgam[ch] += sgx * nc;
        if (dbeta) dbeta[ch] += sg;
        dn[ch] = gam[ch] * sgx;
        weighted += dn[ch] * norms[b * c + ch];
      }
      if (!need_x) continue;
      T* dx = t.grad_buffer(ix).ptr();
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T gnorm = norms[b * c + ch];
        const T nc = gnorm / d;
        const T dG = dn[ch] / d - weighted / (d * d * static_cast<T>(c));
        const T via_norm = gnorm > T{0} ? dG / gnorm : T{0};
        const T* p = xin.ptr() + (b * c + ch) * hw;
        const T* gp = g.ptr() + (b * c + ch) * hw;
        T* dxp = dx + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) dxp[i] += gp[i] * (gam[ch] * nc + T{1}) + via_norm * p[i];
      }
    }
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_nchw(av, "concat lhs");
  require_nchw(bv, "concat rhs");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3)) {
    throw Error(ErrorCode::kShapeMismatch, "concat_channels: " + shape_to_string(av.shape()) + " and " +
                                               shape_to_string(bv.shape()));
  }
  const std::size_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), hw = av.dim(2) * av.dim(3);
  Tensor<T> out(Shape{n, ca + cb, av.dim(2), av.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.ptr() + i * ca * hw, ca * hw, out.ptr() + i * (ca + cb) * hw);
    std::copy_n(bv.ptr() + i * cb * hw, cb * hw, out.ptr() + i * (ca + cb) * hw + ca * hw);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape<T>& t, const Tensor<T>& g) {
    for (std::size_t i = 0; i < n; ++i) {
      const T* src = g.ptr() + i * (ca + cb) * hw;
      if (t.requires_grad(ia)) {
        T* dst = t.grad_buffer(ia).ptr() + i * ca * hw;
        for (std::size_t k = 0; k < ca * hw; ++k) dst[k] += src[k];
      }
      if (t.requires_grad(ib)) {
        T* dst = t.grad_buffer(ib).ptr() + i * cb * hw;
        for (std::size_t k = 0; k < cb * hw; ++k) dst[k] += src[ca * hw + k];
      }
    }
  });
}

template <typename T>
Var<T> pad_reflect(const Var<T>& x, std::size_t pad_bottom, std::size_t pad_right) {
  const Tensor<T>& xv = x.value();
  require_nchw(xv, "pad_reflect input");
  const std::size_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (pad_bottom >= h || pad_right >= w) {
    throw Error(ErrorCode::kBadInputSize, "reflection padding must be smaller than the input extent");
  }
  const std::size_t ho = h + pad_bottom, wo = w + pad_right;
  auto reflect = [](std::size_t i, std::size_t extent) { return i < extent ? i : 2 * (extent - 1) - i; };
  Tensor<T> out(Shape{xv.dim(0), xv.dim(1), ho, wo});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx)
        out[(p * ho + y) * wo + xx] = xv[(p * h + reflect(y, h)) * w + reflect(xx, w)];
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t xx = 0; xx < wo; ++xx)
          gx[(p * h + reflect(y, h)) * w + reflect(xx, w)] += g[(p * ho + y) * wo + xx];
  });
}

template <typename T>
Var<T> crop(const Var<T>& x, std::size_t height, std::size_t width) {
  const Tensor<T>& xv = x.value();
  require_nchw(xv, "crop input");
  const std::size_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (height < 1 || width < 1 || height > h || width > w) {
    throw Error(ErrorCode::kShapeMismatch, "crop window larger than input");
  }
  Tensor<T> out(Shape{xv.dim(0), xv.dim(1), height, width});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < height; ++y)
      std::copy_n(xv.ptr() + (p * h + y) * w, width, out.ptr() + (p * height + y) * width);
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& gx = t.grad_buffer(ix);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t xx = 0; xx < width; ++xx) gx[(p * h + y) * w + xx] += g[(p * height + y) * width + xx];
  });
}

#define UNSEG_INSTANTIATE_NN_OPS(T)                                                                    \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const ConvSpec&);                \
  template Var<T> maxpool2d(const Var<T>&, std::size_t, std::size_t, std::size_t);                     \
  template Var<T> maxpool2(const Var<T>&);                                                             \
  template Var<T> upsample2(const Var<T>&, UpsampleMode);                                              \
  template Var<T> batchnorm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&,       \
                            const NormSpec&);                                                          \
  template Var<T> layernorm_channels(const Var<T>&, const Var<T>&, const Var<T>&, const NormSpec&);    \
  template Var<T> grn(const Var<T>&, const Var<T>&, const Var<T>&, T);                                 \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                                       \
  template Var<T> pad_reflect(const Var<T>&, std::size_t, std::size_t);                                \
  template Var<T> crop(const Var<T>&, std::size_t, std::size_t);

UNSEG_INSTANTIATE_NN_OPS(float)
UNSEG_INSTANTIATE_NN_OPS(double)

}  // namespace unseg
