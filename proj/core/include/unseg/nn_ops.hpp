#pragma once

#include <cstddef>
#include <optional>

#include "unseg/autograd.hpp"

namespace unseg {

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;  // 1 = dense, in_channels = depthwise
  bool has_bias = true;

  void validate() const;
  Shape weight_shape() const { return {out_channels, in_channels / groups, kernel, kernel}; }
  std::size_t output_extent(std::size_t input) const;
};

enum class NormKind { kBatchNorm, kLayerNormChannels };
enum class NormMode { kTrain, kEval };

struct NormSpec {
  NormKind kind = NormKind::kBatchNorm;
  std::size_t num_features = 1;
  double eps = 1e-5;
  double momentum = 0.1;  // batchnorm only
  NormMode mode = NormMode::kTrain;

  static NormSpec batchnorm(std::size_t c) { return {NormKind::kBatchNorm, c, 1e-5, 0.1, NormMode::kTrain}; }
  static NormSpec layernorm(std::size_t c) { return {NormKind::kLayerNormChannels, c, 1e-6, 0.0, NormMode::kTrain}; }
};

// x: (N, Cin, H, W), weight: spec.weight_shape(), bias: (Cout) or invalid Var.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvSpec& spec);

template <typename T>
Var<T> maxpool2d(const Var<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding);
// 2x2 stride-2 pooling; H and W must be even (kOddSpatialDim).
template <typename T>
Var<T> maxpool2(const Var<T>& x);

enum class UpsampleMode { kNearest, kBilinear };
// Bilinear uses half-pixel centres (align_corners = false).
template <typename T>
Var<T> upsample2(const Var<T>& x, UpsampleMode mode);

// Train mode normalises with batch statistics over (N,H,W) and updates the
// running stats in place (unbiased variance, momentum as given). Eval mode
// is the affine map defined by the running stats.
template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                 Tensor<T>& running_var, const NormSpec& spec);

// Normalises the channel vector at every spatial position.
template <typename T>
Var<T> layernorm_channels(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, const NormSpec& spec);

// Global response normalisation:
//   G_c = ||x_c||_2 over (H,W), N_c = G_c / (mean_c G + eps),
//   out = gamma * x * N + beta + x
template <typename T>
Var<T> grn(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-6));

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

// Reflection padding (edge not repeated) on the bottom and right borders.
template <typename T>
Var<T> pad_reflect(const Var<T>& x, std::size_t pad_bottom, std::size_t pad_right);
// Keeps the top-left (height, width) window.
template <typename T>
Var<T> crop(const Var<T>& x, std::size_t height, std::size_t width);

}  // namespace unseg
