#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "unseg/encoders.hpp"

namespace unseg {

struct InputSize {
  std::size_t height = 0;
  std::size_t width = 0;
  friend bool operator==(const InputSize&, const InputSize&) = default;
};

struct UNetConfig {
  EncoderPreset encoder;
  // One width per decoder stage, deepest first. Empty selects the default:
  // half the encoder width at the stage's stride, or the previous stage's
  // width where no encoder feature exists, never below kMinDecoderWidth.
  std::vector<std::size_t> decoder_widths;
  InputSize input_size{64, 64};
  // Initial head bias, roughly the logit of the crack-pixel prior. Starting
  // near the prior matters when training runs only a few hundred steps.
  double head_bias = -3.0;
  // Zero head weights and bias: logits start at exactly 0.
  bool zero_init_head = false;

  static constexpr std::size_t kMinDecoderWidth = 8;

  // Number of decoder stages: one per x2 upsampling back to full resolution.
  std::size_t decoder_stages() const;
  std::vector<std::size_t> resolved_decoder_widths() const;
  // input_size rounded up to a multiple of encoder.reduction().
  InputSize padded_size() const;
};

// Standard batch sizes for the named presets; 8 for anything else.
std::size_t default_batch_size(const std::string& preset_name);
// Default model resolution for the named presets.
InputSize default_input_size(const std::string& preset_name);

template <typename T>
class DecoderBlock : public Module<T> {
 public:
  // upsample2(bilinear) -> concat(skip) -> 2 x (3x3 conv + batchnorm + ReLU)
  DecoderBlock(std::size_t in_channels, std::size_t skip_channels, std::size_t out_channels, InitContext& ctx);
  Var<T> operator()(const Var<T>& x, const Var<T>* skip);
  std::size_t skip_channels() const noexcept { return skip_channels_; }

 private:
  std::size_t skip_channels_;
  Conv2d<T>* conv1_;
  BatchNorm2d<T>* bn1_;
  Conv2d<T>* conv2_;
  BatchNorm2d<T>* bn2_;
};

template <typename T>
class UNet : public Module<T> {
 public:
  UNet(UNetConfig config, InitContext& ctx);

  const UNetConfig& config() const noexcept { return config_; }
  Encoder<T>& encoder() { return *encoder_; }

  // x: N x 3 x H x W with (H, W) == config().input_size. Inputs that are not
  // a multiple of the encoder reduction are reflection-padded on the
  // bottom/right and the logits cropped back.
  Var<T> forward(const Var<T>& x);

  // Eval-mode inference without gradient recording; restores the previous mode.
  Tensor<T> predict_logits(const Tensor<T>& x);
  Tensor<T> predict_proba(const Tensor<T>& x);

 private:
  UNetConfig config_;
  Encoder<T>* encoder_;
  std::vector<DecoderBlock<T>*> decoder_;
  // Encoder feature index consumed by each decoder stage, or -1.
  std::vector<int> skip_index_;
  Conv2d<T>* head_;
};

template <typename T>
std::unique_ptr<UNet<T>> build_unet(const UNetConfig& config, std::uint64_t seed);

// sigmoid(logits) >= threshold, as 0/1 values with the logits' shape.
// threshold must lie in (0, 1).
template <typename T>
Tensor<T> predict_mask(UNet<T>& model, const Tensor<T>& images, double threshold = 0.5);
template <typename T>
Tensor<T> threshold_probabilities(const Tensor<T>& proba, double threshold);

extern template class DecoderBlock<float>;
extern template class DecoderBlock<double>;
extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace unseg
