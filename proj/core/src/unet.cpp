#include "unseg/unet.hpp"

#include <algorithm>

#include "unseg/ops.hpp"

namespace unseg {

std::size_t UNetConfig::decoder_stages() const {
  return encoder.stage_depths.size() + 1;
}

std::vector<std::size_t> UNetConfig::resolved_decoder_widths() const {
  if (!decoder_widths.empty()) {
    if (decoder_widths.size() != decoder_stages()) {
      throw Error(ErrorCode::kInvalidArgument, "expected " + std::to_string(decoder_stages()) + " decoder widths, got " +
                                                   std::to_string(decoder_widths.size()));
    }
    return decoder_widths;
  }
  // Encoder width by stride.
  std::vector<std::pair<std::size_t, std::size_t>> by_stride;
  if (encoder.family == EncoderFamily::kResidual) by_stride.emplace_back(2, encoder.stem_width);
  for (std::size_t s = 0; s < encoder.stage_widths.size(); ++s) by_stride.emplace_back(std::size_t{4} << s, encoder.stage_widths[s]);

  std::vector<std::size_t> widths;
  std::size_t prev = kMinDecoderWidth;
  for (std::size_t stride = encoder.reduction() / 2; stride >= 1; stride /= 2) {
    std::size_t w = prev;
    for (auto [st, ch] : by_stride) {
      if (st == stride) w = ch / 2;
    }
    w = std::max(w, kMinDecoderWidth);
    widths.push_back(w);
    prev = w;
  }
  return widths;
}

InputSize UNetConfig::padded_size() const {
  const std::size_t r = encoder.reduction();
  auto up = [r](std::size_t v) { return (v + r - 1) / r * r; };
  return {up(input_size.height), up(input_size.width)};
}

std::size_t default_batch_size(const std::string& preset_name) {
  if (preset_name == "resnet50") return 12;
  if (preset_name == "resnet101") return 8;
  if (preset_name == "convnextv2-base") return 24;
  if (preset_name == "convnextv2-huge") return 5;
  return 8;
}

InputSize default_input_size(const std::string& preset_name) {
  if (preset_name == "resnet50") return {270, 270};
  if (preset_name == "resnet101") return {540, 540};
  if (preset_name == "convnextv2-base") return {384, 384};
  if (preset_name == "convnextv2-huge") return {512, 512};
  return {64, 64};
}

template <typename T>
DecoderBlock<T>::DecoderBlock(std::size_t in_channels, std::size_t skip_channels, std::size_t out_channels,
                              InitContext& ctx)
    : skip_channels_(skip_channels) {
  conv1_ = &this->add_module("conv1", std::make_unique<Conv2d<T>>(
                                          ConvSpec{in_channels + skip_channels, out_channels, 3, 1, 1, 1, false}, ctx));
  bn1_ = &this->add_module("bn1", std::make_unique<BatchNorm2d<T>>(out_channels, ctx));
  conv2_ = &this->add_module("conv2", std::make_unique<Conv2d<T>>(ConvSpec{out_channels, out_channels, 3, 1, 1, 1, false}, ctx));
  bn2_ = &this->add_module("bn2", std::make_unique<BatchNorm2d<T>>(out_channels, ctx));
}

template <typename T>
Var<T> DecoderBlock<T>::operator()(const Var<T>& x, const Var<T>* skip) {
  Var<T> y = upsample2(x, UpsampleMode::kBilinear);
  if (skip != nullptr) y = concat_channels(y, *skip);
  y = relu((*bn1_)((*conv1_)(y)));
  return relu((*bn2_)((*conv2_)(y)));
}

template <typename T>
UNet<T>::UNet(UNetConfig config, InitContext& ctx) : config_(std::move(config)) {
  if (config_.input_size.height < 1 || config_.input_size.width < 1) {
    throw Error(ErrorCode::kBadInputSize, "input size must be positive");
  }
  encoder_ = &this->add_module("encoder", make_encoder<T>(config_.encoder, ctx));
  const std::vector<std::size_t> widths = config_.resolved_decoder_widths();
  const std::vector<std::size_t> strides = encoder_->feature_strides();
  const std::vector<std::size_t> channels = encoder_->feature_channels();

  std::size_t in = channels.back();
  std::size_t stride = config_.encoder.reduction();
  for (std::size_t i = 0; i < widths.size(); ++i) {
    stride /= 2;
    int skip = -1;
    for (std::size_t f = 0; f + 1 < strides.size(); ++f) {
      if (strides[f] == stride) skip = static_cast<int>(f);
    }
    const std::size_t skip_ch = skip >= 0 ? channels[static_cast<std::size_t>(skip)] : 0;
    decoder_.push_back(&this->add_module("decoder" + std::to_string(i),
                                         std::make_unique<DecoderBlock<T>>(in, skip_ch, widths[i], ctx)));
    skip_index_.push_back(skip);
    in = widths[i];
  }
  head_ = &this->add_module("head", std::make_unique<Conv2d<T>>(ConvSpec{in, 1, 1, 1, 0, 1, true}, ctx));
  if (ctx.mode == InitMode::kRandom) {
    if (config_.zero_init_head) {
      head_->weight().value.fill(T{0});
      head_->bias()->value.fill(T{0});
    } else {
      head_->bias()->value.fill(static_cast<T>(config_.head_bias));
    }
  }
}

template <typename T>
Var<T> UNet<T>::forward(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != config_.input_size.height || s[3] != config_.input_size.width) {
    throw Error(ErrorCode::kBadInputSize, "expected N x 3 x " + std::to_string(config_.input_size.height) + " x " +
                                              std::to_string(config_.input_size.width) + ", got " + shape_to_string(s));
  }
  const InputSize padded = config_.padded_size();
  Var<T> input = x;
  if (padded != config_.input_size) {
    input = pad_reflect(x, padded.height - s[2], padded.width - s[3]);
  }
  FeaturePyramid<T> pyramid = encoder_->encode(input);
  Var<T> y = pyramid.features.back();
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    const Var<T>* skip = skip_index_[i] >= 0 ? &pyramid.features[static_cast<std::size_t>(skip_index_[i])] : nullptr;
    y = (*decoder_[i])(y, skip);
  }
  Var<T> logits = (*head_)(y);
  if (padded != config_.input_size) logits = crop(logits, s[2], s[3]);
  return logits;
}

template <typename T>
Tensor<T> UNet<T>::predict_logits(const Tensor<T>& x) {
  const NormMode previous = this->mode();
  this->set_mode(NormMode::kEval);
  Tape<T> tape(false);
  Tensor<T> out = forward(tape.leaf(x)).value();
  this->set_mode(previous);
  return out;
}

template <typename T>
Tensor<T> UNet<T>::predict_proba(const Tensor<T>& x) {
  return sigmoid(predict_logits(x));
}

template <typename T>
std::unique_ptr<UNet<T>> build_unet(const UNetConfig& config, std::uint64_t seed) {
  InitContext ctx = InitContext::random(seed);
  return std::make_unique<UNet<T>>(config, ctx);
}

template <typename T>
Tensor<T> threshold_probabilities(const Tensor<T>& proba, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::kOutOfRange, "threshold must lie in (0, 1)");
  }
  Tensor<T> mask(proba.shape());
  for (std::size_t i = 0; i < proba.numel(); ++i) {
    mask[i] = static_cast<double>(proba[i]) >= threshold ? T{1} : T{0};
  }
  return mask;
}

template <typename T>
Tensor<T> predict_mask(UNet<T>& model, const Tensor<T>& images, double threshold) {
  return threshold_probabilities(model.predict_proba(images), threshold);
}

template class DecoderBlock<float>;
template class DecoderBlock<double>;
template class UNet<float>;
template class UNet<double>;
template std::unique_ptr<UNet<float>> build_unet(const UNetConfig&, std::uint64_t);
template std::unique_ptr<UNet<double>> build_unet(const UNetConfig&, std::uint64_t);
template Tensor<float> predict_mask(UNet<float>&, const Tensor<float>&, double);
template Tensor<double> predict_mask(UNet<double>&, const Tensor<double>&, double);
template Tensor<float> threshold_probabilities(const Tensor<float>&, double);
template Tensor<double> threshold_probabilities(const Tensor<double>&, double);

}  // namespace unseg
