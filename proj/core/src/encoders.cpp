#include "unseg/encoders.hpp"

#include "unseg/ops.hpp"

namespace unseg {

void EncoderPreset::validate() const {
  if (stage_depths.empty() || stage_depths.size() != stage_widths.size()) {
    throw Error(ErrorCode::kInvalidArgument, "preset '" + name + "': stage depths and widths must be non-empty and equal length");
  }
  for (std::size_t i = 0; i < stage_depths.size(); ++i) {
    if (stage_depths[i] < 1 || stage_widths[i] < 1) {
      throw Error(ErrorCode::kInvalidArgument, "preset '" + name + "': empty stage");
    }
  }
  if (family == EncoderFamily::kResidual) {
    if (stem_width < 1) throw Error(ErrorCode::kInvalidArgument, "preset '" + name + "': residual stem width");
    for (std::size_t w : stage_widths) {
      if (w % 4 != 0) throw Error(ErrorCode::kInvalidArgument, "preset '" + name + "': bottleneck widths must be divisible by 4");
    }
  }
}

std::size_t EncoderPreset::reduction() const {
  return std::size_t{1} << (stage_depths.size() + 1);
}

EncoderPreset preset_by_name(const std::string& name) {
  const auto residual = [&](std::vector<std::size_t> depths, std::vector<std::size_t> widths, std::size_t stem) {
    return EncoderPreset{name, EncoderFamily::kResidual, BlockKind::kBottleneck, stem, std::move(depths), std::move(widths)};
  };
  const auto convnext = [&](std::vector<std::size_t> depths, std::vector<std::size_t> widths) {
    return EncoderPreset{name, EncoderFamily::kConvNeXtV2, BlockKind::kConvNeXt, 0, std::move(depths), std::move(widths)};
  };
  if (name == "resnet50") return residual({3, 4, 6, 3}, {256, 512, 1024, 2048}, 64);
  if (name == "resnet101") return residual({3, 4, 23, 3}, {256, 512, 1024, 2048}, 64);
  if (name == "convnextv2-base") return convnext({3, 3, 27, 3}, {128, 256, 512, 1024});
  if (name == "convnextv2-huge") return convnext({3, 3, 27, 3}, {352, 704, 1408, 2816});
  if (name == "resnet-mini") return residual({2, 2, 2, 2}, {16, 32, 64, 128}, 8);
  if (name == "convnext-mini") return convnext({1, 1, 2, 1}, {16, 32, 64, 128});
  throw Error(ErrorCode::kUnknownPreset, "'" + name + "'");
}

std::vector<std::string> preset_names() {
  return {"resnet50", "resnet101", "convnextv2-base", "convnextv2-huge", "resnet-mini", "convnext-mini"};
}

template <typename T>
FeaturePyramid<T> Encoder<T>::encode(const Var<T>& x) {
  const Shape& s = x.shape();
  const std::size_t r = preset_.reduction();
  if (s.size() != 4 || s[1] != 3 || s[2] % r != 0 || s[3] % r != 0) {
    throw Error(ErrorCode::kBadSpatialDims, "encoder '" + preset_.name + "' needs N x 3 x H x W with H, W divisible by " +
                                                std::to_string(r) + ", got " + shape_to_string(s));
  }
  return encode_impl(x);
}

namespace {

ConvSpec conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad, bool bias,
              std::size_t groups = 1) {
  return ConvSpec{cin, cout, k, stride, pad, groups, bias};
}

// 1x1 reduce -> 3x3 (strided) -> 1x1 expand, projection shortcut when the
// shape changes.
template <typename T>
class Bottleneck : public Module<T> {
 public:
  Bottleneck(std::size_t in, std::size_t out, std::size_t stride, InitContext& ctx) {
    const std::size_t mid = out / 4;
    conv1_ = &this->add_module("conv1", std::make_unique<Conv2d<T>>(conv(in, mid, 1, 1, 0, false), ctx));
    bn1_ = &this->add_module("bn1", std::make_unique<BatchNorm2d<T>>(mid, ctx));
    conv2_ = &this->add_module("conv2", std::make_unique<Conv2d<T>>(conv(mid, mid, 3, stride, 1, false), ctx));
    bn2_ = &this->add_module("bn2", std::make_unique<BatchNorm2d<T>>(mid, ctx));
    conv3_ = &this->add_module("conv3", std::make_unique<Conv2d<T>>(conv(mid, out, 1, 1, 0, false), ctx));
    bn3_ = &this->add_module("bn3", std::make_unique<BatchNorm2d<T>>(out, ctx));
    if (stride != 1 || in != out) {
      proj_ = &this->add_module("proj", std::make_unique<Conv2d<T>>(conv(in, out, 1, stride, 0, false), ctx));
      proj_bn_ = &this->add_module("proj_bn", std::make_unique<BatchNorm2d<T>>(out, ctx));
    }
  }

  Var<T> operator()(const Var<T>& x) {
    Var<T> y = relu((*bn1_)((*conv1_)(x)));
    y = relu((*bn2_)((*conv2_)(y)));
    y = (*bn3_)((*conv3_)(y));
    const Var<T> shortcut = proj_ ? (*proj_bn_)((*proj_)(x)) : x;
    return relu(add(y, shortcut));
  }

 private:
  Conv2d<T>* conv1_;
  BatchNorm2d<T>* bn1_;
  Conv2d<T>* conv2_;
  BatchNorm2d<T>* bn2_;
  Conv2d<T>* conv3_;
  BatchNorm2d<T>* bn3_;
  Conv2d<T>* proj_ = nullptr;
  BatchNorm2d<T>* proj_bn_ = nullptr;
};

template <typename T>
class ResidualEncoder : public Encoder<T> {
 public:
  ResidualEncoder(const EncoderPreset& preset, InitContext& ctx) : Encoder<T>(preset) {
    stem_ = &this->add_module("stem", std::make_unique<Conv2d<T>>(conv(3, preset.stem_width, 7, 2, 3, false), ctx));
    stem_bn_ = &this->add_module("stem_bn", std::make_unique<BatchNorm2d<T>>(preset.stem_width, ctx));
    std::size_t in = preset.stem_width;
    for (std::size_t s = 0; s < preset.stage_depths.size(); ++s) {
      std::vector<Bottleneck<T>*> blocks;
      for (std::size_t b = 0; b < preset.stage_depths[s]; ++b) {
        const std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
        const std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(b);
        blocks.push_back(&this->add_module(name, std::make_unique<Bottleneck<T>>(in, preset.stage_widths[s], stride, ctx)));
        in = preset.stage_widths[s];
      }
      stages_.push_back(std::move(blocks));
    }
  }

  std::vector<std::size_t> feature_strides() const override {
    std::vector<std::size_t> out{2};
    for (std::size_t s = 0; s < stages_.size(); ++s) out.push_back(std::size_t{4} << s);
    return out;
  }

  std::vector<std::size_t> feature_channels() const override {
    std::vector<std::size_t> out{this->preset().stem_width};
    for (std::size_t w : this->preset().stage_widths) out.push_back(w);
    return out;
  }

  std::size_t classifier_head_parameter_count() const override {
    return this->preset().stage_widths.back() * 1000 + 1000;
  }

 protected:
  FeaturePyramid<T> encode_impl(const Var<T>& x) override {
    FeaturePyramid<T> pyramid;
    Var<T> y = relu((*stem_bn_)((*stem_)(x)));
    pyramid.features.push_back(y);
    y = maxpool2d(y, 3, 2, 1);
    for (auto& blocks : stages_) {
      for (Bottleneck<T>* block : blocks) y = (*block)(y);
      pyramid.features.push_back(y);
    }
    pyramid.strides = feature_strides();
    return pyramid;
  }

 private:
  Conv2d<T>* stem_;
  BatchNorm2d<T>* stem_bn_;
  std::vector<std::vector<Bottleneck<T>*>> stages_;
};

// depthwise 7x7 -> layernorm -> 1x1 expand x4 -> GELU -> GRN -> 1x1 reduce, residual add.
template <typename T>
class ConvNeXtBlock : public Module<T> {
 public:
  ConvNeXtBlock(std::size_t dim, InitContext& ctx) {
    dw_ = &this->add_module("dwconv", std::make_unique<Conv2d<T>>(conv(dim, dim, 7, 1, 3, true, dim), ctx));
    norm_ = &this->add_module("norm", std::make_unique<LayerNorm2d<T>>(dim, ctx));
    pw1_ = &this->add_module("pwconv1", std::make_unique<Conv2d<T>>(conv(dim, 4 * dim, 1, 1, 0, true), ctx));
    grn_ = &this->add_module("grn", std::make_unique<Grn<T>>(4 * dim, ctx));
    pw2_ = &this->add_module("pwconv2", std::make_unique<Conv2d<T>>(conv(4 * dim, dim, 1, 1, 0, true), ctx));
  }

  Var<T> operator()(const Var<T>& x) {
    Var<T> y = (*norm_)((*dw_)(x));
    y = (*grn_)(gelu((*pw1_)(y)));
    return add(x, (*pw2_)(y));
  }

 private:
  Conv2d<T>* dw_;
  LayerNorm2d<T>* norm_;
  Conv2d<T>* pw1_;
  Grn<T>* grn_;
  Conv2d<T>* pw2_;
};

template <typename T>
class ConvNeXtEncoder : public Encoder<T> {
 public:
  ConvNeXtEncoder(const EncoderPreset& preset, InitContext& ctx) : Encoder<T>(preset) {
    const auto& widths = preset.stage_widths;
    stem_ = &this->add_module("stem", std::make_unique<Conv2d<T>>(conv(3, widths[0], 4, 4, 0, true), ctx));
    stem_norm_ = &this->add_module("stem_norm", std::make_unique<LayerNorm2d<T>>(widths[0], ctx));
    for (std::size_t s = 0; s < preset.stage_depths.size(); ++s) {
      Stage stage;
      if (s > 0) {
        const std::string prefix = "downsample" + std::to_string(s);
        stage.down_norm = &this->add_module(prefix + ".norm", std::make_unique<LayerNorm2d<T>>(widths[s - 1], ctx));
        stage.down = &this->add_module(prefix + ".conv", std::make_unique<Conv2d<T>>(conv(widths[s - 1], widths[s], 2, 2, 0, true), ctx));
      }
      for (std::size_t b = 0; b < preset.stage_depths[s]; ++b) {
        const std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(b);
        stage.blocks.push_back(&this->add_module(name, std::make_unique<ConvNeXtBlock<T>>(widths[s], ctx)));
      }
      stages_.push_back(std::move(stage));
    }
  }

  std::vector<std::size_t> feature_strides() const override {
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < stages_.size(); ++s) out.push_back(std::size_t{4} << s);
    return out;
  }

  std::vector<std::size_t> feature_channels() const override { return this->preset().stage_widths; }

  std::size_t classifier_head_parameter_count() const override {
    const std::size_t c = this->preset().stage_widths.back();
    return 2 * c + c * 1000 + 1000;
  }

 protected:
  FeaturePyramid<T> encode_impl(const Var<T>& x) override {
    FeaturePyramid<T> pyramid;
    Var<T> y = (*stem_norm_)((*stem_)(x));
    for (Stage& stage : stages_) {
      if (stage.down) y = (*stage.down)((*stage.down_norm)(y));
      for (ConvNeXtBlock<T>* block : stage.blocks) y = (*block)(y);
      pyramid.features.push_back(y);
    }
    pyramid.strides = feature_strides();
    return pyramid;
  }

 private:
  struct Stage {
    LayerNorm2d<T>* down_norm = nullptr;
    Conv2d<T>* down = nullptr;
    std::vector<ConvNeXtBlock<T>*> blocks;
  };
  Conv2d<T>* stem_;
  LayerNorm2d<T>* stem_norm_;
  std::vector<Stage> stages_;
};

}  // namespace

template <typename T>
std::unique_ptr<Encoder<T>> make_encoder(const EncoderPreset& preset, InitContext& ctx) {
  preset.validate();
  if (preset.family == EncoderFamily::kResidual) return std::make_unique<ResidualEncoder<T>>(preset, ctx);
  return std::make_unique<ConvNeXtEncoder<T>>(preset, ctx);
}

template <typename T>
std::unique_ptr<Encoder<T>> build_encoder(const EncoderPreset& preset, std::uint64_t seed) {
  InitContext ctx = InitContext::random(seed);
  return make_encoder<T>(preset, ctx);
}

ParameterCounts count_encoder_parameters(const EncoderPreset& preset) {
  InitContext ctx = InitContext::meta();
  auto enc = make_encoder<float>(preset, ctx);
  return {enc->parameter_count(), enc->classifier_head_parameter_count()};
}

template class Encoder<float>;
template class Encoder<double>;
template std::unique_ptr<Encoder<float>> make_encoder(const EncoderPreset&, InitContext&);
template std::unique_ptr<Encoder<double>> make_encoder(const EncoderPreset&, InitContext&);
template std::unique_ptr<Encoder<float>> build_encoder(const EncoderPreset&, std::uint64_t);
template std::unique_ptr<Encoder<double>> build_encoder(const EncoderPreset&, std::uint64_t);

}  // namespace unseg
