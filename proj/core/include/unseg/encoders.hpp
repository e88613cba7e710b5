#pragma once

#include <memory>
#include <string>
#include <vector>

#include "unseg/layers.hpp"

namespace unseg {

enum class EncoderFamily { kResidual, kConvNeXtV2 };
enum class BlockKind { kBottleneck, kConvNeXt };

struct EncoderPreset {
  std::string name;
  EncoderFamily family = EncoderFamily::kResidual;
  BlockKind block = BlockKind::kBottleneck;
  std::size_t stem_width = 0;  // residual family only
  std::vector<std::size_t> stage_depths;
  // Output channels per stage (after the x4 bottleneck expansion for the
  // residual family).
  std::vector<std::size_t> stage_widths;

  void validate() const;
  // Total downsampling factor: 2^(stages + 1) for both families.
  std::size_t reduction() const;
};

// Presets accepted on the command line:
// resnet50, resnet101, convnextv2-base, convnextv2-huge, resnet-mini, convnext-mini.
EncoderPreset preset_by_name(const std::string& name);
std::vector<std::string> preset_names();

// Multi-scale encoder output. Residual encoders also expose the stride-2
// stem activation as their first feature; ConvNeXt encoders start at stride 4.
template <typename T>
struct FeaturePyramid {
  std::vector<Var<T>> features;
  std::vector<std::size_t> strides;
};

template <typename T>
class Encoder : public Module<T> {
 public:
  explicit Encoder(EncoderPreset preset) : preset_(std::move(preset)) {}

  const EncoderPreset& preset() const noexcept { return preset_; }
  // x: N x 3 x H x W with H, W divisible by preset().reduction().
  FeaturePyramid<T> encode(const Var<T>& x);
  virtual std::vector<std::size_t> feature_strides() const = 0;
  virtual std::vector<std::size_t> feature_channels() const = 0;
  // Parameters of the published backbone's ImageNet classification head
  // (global pool + [norm] + 1000-way linear), which this encoder omits.
  virtual std::size_t classifier_head_parameter_count() const = 0;

 protected:
  virtual FeaturePyramid<T> encode_impl(const Var<T>& x) = 0;

 private:
  EncoderPreset preset_;
};

template <typename T>
std::unique_ptr<Encoder<T>> make_encoder(const EncoderPreset& preset, InitContext& ctx);

// Random initialisation from `seed`.
template <typename T>
std::unique_ptr<Encoder<T>> build_encoder(const EncoderPreset& preset, std::uint64_t seed);

struct ParameterCounts {
  std::size_t encoder = 0;
  std::size_t classifier_head = 0;
  std::size_t with_classifier() const { return encoder + classifier_head; }
};

// Built in meta mode: shapes only, no weight storage.
ParameterCounts count_encoder_parameters(const EncoderPreset& preset);

}  // namespace unseg
