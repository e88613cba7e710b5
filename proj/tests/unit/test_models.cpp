#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "error_code.hpp"
#include "unseg/encoders.hpp"
#include "unseg/ops.hpp"
#include "unseg/unet.hpp"

namespace unseg {
namespace {

using testing::code_of;

Tensor<float> ramp(const Shape& shape) {
  Tensor<float> t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(std::sin(0.37 * static_cast<double>(i)));
  return t;
}

// Published totals for the torchvision / ConvNeXt V2 classification models.
TEST(Presets, CountsMatchPublishedClassifiers) {
  EXPECT_EQ(count_encoder_parameters(preset_by_name("resnet50")).with_classifier(), 25'557'032u);
  EXPECT_EQ(count_encoder_parameters(preset_by_name("resnet101")).with_classifier(), 44'549'160u);
  EXPECT_EQ(count_encoder_parameters(preset_by_name("convnextv2-base")).with_classifier(), 88'717'800u);
  EXPECT_EQ(count_encoder_parameters(preset_by_name("convnextv2-huge")).with_classifier(), 660'289'640u);
}

TEST(Presets, EncoderOnlyExcludesClassifier) {
  const auto c = count_encoder_parameters(preset_by_name("resnet50"));
  EXPECT_EQ(c.classifier_head, 2048u * 1000u + 1000u);
  EXPECT_EQ(c.encoder, 25'557'032u - c.classifier_head);
}

TEST(Presets, UnknownNameThrows) {
  EXPECT_EQ(code_of([] { (void)preset_by_name("resnet18"); }), ErrorCode::kUnknownPreset);
  const auto names = preset_names();
  EXPECT_EQ(std::set<std::string>(names.begin(), names.end()),
            (std::set<std::string>{"resnet50", "resnet101", "convnextv2-base", "convnextv2-huge", "resnet-mini",
                                   "convnext-mini"}));
}

TEST(Presets, DefaultBatchSizesAndInputs) {
  EXPECT_EQ(default_batch_size("resnet50"), 12u);
  EXPECT_EQ(default_batch_size("resnet101"), 8u);
  EXPECT_EQ(default_batch_size("convnextv2-base"), 24u);
  EXPECT_EQ(default_batch_size("convnextv2-huge"), 5u);
  EXPECT_EQ(default_input_size("resnet-mini"), (InputSize{64, 64}));
}

TEST(Encoder, ResidualPyramidStridesAndChannels) {
  auto enc = build_encoder<float>(preset_by_name("resnet-mini"), 1);
  Tape<float> tape(false);
  auto pyr = enc->encode(tape.leaf(ramp({1, 3, 64, 64})));
  ASSERT_EQ(pyr.features.size(), pyr.strides.size());
  EXPECT_EQ(pyr.strides, enc->feature_strides());
  EXPECT_EQ(pyr.strides.front(), 2u);
  for (std::size_t i = 0; i < pyr.features.size(); ++i) {
    EXPECT_EQ(pyr.features[i].shape()[1], enc->feature_channels()[i]);
    EXPECT_EQ(pyr.features[i].shape()[2], 64u / pyr.strides[i]);
  }
}

TEST(Encoder, ConvNextStartsAtStride4) {
  auto enc = build_encoder<float>(preset_by_name("convnext-mini"), 1);
  EXPECT_EQ(enc->feature_strides().front(), 4u);
  Tape<float> tape(false);
  auto x = tape.leaf(ramp({1, 3, 60, 64}));
  EXPECT_EQ(code_of([&] { (void)enc->encode(x); }), ErrorCode::kBadSpatialDims);
}

class UNetShapes : public ::testing::TestWithParam<std::string> {};

TEST_P(UNetShapes, LogitsMatchInputResolution) {
  for (InputSize size : {InputSize{64, 64}, InputSize{50, 70}}) {
    UNetConfig cfg{preset_by_name(GetParam()), {}, size};
    auto model = build_unet<float>(cfg, 3);
    Tape<float> tape;
    auto y = model->forward(tape.leaf(ramp({2, 3, size.height, size.width})));
    EXPECT_EQ(y.shape(), (Shape{2, 1, size.height, size.width}));
    EXPECT_TRUE(y.value().all_finite());
  }
}

TEST_P(UNetShapes, WrongInputSizeThrows) {
  auto model = build_unet<float>(UNetConfig{preset_by_name(GetParam())}, 3);
  Tape<float> tape;
  auto x = tape.leaf(ramp({1, 3, 32, 32}));
  EXPECT_EQ(code_of([&] { (void)model->forward(x); }), ErrorCode::kBadInputSize);
}

TEST_P(UNetShapes, ZeroHeadGivesHalfProbabilities) {
  UNetConfig cfg{preset_by_name(GetParam())};
  cfg.zero_init_head = true;
  auto model = build_unet<float>(cfg, 4);
  const auto p = model->predict_proba(ramp({1, 3, 64, 64}));
  for (float v : p.data()) ASSERT_EQ(v, 0.5f);
  // Inclusive threshold: exactly 0.5 counts as crack.
  const auto m = predict_mask(*model, ramp({1, 3, 64, 64}), 0.5);
  for (float v : m.data()) ASSERT_EQ(v, 1.0f);
}

TEST_P(UNetShapes, ParameterNamesAreUniqueAndOrdered) {
  auto a = build_unet<float>(UNetConfig{preset_by_name(GetParam())}, 5);
  auto b = build_unet<float>(UNetConfig{preset_by_name(GetParam())}, 5);
  std::set<std::string> seen;
  const auto pa = a->named_parameters();
  const auto pb = b->named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(seen.insert(pa[i].name).second) << pa[i].name;
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_EQ(pa[i].param->value, pb[i].param->value);
  }
}

INSTANTIATE_TEST_SUITE_P(Minis, UNetShapes, ::testing::Values("resnet-mini", "convnext-mini"));

TEST(UNet, PredictRestoresTrainMode) {
  auto model = build_unet<float>(UNetConfig{preset_by_name("resnet-mini")}, 6);
  model->set_mode(NormMode::kTrain);
  (void)model->predict_logits(ramp({1, 3, 64, 64}));
  EXPECT_EQ(model->mode(), NormMode::kTrain);
}

TEST(UNet, ThresholdMustBeOpenUnitInterval) {
  auto model = build_unet<float>(UNetConfig{preset_by_name("resnet-mini")}, 6);
  EXPECT_EQ(code_of([&] { (void)predict_mask(*model, ramp({1, 3, 64, 64}), 1.0); }), ErrorCode::kOutOfRange);
  EXPECT_EQ(code_of([&] { (void)predict_mask(*model, ramp({1, 3, 64, 64}), 0.0); }), ErrorCode::kOutOfRange);
}

TEST(UNet, DecoderHasOneStagePerUpsampling) {
  UNetConfig r{preset_by_name("resnet-mini")};
  UNetConfig c{preset_by_name("convnext-mini")};
  EXPECT_EQ(r.decoder_stages(), r.encoder.stage_depths.size() + 1);
  EXPECT_EQ(c.decoder_stages(), c.encoder.stage_depths.size() + 1);
  for (auto w : r.resolved_decoder_widths()) EXPECT_GE(w, UNetConfig::kMinDecoderWidth);
  r.decoder_widths = {8};
  EXPECT_EQ(code_of([&] { (void)build_unet<float>(r, 0); }), ErrorCode::kInvalidArgument);
}

TEST(UNet, DoubleModelAgreesWithFloat) {
  UNetConfig cfg{preset_by_name("convnext-mini")};
  auto f = build_unet<float>(cfg, 7);
  auto d = build_unet<double>(cfg, 7);
  const auto x = ramp({1, 3, 64, 64});
  const auto yf = f->predict_logits(x);
  const auto yd = d->predict_logits(x.cast<double>());
  for (std::size_t i = 0; i < yf.numel(); ++i) ASSERT_NEAR(yf[i], yd[i], 1e-3);
}

}  // namespace
}  // namespace unseg
