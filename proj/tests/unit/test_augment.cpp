#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "error_code.hpp"
#include "unseg/augment.hpp"
#include "unseg/metrics.hpp"

namespace unseg {
namespace {

using testing::code_of;

Sample random_sample(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Sample s{Image(h, w, 3), Image(h, w, 1), "s"};
  for (auto& p : s.image.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  for (auto& p : s.mask.pixels) p = rng.bernoulli(0.2) ? 1 : 0;
  return s;
}

// Image channels all equal 255 * mask, so image and mask must move together.
Sample coupled_sample(int h, int w, std::uint64_t seed) {
  Sample s = random_sample(h, w, seed);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) s.image.at(y, x, c) = s.mask.at(y, x) ? 255 : 0;
  return s;
}

void expect_coupled(const Sample& s) {
  for (int y = 0; y < s.mask.height; ++y)
    for (int x = 0; x < s.mask.width; ++x) ASSERT_EQ(s.image.at(y, x, 0), s.mask.at(y, x) ? 255 : 0);
}

TEST(Augment, NamesRoundTrip) {
  for (Transform t : kAllTransforms) {
    ASSERT_EQ(transform_from_name(transform_name(t)), t);
  }
  EXPECT_FALSE(transform_from_name("rotate").has_value());
}

TEST(Augment, DefaultProbabilities) {
  EXPECT_EQ(default_probability(Transform::kHorizontalFlip), 0.25);
  EXPECT_EQ(default_probability(Transform::kShiftScaleRotate), 0.25);
  EXPECT_EQ(default_probability(Transform::kBlur), 0.1);
  EXPECT_EQ(default_probability(Transform::kClahe), 0.1);
}

TEST(Augment, SpecParsing) {
  EXPECT_EQ(AugmentSpec::parse("none").mode, AugmentMode::kNone);
  EXPECT_EQ(AugmentSpec::parse("full").mode, AugmentMode::kFullPipeline);
  const auto s = AugmentSpec::parse("single:transpose");
  EXPECT_EQ(s.mode, AugmentMode::kSingle);
  EXPECT_EQ(s.single, Transform::kTranspose);
  EXPECT_EQ(s.to_string(), "single:transpose");
  EXPECT_EQ(s.probability(Transform::kTranspose), 0.25);
  EXPECT_EQ(s.probability(Transform::kBlur), 0.0);
  EXPECT_EQ(AugmentSpec::single_transform(Transform::kBlur, true).probability(Transform::kBlur), 1.0);
  EXPECT_EQ(code_of([] { (void)AugmentSpec::parse("single:nope"); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { (void)AugmentSpec::parse("most"); }), ErrorCode::kInvalidArgument);
}

TEST(Augment, TransposeTwoByThree) {
  Sample s{Image(2, 3, 3), Image(2, 3, 1), "t"};
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) {
      s.image.at(y, x, 0) = static_cast<std::uint8_t>(10 * y + x);
      s.mask.at(y, x) = (y == 0 && x == 2) ? 1 : 0;
    }
  const Sample t = transform_transpose(s);
  ASSERT_EQ(t.image.height, 3);
  ASSERT_EQ(t.image.width, 2);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 2; ++x) EXPECT_EQ(t.image.at(y, x, 0), 10 * x + y);
  EXPECT_EQ(t.mask.at(2, 0), 1);
}

TEST(Augment, RotateCounterClockwise) {
  Sample s{Image(2, 3, 3), Image(2, 3, 1), "r"};
  s.image.at(0, 2, 0) = 7;  // top-right ends up top-left
  const Sample r = rotate90(s, 1);
  ASSERT_EQ(r.image.height, 3);
  EXPECT_EQ(r.image.at(0, 0, 0), 7);
  EXPECT_EQ(rotate90(s, 4), s);
  EXPECT_EQ(rotate90(rotate90(s, 1), 3), s);
}

TEST(Augment, FlipIsInvolution) {
  const Sample s = random_sample(9, 12, 1);
  const Sample f = transform_horizontal_flip(s);
  EXPECT_NE(f, s);
  EXPECT_EQ(f.image.at(3, 0, 1), s.image.at(3, 11, 1));
  EXPECT_EQ(transform_horizontal_flip(f), s);
  // Forced through the pipeline as well.
  const auto spec = AugmentSpec::single_transform(Transform::kHorizontalFlip, true);
  Rng rng(2);
  EXPECT_EQ(apply_pipeline(apply_pipeline(s, spec, rng), spec, rng), s);
}

TEST(Augment, NoneSpecIsIdentity) {
  const Sample s = random_sample(16, 16, 3);
  Rng rng(4);
  EXPECT_EQ(apply_pipeline(s, AugmentSpec::none(), rng), s);
}

TEST(Augment, NothingFiredMeansIdentity) {
  const Sample s = random_sample(16, 16, 5);
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 200 && checked < 5; ++seed) {
    Rng rng(seed);
    FiredSet fired{};
    const Sample out = apply_pipeline(s, AugmentSpec::full(), rng, &fired);
    if (std::none_of(fired.begin(), fired.end(), [](bool b) { return b; })) {
      EXPECT_EQ(out, s) << seed;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 5);
}

TEST(Augment, SameSeedSameOutput) {
  const Sample s = random_sample(24, 24, 6);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng a(seed), b(seed);
    EXPECT_EQ(apply_pipeline(s, AugmentSpec::full(), a), apply_pipeline(s, AugmentSpec::full(), b));
  }
}

TEST(Augment, FiringRatesWithinThreeSigma) {
  const Sample s = random_sample(16, 16, 7);
  constexpr int kDraws = 10000;
  std::array<int, 10> hits{};
  Rng rng(8);
  for (int i = 0; i < kDraws; ++i) {
    FiredSet fired{};
    (void)apply_pipeline(s, AugmentSpec::full(), rng, &fired);
    for (std::size_t t = 0; t < 10; ++t) hits[t] += fired[t] ? 1 : 0;
  }
  for (std::size_t t = 0; t < 10; ++t) {
    const double p = default_probability(kAllTransforms[t]);
    const double sigma = std::sqrt(p * (1 - p) / kDraws);
    const double rate = static_cast<double>(hits[t]) / kDraws;
    EXPECT_NEAR(rate, p, 3 * sigma) << transform_name(kAllTransforms[t]);
  }
}

class EveryTransform : public ::testing::TestWithParam<Transform> {};

TEST_P(EveryTransform, MasksStayBinaryAndPhotometricLeavesMaskAlone) {
  const Transform t = GetParam();
  const AugmentParams params;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const Sample s = random_sample(20, 20, 100 + i);
    Rng rng(i);
    const Sample out = apply_transform(t, s, params, rng);
    ASSERT_TRUE(is_binary_mask(out.mask)) << i;
    ASSERT_EQ(out.image.channels, 3);
    if (!moves_mask(t)) ASSERT_EQ(out.mask, s.mask) << i;
  }
}

INSTANTIATE_TEST_SUITE_P(All, EveryTransform, ::testing::ValuesIn(kAllTransforms),
                         [](const auto& info) { return std::string(transform_name(info.param)); });

TEST(Augment, MaskMovingSetIsGeometric) {
  EXPECT_FALSE(moves_mask(Transform::kBlur));
  EXPECT_FALSE(moves_mask(Transform::kHueSaturationValue));
  EXPECT_FALSE(moves_mask(Transform::kClahe));
  EXPECT_TRUE(moves_mask(Transform::kElastic));
}

TEST(Augment, ExactTransformsMoveImageWithMask) {
  for (std::uint64_t i = 0; i < 20; ++i) {
    const Sample s = coupled_sample(10, 14, i);
    Rng rng(i);
    expect_coupled(transform_horizontal_flip(s));
    expect_coupled(transform_transpose(s));
    expect_coupled(transform_random_rotate90(s, rng));
  }
}

TEST(Augment, ExactTransformsPreserveDice) {
  for (std::uint64_t i = 0; i < 200; ++i) {
    const Sample pred = random_sample(8, 11, 2 * i);
    const Sample gt = random_sample(8, 11, 2 * i + 1);
    const double d = dice(count_pixels(pred.mask, gt.mask));
    const int k = static_cast<int>(i % 4);
    EXPECT_EQ(dice(count_pixels(transform_horizontal_flip(pred).mask, transform_horizontal_flip(gt).mask)), d);
    EXPECT_EQ(dice(count_pixels(transform_transpose(pred).mask, transform_transpose(gt).mask)), d);
    EXPECT_EQ(dice(count_pixels(rotate90(pred, k).mask, rotate90(gt, k).mask)), d);
  }
}

TEST(Augment, ClaheOnConstantImageStaysConstant) {
  Sample s{Image(32, 32, 3, 128), Image(32, 32, 1), "c"};
  s.mask.at(5, 5) = 1;
  const Sample out = transform_clahe(s, AugmentParams{});
  const std::uint8_t v0 = out.image.pixels[0];
  for (std::size_t i = 0; i < out.image.pixels.size(); i += 3) ASSERT_EQ(out.image.pixels[i], v0);
  EXPECT_EQ(out.mask, s.mask);
}

TEST(Augment, GridDistortionKeepsMasksBinary) {
  for (std::uint64_t i = 0; i < 100; ++i) {
    Rng rng(i);
    const Sample out = transform_grid_distortion(random_sample(32, 32, i), AugmentParams{}, rng);
    ASSERT_TRUE(is_binary_mask(out.mask));
  }
}

TEST(Augment, ShiftScaleRotateChangesGeometry) {
  const Sample s = coupled_sample(32, 32, 9);
  int changed = 0;
  for (std::uint64_t i = 0; i < 10; ++i) {
    Rng rng(i);
    changed += transform_shift_scale_rotate(s, AugmentParams{}, rng).mask != s.mask;
  }
  EXPECT_GT(changed, 5);
}

TEST(Augment, RejectsMalformedSamples) {
  Sample s{Image(4, 4, 3), Image(4, 5, 1), "bad"};
  Rng rng(0);
  EXPECT_EQ(code_of([&] { (void)apply_pipeline(s, AugmentSpec::full(), rng); }), ErrorCode::kSizeMismatch);
  Sample gray{Image(4, 4, 1), Image(4, 4, 1), "gray"};
  EXPECT_EQ(code_of([&] { (void)apply_pipeline(gray, AugmentSpec::full(), rng); }), ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace unseg
