#include <gtest/gtest.h>

#include <cmath>

#include "error_code.hpp"
#include "unseg/gradcheck.hpp"
#include "unseg/nn_ops.hpp"
#include "unseg/ops.hpp"
#include "unseg/rng.hpp"

namespace unseg {
namespace {

template <typename T>
Tensor<T> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

using testing::code_of;

// Direct seven-loop convolution.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b,
                           const ConvSpec& s) {
  const std::size_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
  const std::size_t ho = s.output_extent(h), wo = s.output_extent(wd);
  const std::size_t cin_g = s.in_channels / s.groups, cout_g = s.out_channels / s.groups;
  Tensor<double> out(Shape{n, s.out_channels, ho, wo});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t co = 0; co < s.out_channels; ++co) {
      const std::size_t g = co / cout_g;
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = b ? (*b)[co] : 0.0;
          for (std::size_t ci = 0; ci < cin_g; ++ci)
            for (std::size_t ky = 0; ky < s.kernel; ++ky)
              for (std::size_t kx = 0; kx < s.kernel; ++kx) {
                const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.padding);
                const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                acc += x.at(in, g * cin_g + ci, iy, ix) * w.at(co, ci, ky, kx);
              }
          out.at(in, co, oy, ox) = acc;
        }
    }
  return out;
}

TEST(Conv2d, DenseMatchesLoopOracle) {
  const ConvSpec spec{3, 4, 3, 2, 1, 1, true};
  const auto x = random_tensor<double>({2, 3, 7, 6}, 1);
  const auto w = random_tensor<double>(spec.weight_shape(), 2);
  const auto b = random_tensor<double>({4}, 3);
  Tape<double> tape;
  auto y = conv2d(tape.leaf(x), tape.leaf(w), tape.leaf(b), spec).value();
  const auto ref = conv_oracle(x, w, &b, spec);
  ASSERT_EQ(y.shape(), ref.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

TEST(Conv2d, GroupedMatchesLoopOracle) {
  const ConvSpec spec{4, 6, 3, 1, 1, 2, false};
  const auto x = random_tensor<double>({1, 4, 5, 5}, 4);
  const auto w = random_tensor<double>(spec.weight_shape(), 5);
  Tape<double> tape;
  auto y = conv2d(tape.leaf(x), tape.leaf(w), Var<double>{}, spec).value();
  const auto ref = conv_oracle(x, w, nullptr, spec);
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
}

// Depthwise 7x7: taps summed in (ky, kx) order from zero, then bias. The
// float result must match this loop bit for bit.
TEST(Conv2d, DepthwiseIsBitExactAgainstLoop) {
  const std::size_t c = 5, k = 7, pad = 3, h = 9, w = 8;
  const ConvSpec spec{c, c, k, 1, pad, c, true};
  const auto x = random_tensor<float>({2, c, h, w}, 6);
  const auto wt = random_tensor<float>(spec.weight_shape(), 7);
  const auto b = random_tensor<float>({c}, 8);
  Tape<float> tape;
  auto y = conv2d(tape.leaf(x), tape.leaf(wt), tape.leaf(b), spec).value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < h; ++oy)
        for (std::size_t ox = 0; ox < w; ++ox) {
          float acc = 0;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              acc += x.at(n, ch, iy, ix) * wt.at(ch, 0, ky, kx);
            }
          }
          ASSERT_EQ(y.at(n, ch, oy, ox), acc + b[ch]) << n << "," << ch << "," << oy << "," << ox;
        }
}

TEST(Conv2d, RejectsChannelMismatch) {
  const ConvSpec spec{3, 2, 3, 1, 1, 1, false};
  Tape<double> tape;
  auto x = tape.leaf(random_tensor<double>({1, 2, 4, 4}, 1));
  auto w = tape.leaf(random_tensor<double>(spec.weight_shape(), 2));
  EXPECT_EQ(code_of([&] { (void)conv2d(x, w, Var<double>{}, spec); }), ErrorCode::kShapeMismatch);
  EXPECT_EQ(code_of([] { ConvSpec{3, 4, 3, 1, 1, 2, true}.validate(); }), ErrorCode::kInvalidArgument);
}

TEST(Pooling, MaxPool2PicksMaxAndRejectsOdd) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{1, 1, 2, 4}, {1, 5, 2, 0, 3, 4, 7, 6}));
  auto y = maxpool2(x).value();
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_EQ(y[0], 5.0);
  EXPECT_EQ(y[1], 7.0);
  auto odd = tape.leaf(Tensor<double>(Shape{1, 1, 3, 4}));
  EXPECT_EQ(code_of([&] { (void)maxpool2(odd); }), ErrorCode::kOddSpatialDim);
}

TEST(Upsample, NearestReplicatesAndBilinearKeepsConstants) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{1, 1, 1, 2}, {1, 2}));
  auto y = upsample2(x, UpsampleMode::kNearest).value();
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 4}));
  const std::vector<double> expect{1, 1, 2, 2, 1, 1, 2, 2};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(y[i], expect[i]);
  auto c = tape.leaf(Tensor<double>(Shape{1, 2, 3, 3}, 0.75));
  for (double v : upsample2(c, UpsampleMode::kBilinear).value().data()) EXPECT_NEAR(v, 0.75, 1e-15);
}

TEST(BatchNorm, TrainModeStandardisesAndUpdatesRunningStats) {
  const auto x = random_tensor<double>({4, 2, 3, 3}, 9, -2, 5);
  Tensor<double> rm(Shape{2}, 0.0), rv(Shape{2}, 1.0);
  Tape<double> tape;
  auto g = tape.leaf(Tensor<double>(Shape{2}, 1.0));
  auto b = tape.leaf(Tensor<double>(Shape{2}, 0.0));
  auto y = batchnorm(tape.leaf(x), g, b, rm, rv, NormSpec::batchnorm(2)).value();
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0, v = 0, xm = 0, xv = 0;
    const double cnt = 4 * 9;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 9; ++i) {
        m += y.at(n, c, i / 3, i % 3);
        xm += x.at(n, c, i / 3, i % 3);
      }
    m /= cnt;
    xm /= cnt;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 9; ++i) {
        v += std::pow(y.at(n, c, i / 3, i % 3) - m, 2);
        xv += std::pow(x.at(n, c, i / 3, i % 3) - xm, 2);
      }
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / cnt, 1.0, 1e-3);
    EXPECT_NEAR(rm[c], 0.1 * xm, 1e-12);
    EXPECT_NEAR(rv[c], 0.9 + 0.1 * xv / (cnt - 1), 1e-12);
  }
}

TEST(BatchNorm, EvalModeUsesRunningStats) {
  Tensor<double> rm(Shape{1}, 2.0), rv(Shape{1}, 4.0);
  Tape<double> tape;
  auto spec = NormSpec::batchnorm(1);
  spec.mode = NormMode::kEval;
  auto y = batchnorm(tape.leaf(Tensor<double>(Shape{1, 1, 1, 1}, 6.0)), tape.leaf(Tensor<double>(Shape{1}, 3.0)),
                     tape.leaf(Tensor<double>(Shape{1}, 1.0)), rm, rv, spec)
               .value();
  EXPECT_NEAR(y[0], 3.0 * 4.0 / std::sqrt(4.0 + 1e-5) + 1.0, 1e-12);
  EXPECT_EQ(rm[0], 2.0);
}

TEST(LayerNorm, NormalisesChannelVectorPerPixel) {
  const auto x = random_tensor<double>({1, 4, 2, 2}, 10, -3, 3);
  Tape<double> tape;
  auto y = layernorm_channels(tape.leaf(x), tape.leaf(Tensor<double>(Shape{4}, 1.0)),
                              tape.leaf(Tensor<double>(Shape{4}, 0.0)), NormSpec::layernorm(4))
               .value();
  for (std::size_t p = 0; p < 4; ++p) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 4; ++c) m += y.at(0, c, p / 2, p % 2);
    for (std::size_t c = 0; c < 4; ++c) v += std::pow(y.at(0, c, p / 2, p % 2) - m / 4, 2);
    EXPECT_NEAR(m / 4, 0.0, 1e-12);
    EXPECT_NEAR(v / 4, 1.0, 1e-4);
  }
}

TEST(Grn, ZeroAffineIsIdentity) {
  const auto x = random_tensor<double>({2, 3, 4, 4}, 11);
  Tape<double> tape;
  auto y = grn(tape.leaf(x), tape.leaf(Tensor<double>(Shape{3}, 0.0)), tape.leaf(Tensor<double>(Shape{3}, 0.0)))
               .value();
  EXPECT_EQ(y, x);
}

TEST(Shapes, PadReflectCropAndConcat) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{1, 1, 2, 3}, {1, 2, 3, 4, 5, 6}));
  auto p = pad_reflect(x, 1, 2).value();
  ASSERT_EQ(p.shape(), (Shape{1, 1, 3, 5}));
  // Bottom row reflects row 0; right columns reflect columns 1 and 0.
  const std::vector<double> expect{1, 2, 3, 2, 1, 4, 5, 6, 5, 4, 1, 2, 3, 2, 1};
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(p[i], expect[i]) << i;
  auto c = crop(tape.leaf(p), 2, 3).value();
  EXPECT_EQ(c, x.value());
  auto cat = concat_channels(x, x).value();
  EXPECT_EQ(cat.shape(), (Shape{1, 2, 2, 3}));
  EXPECT_EQ(cat[6], 1.0);
  EXPECT_EQ(code_of([&] { (void)pad_reflect(x, 2, 0); }), ErrorCode::kBadInputSize);
}

TEST(Gradcheck, FullSuitePasses) {
  const auto report = run_gradcheck_suite(0);
  for (const auto& e : report.entries) EXPECT_TRUE(e.passed) << e.name << " " << e.max_rel_error;
  EXPECT_TRUE(report.all_passed());
  EXPECT_GE(report.entries.size(), 15u);
}

}  // namespace
}  // namespace unseg
