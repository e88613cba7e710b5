#include <gtest/gtest.h>

#include <cmath>

#include "error_code.hpp"
#include "unseg/gradcheck.hpp"
#include "unseg/ops.hpp"
#include "unseg/rng.hpp"

namespace unseg {
namespace {

using testing::code_of;

Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

TEST(Tensor, RejectsZeroDimsAndBadLength) {
  EXPECT_EQ(code_of([] { Tensor<float>(Shape{2, 0}); }), ErrorCode::kShapeMismatch);
  EXPECT_EQ(code_of([] { Tensor<float>(Shape{2, 2}, std::vector<float>(3)); }), ErrorCode::kShapeMismatch);
}

TEST(Tensor, ItemRequiresScalar) {
  EXPECT_FLOAT_EQ(Tensor<float>::scalar(2.5f).item(), 2.5f);
  EXPECT_EQ(code_of([] { (void)Tensor<float>(Shape{2}).item(); }), ErrorCode::kNotScalar);
}

TEST(Tensor, ReshapeKeepsDataAndChecksCount) {
  Tensor<double> t(Shape{2, 3}, {0, 1, 2, 3, 4, 5});
  auto r = t.reshaped({3, 2});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(r[5], 5.0);
  EXPECT_EQ(code_of([&] { (void)t.reshaped({4}); }), ErrorCode::kShapeMismatch);
}

TEST(Ops, ChannelBroadcastAdd) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{1, 2, 1, 2}, {1, 2, 3, 4}));
  auto b = tape.leaf(Tensor<double>(Shape{2}, {10, 20}));
  auto y = add(x, b);
  EXPECT_EQ(y.value().data()[0], 11.0);
  EXPECT_EQ(y.value().data()[3], 24.0);
  auto bad = tape.leaf(Tensor<double>(Shape{3}));
  EXPECT_EQ(code_of([&] { (void)add(x, bad); }), ErrorCode::kShapeMismatch);
}

TEST(Autograd, ReusedNodeAccumulatesGradient) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{3}, {1, -2, 3}), true);
  auto y = sum(mul(x, x));
  tape.backward(y);
  const auto* g = tape.grad(x);
  ASSERT_NE(g, nullptr);
  EXPECT_EQ((*g)[0], 2.0);
  EXPECT_EQ((*g)[1], -4.0);
  EXPECT_EQ((*g)[2], 6.0);
}

TEST(Autograd, BackwardNeedsScalarRoot) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>(Shape{2}, {1, 2}), true);
  EXPECT_EQ(code_of([&] { tape.backward(x); }), ErrorCode::kNotScalar);
}

TEST(Autograd, ParameterGradAccumulatesUntilZeroed) {
  Parameter<double> p{"w", {2}, Tensor<double>(Shape{2}, {1, 2}), {}};
  EXPECT_TRUE(p.grad.is_null());
  for (int i = 0; i < 2; ++i) {
    Tape<double> tape;
    auto w = tape.param(p);
    tape.backward(sum(scale(w, 3.0)));
  }
  ASSERT_FALSE(p.grad.is_null());
  EXPECT_EQ(p.grad[0], 6.0);
  p.zero_grad();
  EXPECT_EQ(p.grad[1], 0.0);
}

TEST(Autograd, NoGradTapeRecordsNoGradients) {
  Tape<double> tape(false);
  auto x = tape.leaf(Tensor<double>(Shape{2}, {1, 2}), true);
  auto y = sum(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Ops, MatmulMatchesLoops) {
  const auto a = random_tensor({3, 4}, 1), b = random_tensor({4, 5}, 2);
  Tape<double> tape;
  auto c = matmul(tape.leaf(a), tape.leaf(b)).value();
  ASSERT_EQ(c.shape(), (Shape{3, 5}));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 4; ++k) acc += a[i * 4 + k] * b[k * 5 + j];
      EXPECT_NEAR(c[i * 5 + j], acc, 1e-12);
    }
  }
  auto bad = tape.leaf(random_tensor({5, 2}, 3));
  EXPECT_EQ(code_of([&] { (void)matmul(tape.leaf(a), bad); }), ErrorCode::kShapeMismatch);
}

TEST(Ops, BceAtZeroLogitIsLn2) {
  Tape<double> tape;
  auto loss = bce_with_logits(tape.leaf(Tensor<double>::scalar(0.0)), tape.leaf(Tensor<double>::scalar(1.0)));
  EXPECT_NEAR(loss.value().item(), std::log(2.0), 1e-12);
}

TEST(Ops, BceStaysFiniteAtLargeLogits) {
  Tape<float> tape;
  auto z = tape.leaf(Tensor<float>(Shape{2}, {50.0f, -50.0f}), true);
  auto y = tape.leaf(Tensor<float>(Shape{2}, {1.0f, 1.0f}));
  auto loss = bce_with_logits(z, y, Reduction::kSum);
  // The confident correct logit contributes ~exp(-50); the wrong one 50.
  EXPECT_NEAR(loss.value().item(), 50.0f, 1e-4f);
  tape.backward(loss);
  const auto* g = tape.grad(z);
  ASSERT_NE(g, nullptr);
  EXPECT_TRUE(g->all_finite());
  EXPECT_NEAR((*g)[0], 0.0f, 1e-6f);
  EXPECT_NEAR((*g)[1], -1.0f, 1e-6f);
  EXPECT_EQ(bce_with_logits_value(Tensor<float>::scalar(50.0f), Tensor<float>::scalar(1.0f)) >= 0.0f, true);
}

TEST(Ops, BceMatchesDirectFormula) {
  const auto z = random_tensor({1, 1, 4, 4}, 5, -6, 6);
  Rng rng(6);
  Tensor<double> y(z.shape());
  for (auto& v : y.data()) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
  double expect = 0;
  for (std::size_t i = 0; i < z.numel(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    expect -= y[i] * std::log(p) + (1 - y[i]) * std::log(1 - p);
  }
  expect /= static_cast<double>(z.numel());
  EXPECT_NEAR(bce_with_logits_value(z, y), expect, 1e-12);
}

TEST(Gradcheck, BceGradientMatchesFiniteDifferences) {
  const auto z = random_tensor({1, 1, 4, 4}, 7, -3, 3);
  Rng rng(8);
  Tensor<double> y(z.shape());
  for (auto& v : y.data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const double err = grad_check([&](const Var<double>& x) { return bce_with_logits(x, x.tape().leaf(y)); }, z);
  EXPECT_LT(err, 1e-4);
}

TEST(Gradcheck, ElementwiseOps) {
  const auto x = random_tensor({2, 3}, 9);
  EXPECT_LT(grad_check([](const Var<double>& v) { return sum(sigmoid(v)); }, x), 1e-4);
  EXPECT_LT(grad_check([](const Var<double>& v) { return sum(gelu(v)); }, x), 1e-4);
  EXPECT_LT(grad_check([](const Var<double>& v) { return mean(mul(v, add_scalar(v, 0.5))); }, x), 1e-4);
}

// An op whose backward is deliberately off by 10% must be caught.
TEST(Gradcheck, DetectsWrongBackward) {
  auto faulty_square = [](const Var<double>& x) {
    Tensor<double> out = x.value();
    for (auto& v : out.data()) v = v * v;
    Tape<double>& t = x.tape();
    const std::size_t id = x.id();
    auto y = t.record(std::move(out), {x}, [id](Tape<double>& tp, const Tensor<double>& g) {
      const auto& xv = tp.value(id);
      auto& dx = tp.grad_buffer(id);
      for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += 2.2 * xv[i] * g[i];
    });
    return sum(y);
  };
  const auto x = random_tensor({4}, 10, 0.5, 2.0);
  EXPECT_GT(grad_check(faulty_square, x), 1e-4);
}

TEST(Rng, DeriveSeedSeparatesStreams) {
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
  Rng a(4), b(4);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, StateRoundTrips) {
  Rng a(11);
  a.uniform();
  Rng b;
  b.set_state(a.state());
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

}  // namespace
}  // namespace unseg
