#include <benchmark/benchmark.h>

#include "unseg/augment.hpp"
#include "unseg/nn_ops.hpp"
#include "unseg/ops.hpp"
#include "unseg/unet.hpp"

namespace {

using namespace unseg;

Tensor<float> noise(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(shape);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const ConvSpec spec{c, c, 3, 1, 1, 1, true};
  const auto x = noise({8, c, 32, 32}, 1), w = noise(spec.weight_shape(), 2), b = noise({c}, 3);
  for (auto _ : state) {
    Tape<float> tape(false);
    benchmark::DoNotOptimize(conv2d(tape.leaf(x), tape.leaf(w), tape.leaf(b), spec).value().ptr());
  }
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(64);

void BM_Depthwise7x7(benchmark::State& state) {
  const std::size_t c = 64;
  const ConvSpec spec{c, c, 7, 1, 3, c, true};
  const auto x = noise({8, c, 32, 32}, 1), w = noise(spec.weight_shape(), 2), b = noise({c}, 3);
  for (auto _ : state) {
    Tape<float> tape(false);
    benchmark::DoNotOptimize(conv2d(tape.leaf(x), tape.leaf(w), tape.leaf(b), spec).value().ptr());
  }
}
BENCHMARK(BM_Depthwise7x7);

void BM_UNetTrainStep(benchmark::State& state, const char* preset) {
  auto model = build_unet<float>(UNetConfig{preset_by_name(preset)}, 0);
  const auto x = noise({8, 3, 64, 64}, 4);
  Tensor<float> y(Shape{8, 1, 64, 64});
  for (std::size_t i = 0; i < y.numel(); i += 17) y[i] = 1;
  for (auto _ : state) {
    Tape<float> tape;
    auto loss = bce_with_logits(model->forward(tape.leaf(x)), tape.leaf(y));
    tape.backward(loss);
    model->zero_grad();
  }
}
BENCHMARK_CAPTURE(BM_UNetTrainStep, resnet_mini, "resnet-mini")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_UNetTrainStep, convnext_mini, "convnext-mini")->Unit(benchmark::kMillisecond);

void BM_AugmentPipeline(benchmark::State& state) {
  Rng rng(5);
  Sample s{Image(64, 64, 3), Image(64, 64, 1), "b"};
  for (auto& p : s.image.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  for (std::size_t i = 0; i < s.mask.pixels.size(); i += 13) s.mask.pixels[i] = 1;
  const auto spec = AugmentSpec::full();
  for (auto _ : state) benchmark::DoNotOptimize(apply_pipeline(s, spec, rng).image.pixels.data());
}
BENCHMARK(BM_AugmentPipeline);

void BM_SingleTransform(benchmark::State& state) {
  const Transform t = kAllTransforms[static_cast<std::size_t>(state.range(0))];
  state.SetLabel(std::string(transform_name(t)));
  Rng rng(6);
  Sample s{Image(64, 64, 3), Image(64, 64, 1), "b"};
  for (auto& p : s.image.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const AugmentParams params;
  for (auto _ : state) benchmark::DoNotOptimize(apply_transform(t, s, params, rng).image.pixels.data());
}
BENCHMARK(BM_SingleTransform)->DenseRange(0, 9);

}  // namespace

BENCHMARK_MAIN();
