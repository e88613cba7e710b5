#include "unseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "unseg/nn_ops.hpp"
#include "unseg/ops.hpp"
#include "unseg/unet.hpp"

namespace unseg {

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

// NaN-propagating max.
double worse(double acc, double e) {
  if (std::isnan(acc) || std::isnan(e)) return std::numeric_limits<double>::quiet_NaN();
  return std::max(acc, e);
}

double evaluate(const GradFn& f, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape(false);
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t));
  return f(tape, vars).value().item();
}

}  // namespace

double grad_check(const GradFn& f, const std::vector<Tensor<double>>& inputs, double h) {
  std::vector<Tensor<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
    Var<double> root = f(tape, vars);
    tape.backward(root);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const Tensor<double>* g = tape.grad(vars[i]);
      analytic.push_back(g ? *g : Tensor<double>::zeros_like(inputs[i]));
    }
  }
  double err = 0.0;
  std::vector<Tensor<double>> work = inputs;
  for (std::size_t i = 0; i < work.size(); ++i) {
    for (std::size_t j = 0; j < work[i].numel(); ++j) {
      const double orig = work[i][j];
      work[i][j] = orig + h;
      const double fp = evaluate(f, work);
      work[i][j] = orig - h;
      const double fm = evaluate(f, work);
      work[i][j] = orig;
      err = worse(err, relative_error(analytic[i][j], (fp - fm) / (2.0 * h)));
    }
  }
  return err;
}

double grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x, double h) {
  return grad_check([&f](Tape<double>&, const std::vector<Var<double>>& v) { return f(v[0]); },
                    std::vector<Tensor<double>>{x}, h);
}

double grad_check_parameters(Module<double>& model, const std::function<Var<double>(Tape<double>&)>& loss,
                             double fraction, std::uint64_t seed, double h) {
  model.zero_grad();
  for (Parameter<double>* p : model.parameters()) p->grad = Tensor<double>();
  {
    Tape<double> tape;
    tape.backward(loss(tape));
  }
  auto value = [&] {
    Tape<double> tape(false);
    return loss(tape).value().item();
  };

  Rng rng(seed);
  double err = 0.0;
  for (Parameter<double>* p : model.parameters()) {
    const std::size_t n = p->numel();
    const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
    for (std::size_t s = 0; s < k; ++s) {
      const std::size_t j = static_cast<std::size_t>(rng.below(n));
      const double analytic = p->grad.is_null() ? 0.0 : p->grad[j];
      const double orig = p->value[j];
      p->value[j] = orig + h;
      const double fp = value();
      p->value[j] = orig - h;
      const double fm = value();
      p->value[j] = orig;
      err = worse(err, relative_error(analytic, (fp - fm) / (2.0 * h)));
    }
  }
  return err;
}

bool GradcheckReport::all_passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const GradcheckEntry& e) { return e.passed; });
}

namespace {

Tensor<double> random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Tensor<double> random_binary(Rng& rng, const Shape& shape) {
  Tensor<double> t(shape);
  for (double& v : t.data()) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
  return t;
}

// Contracts an op output with fixed random weights so every output element
// carries a distinct gradient.
Var<double> weighted_sum(const Var<double>& y, const Tensor<double>& w) {
  return sum(mul(y, y.tape().leaf(w)));
}

}  // namespace

GradcheckReport run_gradcheck_suite(std::uint64_t seed, double h, double tolerance) {
  GradcheckReport report;
  report.tolerance = tolerance;
  Rng rng(seed);
  auto run = [&](const std::string& name, const GradFn& f, const std::vector<Tensor<double>>& inputs) {
    const double e = grad_check(f, inputs, h);
    report.entries.push_back({name, e, e < tolerance});
  };
  // Unary op checked against a random weighting of its output.
  auto unary = [&](const std::string& name, const Shape& shape, std::function<Var<double>(const Var<double>&)> op,
                   const Shape& out_shape) {
    const Tensor<double> w = random_tensor(rng, out_shape);
    run(name, [op, w](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(op(v[0]), w); },
        {random_tensor(rng, shape)});
  };

  const Shape s4{2, 3, 4, 4};
  {
    const Tensor<double> w = random_tensor(rng, s4);
    run("add", [w](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(add(v[0], v[1]), w); },
        {random_tensor(rng, s4), random_tensor(rng, s4)});
    run("add_channel", [w](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(add(v[0], v[1]), w); },
        {random_tensor(rng, s4), random_tensor(rng, {3})});
    run("sub", [w](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(sub(v[0], v[1]), w); },
        {random_tensor(rng, s4), random_tensor(rng, s4)});
    run("mul", [w](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(mul(v[0], v[1]), w); },
        {random_tensor(rng, s4), random_tensor(rng, s4)});
    run("mul_channel", [w](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(mul(v[0], v[1]), w); },
        {random_tensor(rng, s4), random_tensor(rng, {3})});
  }
  unary("scale", s4, [](const Var<double>& x) { return scale(x, 2.5); }, s4);
  unary("add_scalar", s4, [](const Var<double>& x) { return add_scalar(x, -0.75); }, s4);
  {
    const Tensor<double> w = random_tensor(rng, {3, 5});
    run("matmul", [w](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(matmul(v[0], v[1]), w); },
        {random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5})});
  }
  run("sum", [](Tape<double>&, const std::vector<Var<double>>& v) { return sum(mul(v[0], v[0])); }, {random_tensor(rng, {8})});
  run("mean", [](Tape<double>&, const std::vector<Var<double>>& v) { return mean(mul(v[0], v[0])); }, {random_tensor(rng, s4)});
  unary("relu", s4, [](const Var<double>& x) { return relu(x); }, s4);
  unary("sigmoid", s4, [](const Var<double>& x) { return sigmoid(x); }, s4);
  unary("gelu", s4, [](const Var<double>& x) { return gelu(x); }, s4);

  auto conv_case = [&](const std::string& name, const ConvSpec& spec, const Shape& in_shape) {
    const std::size_t ho = spec.output_extent(in_shape[2]);
    const std::size_t wo = spec.output_extent(in_shape[3]);
    const Tensor<double> w = random_tensor(rng, {in_shape[0], spec.out_channels, ho, wo});
    run(name,
        [spec, w](Tape<double>&, const std::vector<Var<double>>& v) {
          return weighted_sum(conv2d(v[0], v[1], v[2], spec), w);
        },
        {random_tensor(rng, in_shape), random_tensor(rng, spec.weight_shape()), random_tensor(rng, {spec.out_channels})});
  };
  conv_case("conv2d_k3_p1", ConvSpec{2, 3, 3, 1, 1, 1, true}, {1, 2, 5, 5});
  conv_case("conv2d_k3_s2", ConvSpec{2, 2, 3, 2, 1, 1, true}, {2, 2, 6, 6});
  conv_case("conv2d_grouped", ConvSpec{4, 4, 3, 1, 1, 2, true}, {1, 4, 4, 4});
  conv_case("conv2d_depthwise_k7", ConvSpec{3, 3, 7, 1, 3, 3, true}, {1, 3, 6, 6});
  conv_case("conv2d_pointwise", ConvSpec{3, 4, 1, 1, 0, 1, true}, {2, 3, 3, 3});
  conv_case("conv2d_patchify_k4_s4", ConvSpec{3, 2, 4, 4, 0, 1, true}, {1, 3, 8, 8});

  unary("maxpool2", {1, 2, 4, 4}, [](const Var<double>& x) { return maxpool2(x); }, {1, 2, 2, 2});
  unary("maxpool3_s2_p1", {1, 2, 6, 6}, [](const Var<double>& x) { return maxpool2d(x, 3, 2, 1); }, {1, 2, 3, 3});
  unary("upsample_nearest", {1, 2, 3, 3}, [](const Var<double>& x) { return upsample2(x, UpsampleMode::kNearest); }, {1, 2, 6, 6});
  unary("upsample_bilinear", {1, 2, 3, 3}, [](const Var<double>& x) { return upsample2(x, UpsampleMode::kBilinear); }, {1, 2, 6, 6});

  {
    const Tensor<double> w = random_tensor(rng, s4);
    run("batchnorm_train",
        [w](Tape<double>&, const std::vector<Var<double>>& v) {
          Tensor<double> rm = Tensor<double>::zeros({3});
          Tensor<double> rv = Tensor<double>::ones({3});
          return weighted_sum(batchnorm(v[0], v[1], v[2], rm, rv, NormSpec::batchnorm(3)), w);
        },
        {random_tensor(rng, s4), random_tensor(rng, {3}, 0.5, 1.5), random_tensor(rng, {3})});
    Tensor<double> rm = random_tensor(rng, {3});
    Tensor<double> rv = random_tensor(rng, {3}, 0.5, 2.0);
    run("batchnorm_eval",
        [w, rm, rv](Tape<double>&, const std::vector<Var<double>>& v) {
          Tensor<double> m = rm, var = rv;
          NormSpec spec = NormSpec::batchnorm(3);
          spec.mode = NormMode::kEval;
          return weighted_sum(batchnorm(v[0], v[1], v[2], m, var, spec), w);
        },
        {random_tensor(rng, s4), random_tensor(rng, {3}, 0.5, 1.5), random_tensor(rng, {3})});
    run("layernorm_channels",
        [w](Tape<double>&, const std::vector<Var<double>>& v) {
          return weighted_sum(layernorm_channels(v[0], v[1], v[2], NormSpec::layernorm(3)), w);
        },
        {random_tensor(rng, s4), random_tensor(rng, {3}, 0.5, 1.5), random_tensor(rng, {3})});
    run("grn",
        [w](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(grn(v[0], v[1], v[2]), w); },
        {random_tensor(rng, s4), random_tensor(rng, {3}), random_tensor(rng, {3})});
  }
  {
    const Tensor<double> w = random_tensor(rng, {1, 5, 3, 3});
    run("concat_channels",
        [w](Tape<double>&, const std::vector<Var<double>>& v) { return weighted_sum(concat_channels(v[0], v[1]), w); },
        {random_tensor(rng, {1, 2, 3, 3}), random_tensor(rng, {1, 3, 3, 3})});
  }
  unary("pad_reflect", {1, 2, 4, 5}, [](const Var<double>& x) { return pad_reflect(x, 3, 2); }, {1, 2, 7, 7});
  unary("crop", {1, 2, 5, 5}, [](const Var<double>& x) { return crop(x, 3, 4); }, {1, 2, 3, 4});
  {
    const Tensor<double> targets = random_binary(rng, {1, 1, 4, 4});
    run("bce_with_logits",
        [targets](Tape<double>& t, const std::vector<Var<double>>& v) {
          return bce_with_logits(v[0], t.leaf(targets));
        },
        {random_tensor(rng, {1, 1, 4, 4}, -3.0, 3.0)});
  }

  // End to end through 2-stage U-Nets.
  const auto unet_case = [&](const std::string& name, EncoderPreset preset) {
    UNetConfig cfg;
    cfg.encoder = std::move(preset);
    cfg.decoder_widths.assign(cfg.decoder_stages(), 4);
    cfg.input_size = {16, 16};
    auto model = build_unet<double>(cfg, derive_seed(seed, {17}));
    // Randomise norm/GRN affine terms so their gradients are non-trivial.
    for (Parameter<double>* p : model->parameters()) {
      if (p->shape.size() == 1) {
        for (double& v : p->value.data()) v += rng.uniform(-0.5, 0.5);
      }
    }
    const Tensor<double> x = random_tensor(rng, {2, 3, 16, 16});
    const Tensor<double> y = random_binary(rng, {2, 1, 16, 16});
    auto loss = [&](Tape<double>& t) { return bce_with_logits(model->forward(t.leaf(x)), t.leaf(y)); };
    const double e = grad_check_parameters(*model, loss, 0.01, derive_seed(seed, {23}), h);
    report.entries.push_back({name, e, e < tolerance});
  };
  unet_case("unet_residual_2stage_bce",
            EncoderPreset{"residual-2stage", EncoderFamily::kResidual, BlockKind::kBottleneck, 4, {1, 1}, {8, 16}});
  unet_case("unet_convnext_2stage_bce",
            EncoderPreset{"convnext-2stage", EncoderFamily::kConvNeXtV2, BlockKind::kConvNeXt, 0, {1, 1}, {4, 8}});
  return report;
}

}  // namespace unseg
