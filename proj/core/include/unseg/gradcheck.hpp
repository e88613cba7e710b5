#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "unseg/layers.hpp"

namespace unseg {

// Scalar-valued function of several inputs, built on the given tape.
using GradFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// max over elements of |analytic - central difference| / max(1, |analytic|),
// taken over every input. NaN anywhere yields NaN.
double grad_check(const GradFn& f, const std::vector<Tensor<double>>& inputs, double h = 1e-4);
double grad_check(const std::function<Var<double>(const Var<double>&)>& f, const Tensor<double>& x, double h = 1e-4);

// Checks d loss / d parameter for a random subset of parameter elements
// (at least one per parameter tensor). `loss` rebuilds the graph from
// scratch on each call.
double grad_check_parameters(Module<double>& model, const std::function<Var<double>(Tape<double>&)>& loss,
                             double fraction, std::uint64_t seed, double h = 1e-4);

struct GradcheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double tolerance = 1e-4;
  bool all_passed() const;
};

// Every differentiable op plus end-to-end BCE through 2-stage residual and
// ConvNeXt U-Nets.
GradcheckReport run_gradcheck_suite(std::uint64_t seed, double h = 1e-4, double tolerance = 1e-4);

}  // namespace unseg
