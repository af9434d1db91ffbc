#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ssattn/tensor.hpp"

namespace ssattn {

// Central-difference gradient verification.
//
// The reported error is the max over checked elements of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// `f` must return a one-element tensor (ShapeError otherwise).
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double epsilon = 1e-5);

// Multi-input form: `f` closes over `inputs`, which must be leaves. Each is
// perturbed in place and restored afterwards.
double finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                               double epsilon = 1e-5);

struct GradcheckCase {
  std::string name;
  // Runs the check for one seed and returns the max relative error.
  std::function<double(unsigned seed)> run;
};

struct GradcheckRow {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

// One case per differentiable primitive plus a full IRM block of each kind.
std::vector<GradcheckCase> default_gradcheck_suite();

// A deliberately broken op, for negative-control runs of the harness.
GradcheckCase faulty_gradcheck_case();

std::vector<GradcheckRow> run_gradcheck_suite(const std::vector<GradcheckCase>& cases,
                                              const std::string& filter, unsigned seeds,
                                              double tolerance);

}  // namespace ssattn
