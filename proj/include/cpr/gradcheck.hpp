#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "cpr/params.hpp"
#include "cpr/tensor.hpp"

namespace cpr {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

// Central differences (f(x+h) - f(x-h)) / 2h against the analytic gradient
// already stored in every parameter's .grad. Relative error uses the
// denominator max(|a|, |n|, 1e-8). `loss` is evaluated twice per coordinate
// and must not touch the gradient buffers' meaning (it may overwrite them;
// the analytic values are snapshotted first).
GradCheckReport finite_diff_check(const std::function<double()>& loss, ParamStore& params,
                                  double h = 1e-4, double tol = 1e-4);

// Same check over a single free tensor `point` with gradient `analytic`.
GradCheckReport finite_diff_check(const std::function<double()>& loss, Tensor& point,
                                  const Tensor& analytic, double h = 1e-4, double tol = 1e-4);

}  // namespace cpr
