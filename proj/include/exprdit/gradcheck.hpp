#pragma once

#include <functional>
#include <vector>

#include "exprdit/autodiff.hpp"

namespace exprdit {

// Compares reverse-mode gradients against central differences. Both
// functions return the max over coordinates of
//   |analytic - numeric| / (|analytic| + |numeric| + 1e-8).
// Non-finite f at the base point raises EvaluationError.

using ScalarFn = std::function<ad::Var<double>(const ad::Var<double>&)>;

double finite_diff_grad_check(const ScalarFn& f, const Tensor<double>& x, double eps = 1e-5);

// Checks d loss / d param for each listed parameter by perturbing the
// parameter values in place (restored afterwards). `stride` > 1 checks every
// stride-th coordinate only.
double finite_diff_grad_check_params(const std::function<ad::Var<double>()>& loss,
                                     std::vector<ad::Var<double>> params, double eps = 1e-5,
                                     std::size_t stride = 1);

}  // namespace exprdit
