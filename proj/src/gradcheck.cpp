#include "exprdit/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace exprdit {

namespace {

double rel_err(double a, double n) { return std::abs(a - n) / (std::abs(a) + std::abs(n) + 1e-6); }

double eval(const std::function<ad::Var<double>()>& loss) {
  const double v = loss().value()[0];
  if (!std::isfinite(v)) throw EvaluationError("gradient check: non-finite function value");
  return v;
}

}  // namespace

double finite_diff_grad_check(const ScalarFn& f, const Tensor<double>& x, double eps) {
  auto xv = ad::Var<double>::parameter(x);
  return finite_diff_grad_check_params([&] { return f(xv); }, {xv}, eps);
}

double finite_diff_grad_check_params(const std::function<ad::Var<double>()>& loss,
                                     std::vector<ad::Var<double>> params, double eps, std::size_t stride) {
  for (auto& p : params) p.zero_grad();
  auto root = loss();
  if (root.size() != 1) throw InvalidShapeError("gradient check: function must return a scalar");
  if (!std::isfinite(root.value()[0])) throw EvaluationError("gradient check: non-finite function value");
  ad::backward(root);
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k].mutable_value();
    for (std::size_t i = 0; i < value.size(); i += std::max<std::size_t>(stride, 1)) {
      const double orig = value[i];
      value[i] = orig + eps;
      const double up = eval(loss);
      value[i] = orig - eps;
      const double down = eval(loss);
      value[i] = orig;
      worst = std::max(worst, rel_err(analytic[k][i], (up - down) / (2.0 * eps)));
    }
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

}  // namespace exprdit
