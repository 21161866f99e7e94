// SPDX-License-Identifier: Apache-2.0
#include "gridattn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gridattn/error.hpp"

namespace gridattn {

namespace {

double finite_or_throw(double v, std::size_t index) {
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::kNonFinite, "objective is not finite when perturbing parameter " + std::to_string(index));
  }
  return v;
}

}  // namespace

std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> params, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::kInvalidConfig, "finite-difference step must be positive");
  std::vector<double> x(params.begin(), params.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = finite_or_throw(f(x), i);
    x[i] = saved - eps;
    const double down = finite_or_throw(f(x), i);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

GradientReport grad_check(const Objective& objective, std::span<const double> params, double eps) {
  finite_or_throw(objective.value(params), 0);
  const std::vector<double> analytic = objective.gradient(params);
  if (analytic.size() != params.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "analytic gradient length differs from parameter count");
  }
  const std::vector<double> numeric = numeric_gradient(objective.value, params, eps);

  GradientReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
    const double err = std::abs(a - n) / denom;
    if (i == 0 || err > report.max_relative_error) {
      report = {err, i, a, n};
    }
  }
  return report;
}

}  // namespace gridattn
