// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace gridattn {

struct GradientReport {
  double max_relative_error = 0.0;
  std::size_t worst_parameter_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// A scalar function of a flat parameter vector together with its claimed
/// analytic gradient.
struct Objective {
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
};

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / 2 eps for every i.
std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> params, double eps);

/// Compares the analytic gradient against central differences. The relative
/// error of parameter i is |a - n| / max(|a|, |n|, 1e-8).
GradientReport grad_check(const Objective& objective, std::span<const double> params, double eps);

}  // namespace gridattn
