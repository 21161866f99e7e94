// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gridattn::metrics {

/// 1-based ranks with ties sharing the mean of the ranks they span.
std::vector<double> fractional_ranks(std::span<const double> values);

/// Mann-Whitney AUC: the fraction of (positive, negative) pairs ordered
/// correctly, with ties credited 0.5. Labels are 0/1.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Pearson correlation of fractional ranks.
double spearman(std::span<const double> pred, std::span<const double> target);

double pearson(std::span<const double> x, std::span<const double> y);

struct WilcoxonResult {
  double statistic = 0.0;     // min(W+, W-)
  double w_plus = 0.0;        // rank sum of positive differences
  double p_value = 1.0;       // two-sided
  std::size_t n = 0;          // non-zero differences
  bool exact = false;
};

inline constexpr std::size_t kWilcoxonExactLimit = 20;

/// Signed-rank test on a - b. Zero differences are dropped, |d| ranked with
/// average ties. The two-sided p-value is 2 * min(P(W+ <= w), P(W+ >= w)),
/// capped at 1, from the exact null distribution for n <= 20 and from the
/// tie-corrected normal approximation with continuity correction above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

}  // namespace gridattn::metrics
