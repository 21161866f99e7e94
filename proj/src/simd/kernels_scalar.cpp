// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "gridattn/simd/kernels.hpp"

namespace gridattn::simd::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    l0 = std::fma(a[i], b[i], l0);
    l1 = std::fma(a[i + 1], b[i + 1], l1);
    l2 = std::fma(a[i + 2], b[i + 2], l2);
    l3 = std::fma(a[i + 3], b[i + 3], l3);
  }
  double acc = (l0 + l1) + (l2 + l3);
  for (; i < n; ++i) acc = std::fma(a[i], b[i], acc);
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

}  // namespace gridattn::simd::scalar
