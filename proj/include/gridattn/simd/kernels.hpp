// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

namespace gridattn::simd {

enum class Isa { kScalar, kAvx2, kNeon };

const char* to_string(Isa isa);

/// Best instruction set compiled in and supported by the running CPU.
Isa detect_isa();

/// Currently dispatched instruction set (detect_isa() unless overridden).
Isa active_isa();

/// Forces dispatch to `isa`; returns false (and changes nothing) when the
/// requested variant is unavailable on this build or CPU.
bool set_isa(Isa isa);

bool isa_available(Isa isa);

// All variants share one reduction order: four interleaved lanes accumulated
// with fused multiply-add, combined as (l0 + l1) + (l2 + l3), then the tail
// fused in sequentially. Every variant therefore returns bit-identical results.

/// sum_i a[i] * b[i]
double dot(const double* a, const double* b, std::size_t n);

/// y[i] = fma(alpha, x[i], y[i])
void axpy(double alpha, const double* x, double* y, std::size_t n);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  axpy(alpha, x.data(), y.data(), x.size() < y.size() ? x.size() : y.size());
}

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2

namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace neon

}  // namespace gridattn::simd
