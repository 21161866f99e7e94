// SPDX-License-Identifier: Apache-2.0
#include <atomic>

#include "gridattn/simd/kernels.hpp"

namespace gridattn::simd {

namespace {

using DotFn = double (*)(const double*, const double*, std::size_t);
using AxpyFn = void (*)(double, const double*, double*, std::size_t);

struct KernelTable {
  Isa isa;
  DotFn dot;
  AxpyFn axpy;
};

constexpr KernelTable kScalarTable{Isa::kScalar, &scalar::dot, &scalar::axpy};
#if defined(GRIDATTN_HAVE_AVX2)
constexpr KernelTable kAvx2Table{Isa::kAvx2, &avx2::dot, &avx2::axpy};
#endif
#if defined(GRIDATTN_HAVE_NEON)
constexpr KernelTable kNeonTable{Isa::kNeon, &neon::dot, &neon::axpy};
#endif

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return &kScalarTable;
    case Isa::kAvx2:
#if defined(GRIDATTN_HAVE_AVX2)
      if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return &kAvx2Table;
#endif
      return nullptr;
    case Isa::kNeon:
#if defined(GRIDATTN_HAVE_NEON)
      return &kNeonTable;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

const KernelTable* initial_table() {
  return table_for(detect_isa());
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const char* to_string(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) { return table_for(isa) != nullptr; }

Isa detect_isa() {
  if (isa_available(Isa::kAvx2)) return Isa::kAvx2;
  if (isa_available(Isa::kNeon)) return Isa::kNeon;
  return Isa::kScalar;
}

Isa active_isa() { return current().load(std::memory_order_relaxed)->isa; }

bool set_isa(Isa isa) {
  const KernelTable* table = table_for(isa);
  if (table == nullptr) return false;
  current().store(table, std::memory_order_relaxed);
  return true;
}

double dot(const double* a, const double* b, std::size_t n) {
  return current().load(std::memory_order_relaxed)->dot(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  current().load(std::memory_order_relaxed)->axpy(alpha, x, y, n);
}

}  // namespace gridattn::simd
