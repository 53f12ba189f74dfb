// SPDX-License-Identifier: Apache-2.0
#include <array>
#include <atomic>
#include <cstdlib>
#include <iostream>

#include "kernels_internal.hpp"

namespace oliera::kernels {
namespace {

constexpr std::array<double, kMaxTaylorOrder + 1> make_inverse_factorials() {
  std::array<double, kMaxTaylorOrder + 1> out{};
  double fact = 1.0;
  out[0] = 1.0;
  for (int k = 1; k <= kMaxTaylorOrder; ++k) {
    fact *= k;
    out[k] = 1.0 / fact;
  }
  return out;
}

constexpr auto kInverseFactorials = make_inverse_factorials();

bool cpu_has_avx2() noexcept {
#if defined(OLIERA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* initial_table() noexcept {
  const KernelTable* best = avx2_table();
  if (best == nullptr) best = &scalar_table();
  if (const char* forced = std::getenv("OLIERA_KERNELS")) {
    const std::string_view name(forced);
    if (name == "scalar") return &scalar_table();
    if (name == "avx2" && avx2_table() != nullptr) return avx2_table();
    std::cerr << "[oliera] OLIERA_KERNELS=" << name << " unavailable, using " << best->name
              << "\n";
  }
  return best;
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const double* inverse_factorials() noexcept { return kInverseFactorials.data(); }

const KernelTable* avx2_table() noexcept {
#if defined(OLIERA_HAVE_AVX2)
  static const bool supported = cpu_has_avx2();
  return supported ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

bool select(std::string_view name) noexcept {
  if (name == "scalar") {
    current().store(&scalar_table());
    return true;
  }
  if (name == "avx2" && avx2_table() != nullptr) {
    current().store(avx2_table());
    return true;
  }
  return false;
}

}  // namespace oliera::kernels
