// SPDX-License-Identifier: Apache-2.0
//
// Inner-loop kernels behind the tensor layer. Each backend implements the
// same table; the active one is chosen once at startup from CPU features and
// can be forced with OLIERA_KERNELS=scalar|avx2.
//
// Every variant performs the same IEEE operations in the same order per output
// element (no FMA, no reassociation), so results are bit-identical across
// backends. Reductions are not part of the table for that reason.
#pragma once

#include <cstddef>
#include <string_view>

namespace oliera::kernels {

/// Highest order supported by exp_taylor kernels.
inline constexpr int kMaxTaylorOrder = 20;

struct KernelTable {
  std::string_view name;

  // out[i] = a[i] op b[i]; out may alias a or b.
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*scale)(const double* a, double s, double* out, std::size_t n);
  /// y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  /// out[i] = sum_{k=0..order} x[i]^k / k!, Horner form.
  void (*exp_taylor)(const double* x, double* out, std::size_t n, int order);

  /// C[m x n] = A[m x k] * B[k x n], row-major, C overwritten.
  void (*gemm)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n);
};

const KernelTable& scalar_table() noexcept;

/// nullptr when not compiled in or not supported by this CPU.
const KernelTable* avx2_table() noexcept;

/// Table used by the tensor layer.
const KernelTable& active() noexcept;

/// Force a backend by name ("scalar", "avx2"). Returns false if unavailable.
bool select(std::string_view name) noexcept;

/// 1/k! for k = 0..kMaxTaylorOrder, shared by all backends.
const double* inverse_factorials() noexcept;

}  // namespace oliera::kernels
