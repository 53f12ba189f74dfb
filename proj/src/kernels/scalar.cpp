// SPDX-License-Identifier: Apache-2.0
//
// Portable reference kernels. These define the bit-level results every other
// backend must reproduce.
#include "kernels_internal.hpp"

namespace oliera::kernels {
namespace {

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void scale(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void exp_taylor(const double* x, double* out, std::size_t n, int order) {
  const double* inv_fact = inverse_factorials();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    double p = inv_fact[order];
    for (int k = order - 1; k >= 0; --k) p = p * v + inv_fact[k];
    out[i] = p;
  }
}

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{
      "scalar", &mul, &add, &sub, &scale, &axpy, &exp_taylor, &gemm,
  };
  return table;
}

}  // namespace oliera::kernels
