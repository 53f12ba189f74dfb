// SPDX-License-Identifier: Apache-2.0
//
// AVX2 kernels, 4 doubles per lane. Compiled with -mavx2 but without -mfma:
// multiply and add stay separate so every lane matches the scalar reference.
#include <immintrin.h>

#include "kernels_internal.hpp"

namespace oliera::kernels {
namespace {

void mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void scale(const double* a, double s, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  }
  for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void exp_taylor(const double* x, double* out, std::size_t n, int order) {
  const double* inv_fact = inverse_factorials();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    __m256d p = _mm256_set1_pd(inv_fact[order]);
    for (int k = order - 1; k >= 0; --k) {
      p = _mm256_add_pd(_mm256_mul_pd(p, v), _mm256_set1_pd(inv_fact[k]));
    }
    _mm256_storeu_pd(out + i, p);
  }
  for (; i < n; ++i) {
    const double v = x[i];
    double p = inv_fact[order];
    for (int k = order - 1; k >= 0; --k) p = p * v + inv_fact[k];
    out[i] = p;
  }
}

// Vectorized over output columns; the reduction over the inner dimension runs
// in the same p order as the scalar loop, so each C entry is bit-identical.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d acc0 = _mm256_setzero_pd();
      __m256d acc1 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d aip = _mm256_set1_pd(a[i * k + p]);
        const double* brow = b + p * n + j;
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(aip, _mm256_loadu_pd(brow)));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(aip, _mm256_loadu_pd(brow + 4)));
      }
      _mm256_storeu_pd(crow + j, acc0);
      _mm256_storeu_pd(crow + j + 4, acc1);
    }
    for (; j + 4 <= n; j += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d aip = _mm256_set1_pd(a[i * k + p]);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(aip, _mm256_loadu_pd(b + p * n + j)));
      }
      _mm256_storeu_pd(crow + j, acc);
    }
    for (; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc = acc + a[i * k + p] * b[p * n + j];
      crow[j] = acc;
    }
  }
}

}  // namespace

const KernelTable& avx2_table_unchecked() noexcept {
  static const KernelTable table{
      "avx2", &mul, &add, &sub, &scale, &axpy, &exp_taylor, &gemm,
  };
  return table;
}

}  // namespace oliera::kernels
