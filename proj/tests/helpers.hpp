// SPDX-License-Identifier: Apache-2.0
//
// Oracles and random inputs shared by the unit tests and the acceptance suite.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "oliera/autodiff.hpp"
#include "oliera/lie.hpp"
#include "oliera/tensor.hpp"

namespace oliera::testing {

inline Tensor uniform(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(shape);
  for (double& v : t.data()) v = d(rng);
  return t;
}

/// Uniform magnitudes in [lo, hi] with random signs; never near zero.
inline Tensor nonzero(const Shape& shape, std::mt19937_64& rng, double lo = 0.1, double hi = 2.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::bernoulli_distribution sign(0.5);
  Tensor t(shape);
  for (double& v : t.data()) v = sign(rng) ? d(rng) : -d(rng);
  return t;
}

inline Tensor matmul_loop(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      c(i, j) = s;
    }
  }
  return c;
}

inline Tensor exp_true(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = std::exp(x[i]);
  return out;
}

inline double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

/// Singular values via cyclic Jacobi on M^T M (small matrices only).
inline std::vector<double> singular_values(const Tensor& m) {
  const std::size_t n = m.cols();
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t r = 0; r < m.rows(); ++r) a[i * n + j] += m(r, i) * m(r, j);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p];
          const double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k];
          const double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> sv;
  for (std::size_t i = 0; i < n; ++i) sv.push_back(std::sqrt(std::max(0.0, a[i * n + i])));
  std::sort(sv.rbegin(), sv.rend());
  return sv;
}

// Singular values come from the Gram matrix, so exact zeros surface near sqrt(eps) * s_max.
inline std::size_t numerical_rank(const Tensor& m, double rel_tol = 1e-6) {
  const std::vector<double> sv = singular_values(m);
  if (sv.empty() || sv.front() == 0.0) return 0;
  return static_cast<std::size_t>(
      std::count_if(sv.begin(), sv.end(), [&](double s) { return s > rel_tol * sv.front(); }));
}

/// Builds a scalar loss from leaves holding `inputs`.
using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double graph_value(const GraphFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.constant(t));
  return f(tape, leaves).value().item();
}

/// ||g - fd||_2 / max(||g||_2, ||fd||_2, floor), worst over all inputs.
inline double gradient_check(const GraphFn& f, const std::vector<Tensor>& inputs, double step = 1e-5,
                             double floor = 1e-6) {
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  const GradientMap grads = tape.backward(f(tape, leaves));
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor fd = finite_diff_grad(
        [&](const Tensor& x) {
          std::vector<Tensor> in = inputs;
          in[i] = x;
          return graph_value(f, in);
        },
        inputs[i], step);
    const Tensor g = grads.contains(leaves[i]) ? grads.at(leaves[i]) : Tensor::zeros(inputs[i].shape());
    double diff = 0.0;
    double ng = 0.0;
    double nf = 0.0;
    for (std::size_t k = 0; k < g.numel(); ++k) {
      diff += (g[k] - fd[k]) * (g[k] - fd[k]);
      ng += g[k] * g[k];
      nf += fd[k] * fd[k];
    }
    worst = std::max(worst, std::sqrt(diff) / std::max({std::sqrt(ng), std::sqrt(nf), floor}));
  }
  return worst;
}

}  // namespace oliera::testing
