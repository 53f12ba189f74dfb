// SPDX-License-Identifier: Apache-2.0
//
// Loss terms for sequential adapter training.
//
//   olier_orth_loss  sum_i || exp(B_iA_i) exp(B_cA_c)^T ||_F   (full update space)
//   olora_loss       sum_i sum_{j,k} (B_i^T B_c)[j,k]^2        (column spaces of B)
//   nlora_sparsity   || B_cA_c ||_1
//   total_loss       task + lambda_orth * orth + lambda_sparse * sparse
//
// The Var overloads take the current task's factors as tape Vars; previous
// tasks' factors are always entered as constants, so they never receive
// gradients. The Tensor overloads evaluate the same graph on a private tape.
#pragma once

#include <span>

#include "oliera/autodiff.hpp"
#include "oliera/lie.hpp"

namespace oliera {

struct LossWeights {
  double lambda_orth = 0.0;
  double lambda_sparse = 0.0;

  /// Throws ConfigError if either weight is negative or non-finite.
  void validate() const;
};

/// Same as olier_orth_loss below with previous exp_taylor(B_iA_i) supplied
/// precomputed (the trainer caches them once per task).
Var olier_orth_loss_cached(const Var& b, const Var& a, std::span<const Tensor> previous_exp, TaylorOrder order);
Var olier_orth_loss(const Var& b, const Var& a, std::span<const LoraFactors> previous, TaylorOrder order);
double olier_orth_loss(const LoraFactors& current, std::span<const LoraFactors> previous, TaylorOrder order);

/// Sum over all ordered pairs i != j of ||exp(B_iA_i) exp(B_jA_j)^T||_F, used
/// for reporting only.
double olier_orth_all_pairs(std::span<const LoraFactors> adapters, TaylorOrder order);

Tensor olora_orth_matrix(const Tensor& b_prev, const Tensor& b_cur);
Var olora_loss(const Var& b_cur, std::span<const Tensor> previous_bs);
double olora_loss(const Tensor& b_cur, std::span<const Tensor> previous_bs);

Var nlora_sparsity(const Var& b, const Var& a);
double nlora_sparsity(const LoraFactors& f);

Var total_loss(const Var& task, const Var& orth, const Var& sparse, const LossWeights& w);
double total_loss(double task, double orth, double sparse, const LossWeights& w);

}  // namespace oliera
