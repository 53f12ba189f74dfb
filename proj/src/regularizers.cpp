// SPDX-License-Identifier: Apache-2.0
#include "oliera/regularizers.hpp"

#include <cmath>

#include "oliera/error.hpp"

namespace oliera {

void LossWeights::validate() const {
  if (!(lambda_orth >= 0.0) || !std::isfinite(lambda_orth)) {
    throw ConfigError("lambda_orth must be a finite nonnegative number");
  }
  if (!(lambda_sparse >= 0.0) || !std::isfinite(lambda_sparse)) {
    throw ConfigError("lambda_sparse must be a finite nonnegative number");
  }
}

Var olier_orth_loss_cached(const Var& b, const Var& a, std::span<const Tensor> previous_exp, TaylorOrder order) {
  Tape& tape = *b.tape();
  if (previous_exp.empty()) return tape.constant(Tensor::scalar(0.0));
  Var cur_exp_t = transpose(exp_taylor(matmul(b, a), order));
  Var total;
  for (const Tensor& prev : previous_exp) {
    if (prev.rows() != cur_exp_t.value().cols() || prev.cols() != cur_exp_t.value().rows()) {
      throw ShapeError("olier_orth_loss: previous update " + to_string(prev.shape()) + " vs current " +
                       to_string(transpose(cur_exp_t.value()).shape()));
    }
    Var term = frobenius_norm(matmul(tape.constant(prev), cur_exp_t));
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

Var olier_orth_loss(const Var& b, const Var& a, std::span<const LoraFactors> previous, TaylorOrder order) {
  std::vector<Tensor> prev_exp;
  prev_exp.reserve(previous.size());
  for (const LoraFactors& f : previous) prev_exp.push_back(exp_taylor(delta_from_factors(f), order));
  return olier_orth_loss_cached(b, a, prev_exp, order);
}

double olier_orth_loss(const LoraFactors& current, std::span<const LoraFactors> previous, TaylorOrder order) {
  Tape tape;
  return olier_orth_loss(tape.constant(current.B()), tape.constant(current.A()), previous, order).value().item();
}

double olier_orth_all_pairs(std::span<const LoraFactors> adapters, TaylorOrder order) {
  std::vector<Tensor> exps;
  for (const LoraFactors& f : adapters) exps.push_back(exp_taylor(delta_from_factors(f), order));
  double total = 0.0;
  for (std::size_t i = 0; i < exps.size(); ++i) {
    for (std::size_t j = 0; j < exps.size(); ++j) {
      if (i != j) total += frobenius_norm(matmul(exps[i], transpose(exps[j])));
    }
  }
  return total;
}

Tensor olora_orth_matrix(const Tensor& b_prev, const Tensor& b_cur) {
  if (b_prev.rank() != 2 || b_cur.rank() != 2 || b_prev.rows() != b_cur.rows()) {
    throw ShapeError("olora_orth_matrix: row counts differ, " + to_string(b_prev.shape()) + " vs " +
                     to_string(b_cur.shape()));
  }
  return matmul(transpose(b_prev), b_cur);
}

Var olora_loss(const Var& b_cur, std::span<const Tensor> previous_bs) {
  Tape& tape = *b_cur.tape();
  if (previous_bs.empty()) return tape.constant(Tensor::scalar(0.0));
  Var total;
  for (const Tensor& b_prev : previous_bs) {
    if (b_prev.rank() != 2 || b_prev.rows() != b_cur.value().rows()) {
      throw ShapeError("olora_loss: row counts differ, " + to_string(b_prev.shape()) + " vs " +
                       to_string(b_cur.value().shape()));
    }
    Var overlap = matmul(tape.constant(transpose(b_prev)), b_cur);
    Var term = sum(hadamard(overlap, overlap));
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

double olora_loss(const Tensor& b_cur, std::span<const Tensor> previous_bs) {
  Tape tape;
  return olora_loss(tape.constant(b_cur), previous_bs).value().item();
}

Var nlora_sparsity(const Var& b, const Var& a) { return l1_norm(matmul(b, a)); }

double nlora_sparsity(const LoraFactors& f) { return l1_norm(delta_from_factors(f)); }

Var total_loss(const Var& task, const Var& orth, const Var& sparse, const LossWeights& w) {
  w.validate();
  if (!std::isfinite(task.value().item())) throw NumericError("total_loss: task loss is not finite");
  return add(add(task, scale(orth, w.lambda_orth)), scale(sparse, w.lambda_sparse));
}

double total_loss(double task, double orth, double sparse, const LossWeights& w) {
  w.validate();
  if (!std::isfinite(task)) throw NumericError("total_loss: task loss is not finite");
  return task + w.lambda_orth * orth + w.lambda_sparse * sparse;
}

}  // namespace oliera
