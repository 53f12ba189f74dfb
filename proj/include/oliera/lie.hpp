// SPDX-License-Identifier: Apache-2.0
//
// The Hadamard Lie group: same-shape tensors with every entry nonzero, under
// elementwise multiplication. The identity is the all-ones tensor (not the
// identity matrix), inverses are elementwise reciprocals, and the group is
// Abelian. Its Lie algebra is the space of unconstrained real tensors; the
// exponential map is the elementwise exp, approximated by a truncated Taylor
// series. Low-rank perturbations BA live in the algebra and update a frozen
// weight multiplicatively: W -> W ⊙ exp(BA).
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "oliera/autodiff.hpp"
#include "oliera/tensor.hpp"

namespace oliera {

/// Entries with |w| <= kMembershipEps are treated as zero.
inline constexpr double kMembershipEps = 1e-12;

class TaylorOrder {
 public:
  /// Throws ContractError for n < 1.
  explicit TaylorOrder(int n);
  int value() const noexcept { return n_; }
  friend bool operator==(TaylorOrder, TaylorOrder) = default;

 private:
  int n_;
};

class GroupElement {
 public:
  /// Validates membership; see group_check.
  explicit GroupElement(Tensor value, double eps = kMembershipEps);

  const Tensor& value() const noexcept { return value_; }
  const Shape& shape() const noexcept { return value_.shape(); }

 private:
  Tensor value_;
};

/// Low-rank factor pair with delta = B * A. B is out x r, A is r x in.
class LoraFactors {
 public:
  /// Throws ShapeError unless B and A are rank 2, agree on r, and
  /// r <= min(out, in).
  LoraFactors(Tensor b, Tensor a);

  const Tensor& B() const noexcept { return b_; }
  const Tensor& A() const noexcept { return a_; }
  Tensor& B() noexcept { return b_; }
  Tensor& A() noexcept { return a_; }
  std::size_t rank() const noexcept { return b_.cols(); }
  std::size_t out_features() const noexcept { return b_.rows(); }
  std::size_t in_features() const noexcept { return a_.cols(); }
  Shape delta_shape() const { return {b_.rows(), a_.cols()}; }

 private:
  Tensor b_;
  Tensor a_;
};

/// Returns W as a group element if every |entry| > eps; otherwise throws
/// MembershipError naming the first offending (row, col).
GroupElement group_check(const Tensor& w, double eps = kMembershipEps);
GroupElement group_identity(const Shape& shape);
GroupElement group_mul(const GroupElement& a, const GroupElement& b);
GroupElement group_inverse(const GroupElement& w);

/// The increment D with W_old ⊙ D = W_new, i.e. W_old^-1 ⊙ W_new.
Tensor recover_delta(const GroupElement& w_old, const GroupElement& w_new);

/// Elementwise sum_{k=0..n} delta^k / k!.
Tensor exp_taylor(const Tensor& delta, TaylorOrder order);
Var exp_taylor(const Var& delta, TaylorOrder order);

Tensor delta_from_factors(const LoraFactors& f);

/// W ⊙ exp_taylor(BA, order), membership-guarded (see guard_membership).
Tensor apply_update(const GroupElement& w, const LoraFactors& f, TaylorOrder order);
/// Differentiable form: b and a are Vars on a tape (usually leaves); W enters
/// as a constant and never receives a gradient.
Var apply_update(const GroupElement& w, const Var& b, const Var& a, TaylorOrder order);

/// W ⊙ exp_taylor(B_1A_1) ⊙ exp_taylor(B_2A_2) ⊙ ..., folded left in task order.
Tensor compose_task_updates(const GroupElement& w, std::span<const LoraFactors> adapters, TaylorOrder order);

/// Entries with |x| <= eps are pushed just above eps with their sign kept and a
/// warning is logged. Returns the number of entries changed.
std::size_t guard_membership(Tensor& x, double eps = kMembershipEps);
/// Logs a clamp event and adds it to membership_clamp_count().
void report_membership_clamp(std::size_t count, const char* where);
/// Total number of entries clamped by guard_membership in this process.
std::size_t membership_clamp_count() noexcept;

}  // namespace oliera
