// SPDX-License-Identifier: Apache-2.0
#include "oliera/lie.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>

#include "oliera/error.hpp"

namespace oliera {
namespace {

std::atomic<std::size_t> g_clamped{0};

}  // namespace

void report_membership_clamp(std::size_t count, const char* where) {
  g_clamped.fetch_add(count, std::memory_order_relaxed);
  std::cerr << "[oliera] warning: " << where << ": " << count
            << " weight entr" << (count == 1 ? "y" : "ies") << " below the membership epsilon, clamped\n";
}

TaylorOrder::TaylorOrder(int n) : n_(n) {
  if (n < 1) throw ContractError("Taylor order must be >= 1, got " + std::to_string(n));
}

GroupElement::GroupElement(Tensor value, double eps) : value_(std::move(value)) {
  if (!(eps > 0.0)) throw ContractError("membership epsilon must be positive");
  if (value_.empty()) throw ShapeError("group element must be non-empty");
  const std::size_t cols = value_.cols();
  for (std::size_t i = 0; i < value_.numel(); ++i) {
    if (!(std::fabs(value_[i]) > eps)) {
      const std::size_t r = i / cols;
      const std::size_t c = i % cols;
      throw MembershipError("entry (" + std::to_string(r) + "," + std::to_string(c) + ") = " +
                                std::to_string(value_[i]) + " is not a group member (|w| <= eps)",
                            r, c);
    }
  }
}

LoraFactors::LoraFactors(Tensor b, Tensor a) : b_(std::move(b)), a_(std::move(a)) {
  if (b_.rank() != 2 || a_.rank() != 2) throw ShapeError("LoRA factors must be rank 2");
  if (b_.cols() != a_.rows()) {
    throw ShapeError("LoRA rank mismatch: B " + to_string(b_.shape()) + ", A " + to_string(a_.shape()));
  }
  if (b_.cols() > std::min(b_.rows(), a_.cols())) {
    throw ShapeError("LoRA rank " + std::to_string(b_.cols()) + " exceeds min(out, in) for B " +
                     to_string(b_.shape()) + ", A " + to_string(a_.shape()));
  }
}

GroupElement group_check(const Tensor& w, double eps) { return GroupElement(w, eps); }

GroupElement group_identity(const Shape& shape) { return GroupElement(ones(shape)); }

GroupElement group_mul(const GroupElement& a, const GroupElement& b) {
  return GroupElement(hadamard(a.value(), b.value()));
}

GroupElement group_inverse(const GroupElement& w) {
  Tensor out(w.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / w.value()[i];
  require_finite(out, "group_inverse");
  return GroupElement(std::move(out));
}

Tensor recover_delta(const GroupElement& w_old, const GroupElement& w_new) {
  require_same_shape(w_old.value(), w_new.value(), "recover_delta");
  return hadamard(group_inverse(w_old).value(), w_new.value());
}

Tensor exp_taylor(const Tensor& delta, TaylorOrder order) { return exp_series(delta, order.value()); }

Var exp_taylor(const Var& delta, TaylorOrder order) { return exp_taylor(delta, order.value()); }

Tensor delta_from_factors(const LoraFactors& f) { return matmul(f.B(), f.A()); }

Tensor apply_update(const GroupElement& w, const LoraFactors& f, TaylorOrder order) {
  if (w.shape() != f.delta_shape()) {
    throw ShapeError("apply_update: weight " + to_string(w.shape()) + " vs adapter delta " +
                     to_string(f.delta_shape()));
  }
  Tensor out = hadamard(w.value(), exp_taylor(delta_from_factors(f), order));
  guard_membership(out);
  return out;
}

Var apply_update(const GroupElement& w, const Var& b, const Var& a, TaylorOrder order) {
  Tape& tape = *b.tape();
  Var delta = matmul(b, a);
  if (delta.value().shape() != w.shape()) {
    throw ShapeError("apply_update: weight " + to_string(w.shape()) + " vs adapter delta " +
                     to_string(delta.value().shape()));
  }
  Var updated = hadamard(tape.constant(w.value()), exp_taylor(delta, order));
  std::size_t clamped = 0;
  Var guarded = clamp_magnitude(updated, kMembershipEps, &clamped);
  if (clamped > 0) report_membership_clamp(clamped, "apply_update");
  return guarded;
}

Tensor compose_task_updates(const GroupElement& w, std::span<const LoraFactors> adapters, TaylorOrder order) {
  Tensor out = w.value();
  for (const LoraFactors& f : adapters) {
    if (f.delta_shape() != w.shape()) {
      throw ShapeError("compose_task_updates: weight " + to_string(w.shape()) + " vs adapter delta " +
                       to_string(f.delta_shape()));
    }
    out = hadamard(out, exp_taylor(delta_from_factors(f), order));
  }
  guard_membership(out);
  return out;
}

std::size_t guard_membership(Tensor& x, double eps) {
  const double floor = std::nextafter(eps, 1.0);
  std::size_t count = 0;
  for (double& v : x.data()) {
    if (std::fabs(v) <= eps) {
      v = std::signbit(v) ? -floor : floor;
      ++count;
    }
  }
  if (count > 0) report_membership_clamp(count, "group membership guard");
  return count;
}

std::size_t membership_clamp_count() noexcept { return g_clamped.load(std::memory_order_relaxed); }

}  // namespace oliera
