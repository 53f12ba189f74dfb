// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode differentiation over Tensor values.
//
// A Tape records every operation applied to its Vars. Leaves created with
// Tape::leaf are tracked; Tape::constant values never receive gradients.
// backward() walks the recorded nodes once, in reverse creation order (which is
// a topological order), and returns gradients only for tracked leaves that the
// loss actually depends on. A tape is single-threaded and single-use: reset()
// it (or make a new one) for the next training step.
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

#include "oliera/tensor.hpp"

namespace oliera {

class Tape;

class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  bool requires_grad() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class GradientMap {
 public:
  bool contains(const Var& v) const { return grads_.contains(v.id()); }
  /// Throws ContractError when `v` has no gradient.
  const Tensor& at(const Var& v) const;
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, Tensor> grads_;
};

/// Handed to an op's backward function; routes gradient contributions to the
/// op's parents (in the order they were passed to Tape::record).
class GradAccumulator {
 public:
  bool wants(std::size_t parent) const;
  void add(std::size_t parent, const Tensor& contribution);

 private:
  friend class Tape;
  GradAccumulator(Tape& tape, std::span<const std::size_t> parents) : tape_(tape), parents_(parents) {}
  Tape& tape_;
  std::span<const std::size_t> parents_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out, GradAccumulator& acc)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var constant(Tensor value);

  /// Record an op result. `backward` is dropped when no parent needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn backward);

  /// Gradient of a single-element `loss` with respect to every tracked leaf it
  /// depends on. Consumes the tape.
  GradientMap backward(const Var& loss);

  void reset();
  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }
  /// Number of nodes whose backward function ran in the last backward().
  std::size_t last_backward_visits() const noexcept { return visits_; }

 private:
  friend class Var;
  friend class GradAccumulator;

  struct Node {
    Tensor value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  const Node& node(const Var& v) const;
  void check_owned(const Var& v) const;

  std::deque<Node> nodes_;  // stable addresses for value()
  std::vector<Tensor> grads_;  // scratch during backward()
  bool consumed_ = false;
  std::size_t visits_ = 0;
};

// Differentiable ops. Operands must live on the same tape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& m);
Var sum(const Var& m);
Var tanh(const Var& x);
/// Elementwise sum_{k=0..order} x^k / k!; `order` >= 1.
Var exp_taylor(const Var& x, int order);
/// Gradient M/||M|| away from zero; the zero tensor gets a zero gradient.
Var frobenius_norm(const Var& m);
/// Subgradient sign(M) with sign(0) = 0.
Var l1_norm(const Var& m);
/// x: batch x features, bias: rank-1 of length features. Adds bias to each row.
Var add_row_bias(const Var& x, const Var& bias);
/// Mean over rows of -log softmax(logits)[label].
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);
/// Entries with |x| <= eps are moved to the smallest magnitude above eps, sign
/// preserved (+0 goes positive); their gradient is zero. `clamped`, when given, receives the count.
Var clamp_magnitude(const Var& x, double eps, std::size_t* clamped = nullptr);

/// Central-difference gradient of `f` at `x`, entry by entry.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double step);

}  // namespace oliera
