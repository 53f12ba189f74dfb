// SPDX-License-Identifier: Apache-2.0
//
// A small tanh MLP whose linear layers carry a frozen base weight plus one
// low-rank adapter per task. Effective weights:
//
//   multiplicative:  W ⊙ exp(B_1A_1) ⊙ ... ⊙ exp(B_tA_t)
//   additive:        W + B_1A_1 + ... + B_tA_t
//
// Only the newest adapter is ever trainable; everything else is frozen.
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "oliera/autodiff.hpp"
#include "oliera/lie.hpp"

namespace oliera {

enum class UpdateMode { multiplicative, additive };

std::string to_string(UpdateMode mode);
/// Accepts "mult"/"multiplicative" and "add"/"additive".
UpdateMode parse_update_mode(const std::string& text);

struct ModelConfig {
  std::size_t input_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t classes = 4;
  std::size_t rank = 4;
  UpdateMode mode = UpdateMode::multiplicative;
  int taylor_order = 2;
  double adapter_init_std = 0.02;
};

class AdaptedLinear {
 public:
  AdaptedLinear(GroupElement base, Tensor bias);

  const GroupElement& base() const noexcept { return base_; }
  const Tensor& bias() const noexcept { return bias_; }
  const std::vector<LoraFactors>& adapters() const noexcept { return adapters_; }
  std::vector<LoraFactors>& adapters() noexcept { return adapters_; }
  std::size_t out_features() const { return base_.shape()[0]; }
  std::size_t in_features() const { return base_.shape()[1]; }

  /// Effective weight using the first `count` adapters.
  Tensor effective_weight(std::size_t count, UpdateMode mode, TaylorOrder order) const;
  Tensor effective_weight(UpdateMode mode, TaylorOrder order) const {
    return effective_weight(adapters_.size(), mode, order);
  }

 private:
  GroupElement base_;
  Tensor bias_;
  std::vector<LoraFactors> adapters_;
};

class ClassifierModel {
 public:
  /// Base weights ~ N(0, 1/in) with |w| < 1e-3 resampled; biases ~ N(0, 0.1^2).
  static ClassifierModel create(const ModelConfig& config, std::uint64_t seed);

  ClassifierModel(std::vector<AdaptedLinear> layers, const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  UpdateMode mode() const noexcept { return config_.mode; }
  TaylorOrder taylor_order() const { return TaylorOrder(config_.taylor_order); }
  const std::vector<AdaptedLinear>& layers() const noexcept { return layers_; }
  std::vector<AdaptedLinear>& layers() noexcept { return layers_; }
  std::size_t adapter_count() const noexcept;
  bool task_active() const noexcept { return active_; }

  /// Appends a neutral adapter (A = 0, B ~ N(0, std^2)) to every layer and
  /// makes it the only trainable one. Throws StateError if a task is active.
  void begin_task(std::mt19937_64& rng);
  /// Reactivates the newest existing adapter instead of appending one (used
  /// when one adapter is shared across tasks).
  void resume_task();
  void end_task();

  /// B and A of the newest adapter of each layer: [B_0, A_0, B_1, A_1, ...].
  std::vector<Tensor*> trainable_parameters();

  std::vector<Tensor> effective_weights() const;
  /// Effective weights using only the first `count` adapters of each layer.
  std::vector<Tensor> effective_weights(std::size_t count) const;

  Tensor forward(const Tensor& x) const;
  /// Forward with explicit effective weights (one per layer) on a caller tape.
  Var forward_with_weights(const Var& x, std::span<const Var> weights) const;

  struct TrainingGraph {
    Var logits;
    std::vector<Var> params;  ///< same order as trainable_parameters()
  };
  /// Forward pass whose only tracked leaves are the active adapter's factors.
  TrainingGraph forward_training(Tape& tape, const Tensor& x) const;

  /// Raw bytes of every frozen tensor (base weights, biases, and all adapters
  /// except the active one).
  std::string frozen_state_bytes() const;

 private:
  void refresh_prefix();

  ModelConfig config_;
  std::vector<AdaptedLinear> layers_;
  std::vector<Tensor> prefix_;  // effective weight of frozen adapters, per layer
  bool active_ = false;
};

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
double accuracy_from_logits(const Tensor& logits, std::span<const int> labels);

}  // namespace oliera
