// SPDX-License-Identifier: Apache-2.0
//
// Sequential-task training. Every task gets a fresh adapter (except seq-lora,
// which keeps training one shared adapter), is trained with momentum SGD on
//
//   L = L_task + lambda_orth * L_orth + lambda_sparse * L_sparse
//
// and then frozen. Which orthogonality term is used depends on the method:
//
//   olier     full-update-space term, multiplicative updates by default
//   olora     B_i^T B_t overlap term, additive
//   nlora     same as olora plus the l1 term, additive
//   inc-lora  no penalties, additive
//   seq-lora  no penalties, one adapter reused, additive
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oliera/model.hpp"
#include "oliera/regularizers.hpp"
#include "oliera/taskgen.hpp"

namespace oliera {

enum class Method { olier, olora, nlora, seq_lora, inc_lora };

std::string to_string(Method method);
Method parse_method(const std::string& text);
/// True when the method appends a new adapter per task.
bool uses_incremental_adapters(Method method);

struct TrainingConfig {
  Method method = Method::olier;
  int taylor_order = 2;
  LossWeights loss_weights{0.5, 0.0};
  double learning_rate = 0.02;
  double momentum = 0.9;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  /// Unset: multiplicative for olier, additive for every other method.
  std::optional<UpdateMode> update_mode;
  std::size_t rank = 4;
  std::size_t hidden_dim = 64;

  /// Throws ConfigError on lr <= 0, epochs == 0, batch_size == 0, order < 1,
  /// or negative loss weights.
  void validate() const;
  UpdateMode resolved_update_mode() const;
  ModelConfig model_config(std::size_t input_dim, std::size_t classes) const;
};

/// Abort threshold on the total loss.
inline constexpr double kDivergenceThreshold = 1e6;

struct LossComponents {
  double task = 0.0;
  double orth = 0.0;
  double sparse = 0.0;
  double total = 0.0;
};

struct TrainingLog {
  std::vector<LossComponents> steps;   ///< one entry per minibatch
  std::vector<LossComponents> epochs;  ///< per-epoch means of `steps`
  /// Mean |B_i^T B_t| over previous adapters and layers, before and after
  /// training (0 when there is no previous adapter).
  double overlap_start = 0.0;
  double overlap_end = 0.0;
};

/// Trains the model's active adapter on `task`. `task_index` is the task's
/// position in the stream and only feeds the minibatch RNG.
TrainingLog train_task(ClassifierModel& model, const Task& task, const TrainingConfig& config,
                       std::size_t task_index);

/// Test-split accuracy; argmax ties resolve to the lowest class index.
double evaluate(const ClassifierModel& model, const Task& task);
double evaluate(const ClassifierModel& model, const Dataset& data);

/// Mean |entries of B_i^T B_t| between the active adapter and every frozen one.
double mean_overlap(const ClassifierModel& model);

class AccuracyMatrix {
 public:
  explicit AccuracyMatrix(std::size_t tasks = 0);

  std::size_t tasks() const noexcept { return tasks_; }
  /// a[i][j], accuracy on task i after training task j. Requires i <= j.
  void set(std::size_t i, std::size_t j, double value);
  bool populated(std::size_t i, std::size_t j) const;
  /// Throws ContractError when the entry was never set.
  double at(std::size_t i, std::size_t j) const;

  friend bool operator==(const AccuracyMatrix& a, const AccuracyMatrix& b);

 private:
  std::size_t tasks_;
  std::vector<double> values_;
  std::vector<char> set_;
};

/// Mean of the final column.
double average_accuracy(const AccuracyMatrix& m);
double average_accuracy(std::span<const double> final_column);
/// Mean over tasks i < T of (max_j a[i][j] - a[i][T]).
double mean_forgetting(const AccuracyMatrix& m);

/// Trained adapter state after each task: per_task[t][layer]. With `reuse`
/// (seq-lora) each entry is a snapshot of the one shared adapter; otherwise
/// per_task[t] are exactly the adapters appended for task t.
struct AdapterHistory {
  bool reuse = false;
  std::vector<std::vector<LoraFactors>> per_task;

  std::size_t tasks() const noexcept { return per_task.size(); }
  /// `base` with its adapters replaced by the state after task `index`.
  ClassifierModel state_after(const ClassifierModel& base, std::size_t index) const;
};

struct TaskRecord {
  int task_id = 0;
  double seconds = 0.0;
  TrainingLog log;
};

struct RunResult {
  AccuracyMatrix accuracy;
  std::vector<TaskRecord> tasks;
  AdapterHistory history;
  ClassifierModel model;
  double average_accuracy = 0.0;
};

/// The frozen base model a run starts from (no adapters).
ClassifierModel initial_model(const TrainingConfig& config, std::size_t input_dim, std::size_t classes);

/// begin_task -> train_task -> evaluate on every task seen so far, for each task
/// in order. Re-checks after each task that no frozen tensor changed.
RunResult run_stream(const TaskStream& stream, const TrainingConfig& config);

}  // namespace oliera
