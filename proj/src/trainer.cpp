// SPDX-License-Identifier: Apache-2.0
#include "oliera/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "oliera/error.hpp"

namespace oliera {
namespace {

enum class Stream : std::uint32_t { model_init = 1, adapter_init = 2, minibatch = 3 };

std::mt19937_64 derived_rng(std::uint64_t seed, Stream purpose, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

struct LayerPenaltyContext {
  std::vector<Tensor> previous_exp;  // olier: exp_taylor(B_iA_i) of frozen adapters
  std::vector<Tensor> previous_b;    // olora / nlora
};

std::vector<LayerPenaltyContext> penalty_context(const ClassifierModel& model, const TrainingConfig& config) {
  std::vector<LayerPenaltyContext> ctx(model.layers().size());
  if (!uses_incremental_adapters(config.method)) return ctx;
  const TaylorOrder order(config.taylor_order);
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& adapters = model.layers()[l].adapters();
    for (std::size_t t = 0; t + 1 < adapters.size(); ++t) {
      if (config.method == Method::olier) {
        ctx[l].previous_exp.push_back(exp_taylor(delta_from_factors(adapters[t]), order));
      } else if (config.method == Method::olora || config.method == Method::nlora) {
        ctx[l].previous_b.push_back(adapters[t].B());
      }
    }
  }
  return ctx;
}

bool has_sparse_term(Method m) { return m == Method::olier || m == Method::olora || m == Method::nlora; }

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::olier: return "olier";
    case Method::olora: return "olora";
    case Method::nlora: return "nlora";
    case Method::seq_lora: return "seq-lora";
    case Method::inc_lora: return "inc-lora";
  }
  return "unknown";
}

Method parse_method(const std::string& text) {
  if (text == "olier") return Method::olier;
  if (text == "olora") return Method::olora;
  if (text == "nlora") return Method::nlora;
  if (text == "seq-lora") return Method::seq_lora;
  if (text == "inc-lora") return Method::inc_lora;
  throw ConfigError("unknown method '" + text + "' (expected olier, olora, nlora, seq-lora, inc-lora)");
}

bool uses_incremental_adapters(Method method) { return method != Method::seq_lora; }

void TrainingConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (taylor_order < 1) throw ConfigError("taylor order must be >= 1");
  if (rank == 0 || hidden_dim == 0) throw ConfigError("rank and hidden_dim must be >= 1");
  loss_weights.validate();
}

UpdateMode TrainingConfig::resolved_update_mode() const {
  if (update_mode) return *update_mode;
  return method == Method::olier ? UpdateMode::multiplicative : UpdateMode::additive;
}

ModelConfig TrainingConfig::model_config(std::size_t input_dim, std::size_t classes) const {
  ModelConfig mc;
  mc.input_dim = input_dim;
  mc.hidden_dim = hidden_dim;
  mc.classes = classes;
  mc.rank = rank;
  mc.mode = resolved_update_mode();
  mc.taylor_order = taylor_order;
  return mc;
}

double mean_overlap(const ClassifierModel& model) {
  double total = 0.0;
  std::size_t count = 0;
  for (const AdaptedLinear& l : model.layers()) {
    const auto& adapters = l.adapters();
    if (adapters.size() < 2) continue;
    const Tensor& current = adapters.back().B();
    for (std::size_t t = 0; t + 1 < adapters.size(); ++t) {
      const Tensor o = olora_orth_matrix(adapters[t].B(), current);
      for (double v : o.data()) total += std::fabs(v);
      count += o.numel();
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

TrainingLog train_task(ClassifierModel& model, const Task& task, const TrainingConfig& config,
                       std::size_t task_index) {
  config.validate();
  if (!model.task_active()) throw StateError("train_task: call begin_task first");
  if (model.taylor_order().value() != config.taylor_order || model.mode() != config.resolved_update_mode()) {
    throw ConfigError("train_task: model and config disagree on update mode or Taylor order");
  }
  const Dataset& data = task.train;
  if (data.size() == 0) throw ContractError("train_task: empty training set");

  const TaylorOrder order(config.taylor_order);
  const std::vector<LayerPenaltyContext> ctx = penalty_context(model, config);
  std::vector<Tensor*> params = model.trainable_parameters();
  std::vector<Tensor> velocity;
  for (Tensor* p : params) velocity.emplace_back(p->shape());

  TrainingLog log;
  log.overlap_start = mean_overlap(model);
  const std::size_t batches = (data.size() + config.batch_size - 1) / config.batch_size;
  std::vector<std::size_t> order_idx(data.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order_idx.begin(), order_idx.end(), 0);
    std::mt19937_64 rng = derived_rng(config.seed, Stream::minibatch, task_index, epoch);
    std::shuffle(order_idx.begin(), order_idx.end(), rng);
    LossComponents epoch_sum;

    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(begin + config.batch_size, data.size());
      const Dataset batch =
          data.gather(std::vector<std::size_t>(order_idx.begin() + begin, order_idx.begin() + end));

      Tape tape;
      ClassifierModel::TrainingGraph graph = model.forward_training(tape, batch.x);
      Var task_loss = softmax_cross_entropy(graph.logits, batch.y);
      Var orth = tape.constant(Tensor::scalar(0.0));
      Var sparse = tape.constant(Tensor::scalar(0.0));
      for (std::size_t l = 0; l < model.layers().size(); ++l) {
        const Var& bv = graph.params[2 * l];
        const Var& av = graph.params[2 * l + 1];
        if (config.method == Method::olier && !ctx[l].previous_exp.empty()) {
          orth = add(orth, olier_orth_loss_cached(bv, av, ctx[l].previous_exp, order));
        } else if ((config.method == Method::olora || config.method == Method::nlora) &&
                   !ctx[l].previous_b.empty()) {
          orth = add(orth, olora_loss(bv, ctx[l].previous_b));
        }
        if (has_sparse_term(config.method) && config.loss_weights.lambda_sparse > 0.0) {
          sparse = add(sparse, nlora_sparsity(bv, av));
        }
      }
      if (!std::isfinite(task_loss.value().item())) {
        throw DivergenceError("training diverged on task " + std::to_string(task.id) + ", epoch " +
                              std::to_string(epoch) + ": task loss is not finite");
      }
      Var total = total_loss(task_loss, orth, sparse, config.loss_weights);

      LossComponents step{task_loss.value().item(), orth.value().item(), sparse.value().item(),
                          total.value().item()};
      if (!std::isfinite(step.total) || step.total > kDivergenceThreshold) {
        throw DivergenceError("training diverged on task " + std::to_string(task.id) + ", epoch " +
                              std::to_string(epoch) + ", batch " + std::to_string(b) +
                              ": total loss = " + std::to_string(step.total));
      }
      const GradientMap grads = tape.backward(total);
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (!grads.contains(graph.params[i])) continue;
        const Tensor& g = grads.at(graph.params[i]);
        Tensor& v = velocity[i];
        for (std::size_t k = 0; k < v.numel(); ++k) v[k] = config.momentum * v[k] + g[k];
        Tensor& p = *params[i];
        for (std::size_t k = 0; k < p.numel(); ++k) p[k] -= config.learning_rate * v[k];
        if (!all_finite(p)) {
          throw DivergenceError("training diverged on task " + std::to_string(task.id) +
                                ": non-finite adapter parameters");
        }
      }

      log.steps.push_back(step);
      epoch_sum.task += step.task;
      epoch_sum.orth += step.orth;
      epoch_sum.sparse += step.sparse;
      epoch_sum.total += step.total;
    }
    const double n = static_cast<double>(batches);
    log.epochs.push_back({epoch_sum.task / n, epoch_sum.orth / n, epoch_sum.sparse / n, epoch_sum.total / n});
  }
  log.overlap_end = mean_overlap(model);
  return log;
}

double evaluate(const ClassifierModel& model, const Dataset& data) {
  if (data.size() == 0) throw ContractError("evaluate: empty test set");
  return accuracy_from_logits(model.forward(data.x), data.y);
}

double evaluate(const ClassifierModel& model, const Task& task) { return evaluate(model, task.test); }

AccuracyMatrix::AccuracyMatrix(std::size_t tasks)
    : tasks_(tasks), values_(tasks * tasks, 0.0), set_(tasks * tasks, 0) {}

void AccuracyMatrix::set(std::size_t i, std::size_t j, double value) {
  if (i >= tasks_ || j >= tasks_ || i > j) throw ContractError("AccuracyMatrix::set: entry must satisfy i <= j < T");
  if (!(value >= 0.0 && value <= 1.0)) throw ContractError("AccuracyMatrix::set: accuracy outside [0, 1]");
  values_[i * tasks_ + j] = value;
  set_[i * tasks_ + j] = 1;
}

bool AccuracyMatrix::populated(std::size_t i, std::size_t j) const {
  return i < tasks_ && j < tasks_ && set_[i * tasks_ + j] != 0;
}

double AccuracyMatrix::at(std::size_t i, std::size_t j) const {
  if (!populated(i, j)) {
    throw ContractError("accuracy a[" + std::to_string(i) + "][" + std::to_string(j) + "] is not populated");
  }
  return values_[i * tasks_ + j];
}

bool operator==(const AccuracyMatrix& a, const AccuracyMatrix& b) {
  return a.tasks_ == b.tasks_ && a.values_ == b.values_ && a.set_ == b.set_;
}

double average_accuracy(std::span<const double> final_column) {
  if (final_column.empty()) throw ContractError("average_accuracy: empty column");
  double acc = 0.0;
  for (double v : final_column) acc += v;
  return acc / static_cast<double>(final_column.size());
}

double average_accuracy(const AccuracyMatrix& m) {
  if (m.tasks() == 0) throw ContractError("average_accuracy: empty matrix");
  std::vector<double> column;
  const std::size_t last = m.tasks() - 1;
  for (std::size_t i = 0; i < m.tasks(); ++i) column.push_back(m.at(i, last));
  return average_accuracy(column);
}

double mean_forgetting(const AccuracyMatrix& m) {
  if (m.tasks() < 2) return 0.0;
  const std::size_t last = m.tasks() - 1;
  double total = 0.0;
  for (std::size_t i = 0; i < last; ++i) {
    double best = 0.0;
    for (std::size_t j = i; j <= last; ++j) best = std::max(best, m.at(i, j));
    total += best - m.at(i, last);
  }
  return total / static_cast<double>(last);
}

ClassifierModel AdapterHistory::state_after(const ClassifierModel& base, std::size_t index) const {
  if (index >= per_task.size()) throw ContractError("AdapterHistory::state_after: task index out of range");
  ClassifierModel model = base;
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    auto& adapters = model.layers()[l].adapters();
    adapters.clear();
    if (reuse) {
      adapters.push_back(per_task[index].at(l));
    } else {
      for (std::size_t t = 0; t <= index; ++t) adapters.push_back(per_task[t].at(l));
    }
  }
  return model;
}

ClassifierModel initial_model(const TrainingConfig& config, std::size_t input_dim, std::size_t classes) {
  std::mt19937_64 rng = derived_rng(config.seed, Stream::model_init);
  return ClassifierModel::create(config.model_config(input_dim, classes), rng());
}

RunResult run_stream(const TaskStream& stream, const TrainingConfig& config) {
  config.validate();
  if (stream.size() == 0) throw ContractError("run_stream: empty stream");
  const Task& first = stream.tasks.front();
  for (const Task& t : stream.tasks) {
    if (t.classes != first.classes || t.train.x.cols() != first.train.x.cols()) {
      throw ConfigError("run_stream: tasks disagree on class count or feature width");
    }
  }

  RunResult result{AccuracyMatrix(stream.size()), {}, {}, initial_model(config, first.train.x.cols(), first.classes), 0.0};
  result.history.reuse = !uses_incremental_adapters(config.method);
  ClassifierModel& model = result.model;

  for (std::size_t t = 0; t < stream.size(); ++t) {
    const auto started = std::chrono::steady_clock::now();
    if (result.history.reuse && model.adapter_count() > 0) {
      model.resume_task();
    } else {
      std::mt19937_64 rng = derived_rng(config.seed, Stream::adapter_init, t);
      model.begin_task(rng);
    }
    const std::string frozen_before = model.frozen_state_bytes();
    TaskRecord record;
    record.task_id = stream.tasks[t].id;
    record.log = train_task(model, stream.tasks[t], config, t);
    if (model.frozen_state_bytes() != frozen_before) {
      throw StateError("frozen parameters changed while training task " + std::to_string(t));
    }
    model.end_task();

    std::vector<LoraFactors> snapshot;
    for (const AdaptedLinear& l : model.layers()) snapshot.push_back(l.adapters().back());
    result.history.per_task.push_back(std::move(snapshot));

    for (std::size_t i = 0; i <= t; ++i) result.accuracy.set(i, t, evaluate(model, stream.tasks[i]));
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.tasks.push_back(std::move(record));
  }
  result.average_accuracy = average_accuracy(result.accuracy);
  return result;
}

}  // namespace oliera
