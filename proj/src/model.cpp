// SPDX-License-Identifier: Apache-2.0
#include "oliera/model.hpp"

#include <cmath>
#include <cstring>

#include "oliera/error.hpp"

namespace oliera {
namespace {

// Left fold of the adapters onto `start`, without the membership guard.
Tensor fold_adapters(Tensor acc, std::span<const LoraFactors> adapters, UpdateMode mode, TaylorOrder order) {
  for (const LoraFactors& f : adapters) {
    Tensor delta = delta_from_factors(f);
    acc = mode == UpdateMode::multiplicative ? hadamard(acc, exp_taylor(delta, order)) : add(acc, delta);
  }
  return acc;
}

Tensor gaussian(const Shape& shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(shape);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

void append_bytes(std::string& out, const Tensor& t) {
  out.append(reinterpret_cast<const char*>(t.data().data()), t.numel() * sizeof(double));
}

}  // namespace

std::string to_string(UpdateMode mode) { return mode == UpdateMode::multiplicative ? "mult" : "add"; }

UpdateMode parse_update_mode(const std::string& text) {
  if (text == "mult" || text == "multiplicative") return UpdateMode::multiplicative;
  if (text == "add" || text == "additive") return UpdateMode::additive;
  throw ConfigError("unknown update mode '" + text + "' (expected mult or add)");
}

AdaptedLinear::AdaptedLinear(GroupElement base, Tensor bias) : base_(std::move(base)), bias_(std::move(bias)) {
  if (base_.value().rank() != 2) throw ShapeError("AdaptedLinear: base weight must be rank 2");
  if (bias_.rank() != 1 || bias_.numel() != base_.shape()[0]) {
    throw ShapeError("AdaptedLinear: bias " + to_string(bias_.shape()) + " does not match weight " +
                     to_string(base_.shape()));
  }
}

Tensor AdaptedLinear::effective_weight(std::size_t count, UpdateMode mode, TaylorOrder order) const {
  if (count > adapters_.size()) throw ContractError("effective_weight: adapter count out of range");
  Tensor w = fold_adapters(base_.value(), std::span(adapters_).first(count), mode, order);
  if (mode == UpdateMode::multiplicative) guard_membership(w);
  return w;
}

ClassifierModel ClassifierModel::create(const ModelConfig& config, std::uint64_t seed) {
  if (config.input_dim == 0 || config.hidden_dim == 0 || config.classes == 0 || config.rank == 0) {
    throw ConfigError("model dimensions and rank must be positive");
  }
  std::mt19937_64 rng(seed);
  auto make_layer = [&](std::size_t in, std::size_t out) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    Tensor w({out, in});
    for (double& v : w.data()) {
      do {
        v = dist(rng);
      } while (std::fabs(v) < 1e-3);
    }
    Tensor b = gaussian({out}, 0.1, rng);
    return AdaptedLinear(GroupElement(std::move(w)), std::move(b));
  };
  std::vector<AdaptedLinear> layers;
  layers.push_back(make_layer(config.input_dim, config.hidden_dim));
  layers.push_back(make_layer(config.hidden_dim, config.classes));
  return ClassifierModel(std::move(layers), config);
}

ClassifierModel::ClassifierModel(std::vector<AdaptedLinear> layers, const ModelConfig& config)
    : config_(config), layers_(std::move(layers)) {
  (void)TaylorOrder{config_.taylor_order};
  if (layers_.empty()) throw ConfigError("model needs at least one layer");
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    if (layers_[i].in_features() != layers_[i - 1].out_features()) {
      throw ShapeError("layer " + std::to_string(i) + " input does not match previous output");
    }
  }
  if (layers_.back().out_features() != config_.classes) {
    throw ShapeError("output layer width does not equal class count");
  }
  const std::size_t count = layers_.front().adapters().size();
  for (const AdaptedLinear& l : layers_) {
    if (l.adapters().size() != count) throw ShapeError("layers carry different adapter counts");
    if (config_.rank > std::min(l.out_features(), l.in_features())) {
      throw ConfigError("rank " + std::to_string(config_.rank) + " exceeds min(out, in) of a layer");
    }
  }
}

std::size_t ClassifierModel::adapter_count() const noexcept { return layers_.front().adapters().size(); }

void ClassifierModel::begin_task(std::mt19937_64& rng) {
  if (active_) throw StateError("begin_task: a task is already being trained");
  for (AdaptedLinear& l : layers_) {
    Tensor b = gaussian({l.out_features(), config_.rank}, config_.adapter_init_std, rng);
    Tensor a({config_.rank, l.in_features()});
    l.adapters().emplace_back(std::move(b), std::move(a));
  }
  active_ = true;
  refresh_prefix();
}

void ClassifierModel::resume_task() {
  if (active_) throw StateError("resume_task: a task is already being trained");
  if (adapter_count() == 0) throw StateError("resume_task: no adapter to resume");
  active_ = true;
  refresh_prefix();
}

void ClassifierModel::end_task() {
  if (!active_) throw StateError("end_task: no task is being trained");
  active_ = false;
  prefix_.clear();
}

void ClassifierModel::refresh_prefix() {
  prefix_.clear();
  const std::size_t frozen = adapter_count() - 1;
  for (const AdaptedLinear& l : layers_) {
    prefix_.push_back(fold_adapters(l.base().value(), std::span(l.adapters()).first(frozen), config_.mode,
                                    taylor_order()));
  }
}

std::vector<Tensor*> ClassifierModel::trainable_parameters() {
  if (!active_) throw StateError("trainable_parameters: no task is being trained");
  std::vector<Tensor*> out;
  for (AdaptedLinear& l : layers_) {
    out.push_back(&l.adapters().back().B());
    out.push_back(&l.adapters().back().A());
  }
  return out;
}

std::vector<Tensor> ClassifierModel::effective_weights() const { return effective_weights(adapter_count()); }

std::vector<Tensor> ClassifierModel::effective_weights(std::size_t count) const {
  std::vector<Tensor> out;
  for (const AdaptedLinear& l : layers_) out.push_back(l.effective_weight(count, config_.mode, taylor_order()));
  return out;
}

Var ClassifierModel::forward_with_weights(const Var& x, std::span<const Var> weights) const {
  if (weights.size() != layers_.size()) throw ShapeError("forward: one weight per layer required");
  if (x.value().rank() != 2 || x.value().cols() != layers_.front().in_features()) {
    throw ShapeError("forward: input " + to_string(x.value().shape()) + " does not match input width " +
                     std::to_string(layers_.front().in_features()));
  }
  Tape& tape = *x.tape();
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = add_row_bias(matmul(h, transpose(weights[i])), tape.constant(layers_[i].bias()));
    if (i + 1 < layers_.size()) h = tanh(h);
  }
  return h;
}

Tensor ClassifierModel::forward(const Tensor& x) const {
  Tape tape;
  std::vector<Var> weights;
  for (Tensor& w : effective_weights()) weights.push_back(tape.constant(std::move(w)));
  return forward_with_weights(tape.constant(x), weights).value();
}

ClassifierModel::TrainingGraph ClassifierModel::forward_training(Tape& tape, const Tensor& x) const {
  if (!active_) throw StateError("forward_training: no task is being trained");
  TrainingGraph graph;
  std::vector<Var> weights;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LoraFactors& f = layers_[i].adapters().back();
    Var b = tape.leaf(f.B());
    Var a = tape.leaf(f.A());
    graph.params.push_back(b);
    graph.params.push_back(a);
    Var delta = matmul(b, a);
    Var prefix = tape.constant(prefix_[i]);
    if (config_.mode == UpdateMode::multiplicative) {
      std::size_t clamped = 0;
      Var w = clamp_magnitude(hadamard(prefix, exp_taylor(delta, taylor_order())), kMembershipEps, &clamped);
      if (clamped > 0) report_membership_clamp(clamped, "forward_training");
      weights.push_back(w);
    } else {
      weights.push_back(add(prefix, delta));
    }
  }
  graph.logits = forward_with_weights(tape.constant(x), weights);
  return graph;
}

std::string ClassifierModel::frozen_state_bytes() const {
  std::string out;
  for (const AdaptedLinear& l : layers_) {
    append_bytes(out, l.base().value());
    append_bytes(out, l.bias());
    const std::size_t frozen = l.adapters().size() - (active_ ? 1 : 0);
    for (std::size_t t = 0; t < frozen; ++t) {
      append_bytes(out, l.adapters()[t].B());
      append_bytes(out, l.adapters()[t].A());
    }
  }
  return out;
}

double accuracy_from_logits(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.rows() != labels.size()) {
    throw ShapeError("accuracy: logits " + to_string(logits.shape()) + " with " + std::to_string(labels.size()) +
                     " labels");
  }
  if (labels.empty()) throw ContractError("accuracy: empty label set");
  std::size_t correct = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, best)) best = c;
    }
    if (static_cast<int>(best) == labels[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace oliera
