// SPDX-License-Identifier: Apache-2.0
#include "oliera/fisher.hpp"

#include "oliera/error.hpp"

namespace oliera {

std::vector<Tensor> fisher_diag(const ClassifierModel& model, const Dataset& data) {
  const std::size_t n = data.size();
  if (n == 0) throw ContractError("fisher_diag: empty dataset");
  if (data.x.cols() != model.layers().front().in_features()) throw ShapeError("fisher_diag: input width mismatch");

  // A zero offset on each layer's pre-activation is a leaf whose gradient row n
  // is d log p(y_n|x_n) / d z_n; the per-sample weight gradient is the outer
  // product of that row with the layer input, so no per-sample pass is needed.
  Tape tape;
  const std::vector<Tensor> weights = model.effective_weights();
  std::vector<Tensor> inputs;
  std::vector<Var> offsets;
  Var h = tape.constant(data.x);
  for (std::size_t l = 0; l < weights.size(); ++l) {
    inputs.push_back(h.value());
    Var z = add_row_bias(matmul(h, transpose(tape.constant(weights[l]))), tape.constant(model.layers()[l].bias()));
    offsets.push_back(tape.leaf(Tensor::zeros({n, weights[l].rows()})));
    z = add(z, offsets.back());
    h = l + 1 < weights.size() ? tanh(z) : z;
  }
  // Sum of per-sample losses, so gradient rows are per-sample scores.
  Var loss = scale(softmax_cross_entropy(h, data.y), static_cast<double>(n));
  const GradientMap grads = tape.backward(loss);

  std::vector<Tensor> fisher;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Tensor& delta = grads.at(offsets[l]);
    fisher.push_back(scale(matmul(transpose(hadamard(delta, delta)), hadamard(inputs[l], inputs[l])),
                           1.0 / static_cast<double>(n)));
  }
  return fisher;
}

double fisher_energy(const Tensor& fisher, const Tensor& delta_theta) {
  require_same_shape(fisher, delta_theta, "fisher_energy");
  double e = 0.0;
  for (std::size_t k = 0; k < fisher.numel(); ++k) e += fisher[k] * delta_theta[k] * delta_theta[k];
  return e;
}

double fisher_energy(std::span<const Tensor> fisher, std::span<const Tensor> delta_theta) {
  if (fisher.size() != delta_theta.size()) throw ShapeError("fisher_energy: layer count mismatch");
  double e = 0.0;
  for (std::size_t l = 0; l < fisher.size(); ++l) e += fisher_energy(fisher[l], delta_theta[l]);
  return e;
}

FisherReport cross_task_energy(const ClassifierModel& base, const AdapterHistory& history,
                               const TaskStream& stream, Method method) {
  const std::size_t tasks = history.tasks();
  if (tasks < 2) throw ContractError("cross_task_energy: need a run of at least 2 tasks, got " + std::to_string(tasks));
  if (stream.size() != tasks) {
    throw ContractError("cross_task_energy: stream has " + std::to_string(stream.size()) + " tasks, run has " +
                        std::to_string(tasks));
  }
  const ClassifierModel before = history.state_after(base, tasks - 2);
  const ClassifierModel after = history.state_after(base, tasks - 1);

  FisherReport report;
  report.method = to_string(method);
  report.update_mode = to_string(base.mode());
  report.taylor_order = base.taylor_order().value();
  report.tasks = tasks;
  report.fisher_task = tasks - 2;
  report.fisher = fisher_diag(before, stream.tasks[tasks - 2].train);

  if (base.mode() == UpdateMode::additive && !history.reuse) {
    report.delta_convention = kDeltaAdapterProduct;
    for (const LoraFactors& f : history.per_task.back()) report.delta_theta.push_back(delta_from_factors(f));
  } else {
    report.delta_convention = kDeltaEffectiveWeight;
    const std::vector<Tensor> w0 = before.effective_weights();
    const std::vector<Tensor> w1 = after.effective_weights();
    for (std::size_t l = 0; l < w0.size(); ++l) report.delta_theta.push_back(sub(w1[l], w0[l]));
  }
  for (std::size_t l = 0; l < report.fisher.size(); ++l) {
    report.layer_energy.push_back(fisher_energy(report.fisher[l], report.delta_theta[l]));
    report.energy += report.layer_energy.back();
  }
  return report;
}

}  // namespace oliera
