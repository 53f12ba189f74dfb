// SPDX-License-Identifier: Apache-2.0
//
// Diagonal Fisher information over effective weights and the Fisher-weighted
// energy of a parameter change:
//
//   F[k] = mean_n (d log p(y_n | x_n) / d theta_k)^2
//   E    = sum_k F[k] * dtheta[k]^2
//
// Labels are the observed ones, not samples from the model.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "oliera/model.hpp"
#include "oliera/taskgen.hpp"
#include "oliera/trainer.hpp"

namespace oliera {

/// One tensor per layer, shaped like that layer's effective weight.
std::vector<Tensor> fisher_diag(const ClassifierModel& model, const Dataset& data);

double fisher_energy(const Tensor& fisher, const Tensor& delta_theta);
double fisher_energy(std::span<const Tensor> fisher, std::span<const Tensor> delta_theta);

inline constexpr const char* kDeltaEffectiveWeight = "effective-weight-delta";
inline constexpr const char* kDeltaAdapterProduct = "adapter-product";

struct FisherReport {
  std::string method;
  std::string update_mode;
  int taylor_order = 0;
  std::size_t tasks = 0;
  /// Position (0-based) of the task whose training split F was estimated on.
  std::size_t fisher_task = 0;
  /// effective-weight-delta: W_eff after the last task minus after the
  /// penultimate one. adapter-product: B_T A_T of the last adapter.
  std::string delta_convention;
  std::vector<Tensor> fisher;
  std::vector<Tensor> delta_theta;
  std::vector<double> layer_energy;
  double energy = 0.0;
};

/// F on the penultimate task's training split, with the model as it was after
/// that task; delta from the final task. Throws ContractError for T < 2.
FisherReport cross_task_energy(const ClassifierModel& base, const AdapterHistory& history,
                               const TaskStream& stream, Method method);

}  // namespace oliera
