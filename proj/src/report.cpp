// SPDX-License-Identifier: Apache-2.0
#include "oliera/report.hpp"

#include <cstdio>
#include <fstream>

#include "oliera/error.hpp"

namespace oliera {
namespace {

Json tensor_json(const Tensor& t) {
  Json rows = Json::array();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    Json row = Json::array();
    for (std::size_t c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json losses_json(const LossComponents& l) {
  return Json{{"task", l.task}, {"orth", l.orth}, {"sparse", l.sparse}, {"total", l.total}};
}

}  // namespace

std::string format_fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

Json config_json(const TrainingConfig& c) {
  return Json{{"method", to_string(c.method)},
              {"update_mode", to_string(c.resolved_update_mode())},
              {"taylor_order", c.taylor_order},
              {"lambda_orth", c.loss_weights.lambda_orth},
              {"lambda_sparse", c.loss_weights.lambda_sparse},
              {"learning_rate", c.learning_rate},
              {"momentum", c.momentum},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"rank", c.rank},
              {"hidden_dim", c.hidden_dim},
              {"seed", c.seed}};
}

Json stream_json(const StreamDescriptor& d) {
  return Json{{"kind", d.kind},
              {"tasks", d.tasks},
              {"seed", d.seed},
              {"order_label", d.order_label},
              {"classes", d.options.classes},
              {"train_size", d.options.train_size},
              {"test_size", d.options.test_size},
              {"feature_dim", d.options.feature_dim},
              {"prototype_scale", d.options.prototype_scale}};
}

Json accuracy_json(const AccuracyMatrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.tasks(); ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < m.tasks(); ++j) row.push_back(m.populated(i, j) ? Json(m.at(i, j)) : Json(nullptr));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json fisher_json(const FisherReport& r) {
  Json layers = Json::array();
  for (std::size_t l = 0; l < r.fisher.size(); ++l) {
    layers.push_back(Json{{"shape", {r.fisher[l].rows(), r.fisher[l].cols()}},
                          {"energy", r.layer_energy[l]},
                          {"fisher", tensor_json(r.fisher[l])},
                          {"delta_theta", tensor_json(r.delta_theta[l])}});
  }
  return Json{{"method", r.method},
              {"update_mode", r.update_mode},
              {"taylor_order", r.taylor_order},
              {"tasks", r.tasks},
              {"fisher_task", r.fisher_task},
              {"fisher_split", "train"},
              {"fisher_labels", "observed"},
              {"delta_convention", r.delta_convention},
              {"energy", r.energy},
              {"layers", std::move(layers)}};
}

Json manifest_json(const TrainingConfig& config, const StreamDescriptor& stream, const RunResult& run,
                   const std::optional<FisherReport>& fisher) {
  Json final_column = Json::array();
  const std::size_t last = run.accuracy.tasks() - 1;
  for (std::size_t i = 0; i <= last; ++i) final_column.push_back(run.accuracy.at(i, last));

  Json traces = Json::array();
  Json seconds = Json::array();
  for (const TaskRecord& t : run.tasks) {
    Json epochs = Json::array();
    for (const LossComponents& e : t.log.epochs) epochs.push_back(losses_json(e));
    traces.push_back(Json{{"task", t.task_id},
                          {"steps", t.log.steps.size()},
                          {"overlap_start", t.log.overlap_start},
                          {"overlap_end", t.log.overlap_end},
                          {"epochs", std::move(epochs)}});
    seconds.push_back(t.seconds);
  }

  Json doc{{"manifest_version", kManifestVersion},
           {"tool", "oliera"},
           {"tool_version", kToolVersion},
           {"seed", config.seed},
           {"config", config_json(config)},
           {"stream", stream_json(stream)},
           {"accuracy_matrix", accuracy_json(run.accuracy)},
           {"final_accuracies", std::move(final_column)},
           {"average_accuracy", run.average_accuracy},
           {"mean_forgetting", mean_forgetting(run.accuracy)},
           {"loss_traces", std::move(traces)},
           {"files", {{"checkpoint", "checkpoint.txt"}, {"stream", "stream.txt"}, {"results", "results.csv"}}},
           {"wall_clock", {{"task_seconds", std::move(seconds)}}}};
  if (fisher) doc["fisher"] = fisher_json(*fisher);
  return doc;
}

void write_json(const std::filesystem::path& path, const Json& doc) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << doc.dump(2) << '\n';
  if (!os) throw FormatError("failed writing " + path.string());
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string method_label(const TrainingConfig& config) {
  TrainingConfig defaults;
  defaults.method = config.method;
  const UpdateMode mode = config.resolved_update_mode();
  if (mode == defaults.resolved_update_mode()) return to_string(config.method);
  return to_string(config.method) + (mode == UpdateMode::additive ? "-add" : "-mult");
}

std::vector<std::string> results_rows(const TrainingConfig& config, const TaskStream& stream, const RunResult& run) {
  std::vector<std::string> rows;
  const std::size_t last = run.accuracy.tasks() - 1;
  const std::string prefix = method_label(config) + ',' + stream.order_label + ',' +
                             std::to_string(config.taylor_order) + ',' + std::to_string(config.seed) + ',';
  for (std::size_t i = 0; i <= last; ++i) {
    rows.push_back(prefix + std::to_string(stream.tasks[i].id) + ',' + format_fixed(run.accuracy.at(i, last)) + ',' +
                   format_fixed(run.average_accuracy));
  }
  return rows;
}

void write_csv(const std::filesystem::path& path, const std::string& header, const std::vector<std::string>& rows,
               CsvMode mode) {
  bool need_header = true;
  if (mode == CsvMode::append && std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
    std::ifstream is(path);
    std::string first;
    std::getline(is, first);
    if (first != header) {
      throw FormatError(path.string() + ": existing header '" + first + "' does not match '" + header + "'");
    }
    need_header = false;
  }
  std::ofstream os(path, mode == CsvMode::append ? std::ios::app | std::ios::binary : std::ios::trunc | std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  if (need_header) os << header << '\n';
  for (const std::string& r : rows) os << r << '\n';
  if (!os) throw FormatError("failed writing " + path.string());
}

}  // namespace oliera
