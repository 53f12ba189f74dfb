// SPDX-License-Identifier: Apache-2.0
#include "oliera/cli.hpp"

#include <filesystem>
#include <optional>

#include "CLI11.hpp"
#include "oliera/checkpoint.hpp"
#include "oliera/error.hpp"
#include "oliera/fisher.hpp"
#include "oliera/report.hpp"
#include "oliera/taskgen.hpp"
#include "oliera/trainer.hpp"

namespace oliera {
namespace fs = std::filesystem;

namespace {

struct RunFlags {
  std::string method = "olier";
  int taylor = 2;
  std::optional<double> lambda_orth;
  std::optional<double> lambda_sparse;
  std::string update_mode;
  std::string stream = kRotatedGaussians;
  std::size_t tasks = 5;
  int order = 1;
  std::size_t epochs = 30;
  double lr = TrainingConfig{}.learning_rate;
  std::size_t batch = 32;
  std::size_t rank = 4;
  std::size_t hidden = 64;
  std::string out;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--method", f.method, "olier | olora | nlora | seq-lora | inc-lora")
      ->check(CLI::IsMember({"olier", "olora", "nlora", "seq-lora", "inc-lora"}))
      ->capture_default_str();
  cmd->add_option("--lambda-orth", f.lambda_orth, "orthogonality weight (default 0.5; 0 for seq-lora/inc-lora)");
  cmd->add_option("--lambda-sparse", f.lambda_sparse, "l1 weight on the current update (default 0)");
  cmd->add_option("--update-mode", f.update_mode, "mult | add (default: mult for olier, add otherwise)")
      ->check(CLI::IsMember({"mult", "add"}));
  cmd->add_option("--stream", f.stream, "rotated-gaussians | permuted-features")
      ->check(CLI::IsMember({kRotatedGaussians, kPermutedFeatures}))
      ->capture_default_str();
  cmd->add_option("--tasks", f.tasks, "number of tasks T")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--order", f.order, "task order: 1 identity, 2 reversed, 3 evens-then-odds")
      ->check(CLI::Range(1, 3))
      ->capture_default_str();
  cmd->add_option("--epochs", f.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--lr", f.lr, "learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--batch-size", f.batch)->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--rank", f.rank, "adapter rank r")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--hidden", f.hidden, "hidden width")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--out", f.out, "output directory")->required();
}

TrainingConfig make_config(const RunFlags& f, std::uint64_t seed, int taylor) {
  TrainingConfig c;
  c.method = parse_method(f.method);
  c.taylor_order = taylor;
  const bool penalty_free = c.method == Method::seq_lora || c.method == Method::inc_lora;
  if (penalty_free && (f.lambda_orth.value_or(0.0) != 0.0 || f.lambda_sparse.value_or(0.0) != 0.0)) {
    throw ConfigError("--method " + f.method + " trains without penalties; --lambda-orth/--lambda-sparse must be 0");
  }
  c.loss_weights.lambda_orth = f.lambda_orth.value_or(penalty_free ? 0.0 : 0.5);
  c.loss_weights.lambda_sparse = f.lambda_sparse.value_or(0.0);
  if (!f.update_mode.empty()) c.update_mode = parse_update_mode(f.update_mode);
  c.learning_rate = f.lr;
  c.epochs = f.epochs;
  c.batch_size = f.batch;
  c.rank = f.rank;
  c.hidden_dim = f.hidden;
  c.seed = seed;
  c.validate();
  return c;
}

StreamDescriptor make_descriptor(const RunFlags& f, std::uint64_t seed) {
  StreamDescriptor d;
  d.kind = f.stream;
  d.tasks = f.tasks;
  d.seed = seed;
  d.order_label = "order-" + std::to_string(f.order);
  return d;
}

TaskStream build_stream(const StreamDescriptor& d, int order) {
  TaskStream s = reorder(make_stream(d.kind, d.tasks, d.seed, d.options), task_order_permutation(order, d.tasks));
  s.order_label = d.order_label;
  return s;
}

int cmd_run(const RunFlags& f, std::uint64_t seed, bool with_fisher, std::ostream& out) {
  const TrainingConfig config = make_config(f, seed, f.taylor);
  const StreamDescriptor desc = make_descriptor(f, seed);
  if (with_fisher && desc.tasks < 2) throw ConfigError("--fisher needs --tasks >= 2");
  const TaskStream stream = build_stream(desc, f.order);
  const RunResult run = run_stream(stream, config);

  const fs::path dir(f.out);
  fs::create_directories(dir);
  const AdapterCheckpoint ckpt = make_checkpoint(run, config);
  std::optional<FisherReport> fisher;
  if (with_fisher) {
    fisher = cross_task_energy(checkpoint_base_model(ckpt), run.history, stream, config.method);
    write_json(dir / "fisher.json", fisher_json(*fisher));
  }
  save_checkpoint(ckpt, dir / "checkpoint.txt");
  save_stream(stream, dir / "stream.txt");
  write_json(dir / "manifest.json", manifest_json(config, desc, run, fisher));
  write_csv(dir / "results.csv", kResultsHeader, results_rows(config, stream, run), CsvMode::overwrite);

  out << method_label(config) << " seed " << seed << " tasks " << stream.size()
      << ": A_T = " << format_fixed(run.average_accuracy)
      << ", forgetting = " << format_fixed(mean_forgetting(run.accuracy)) << '\n';
  if (fisher) out << "fisher energy E = " << fisher->energy << " (" << fisher->delta_convention << ")\n";
  return kExitOk;
}

int cmd_ablate_taylor(const RunFlags& f, const std::vector<int>& orders, const std::vector<std::uint64_t>& seeds,
                      std::ostream& out) {
  const fs::path dir(f.out);
  fs::create_directories(dir);
  std::vector<std::string> rows;
  std::vector<std::string> table;
  for (int order : orders) {
    for (std::uint64_t seed : seeds) {
      const TrainingConfig config = make_config(f, seed, order);
      const StreamDescriptor desc = make_descriptor(f, seed);
      const TaskStream stream = build_stream(desc, f.order);
      const RunResult run = run_stream(stream, config);
      const auto r = results_rows(config, stream, run);
      rows.insert(rows.end(), r.begin(), r.end());
      table.push_back(std::to_string(order) + ',' + std::to_string(seed) + ',' + format_fixed(run.average_accuracy));
      out << "taylor " << order << " seed " << seed << ": A_T = " << format_fixed(run.average_accuracy) << '\n';
    }
  }
  write_csv(dir / "results.csv", kResultsHeader, rows, CsvMode::append);
  write_csv(dir / "taylor_ablation.csv", kAblateTaylorHeader, table, CsvMode::append);
  return kExitOk;
}

int cmd_ablate_mult(const RunFlags& f, const std::vector<std::uint64_t>& seeds, std::ostream& out) {
  if (!f.update_mode.empty()) throw ConfigError("ablate-mult runs both update modes; drop --update-mode");
  const fs::path dir(f.out);
  fs::create_directories(dir);
  std::vector<std::string> rows;
  std::vector<std::string> table;
  double total = 0.0;
  for (std::uint64_t seed : seeds) {
    TrainingConfig mult = make_config(f, seed, f.taylor);
    mult.update_mode = UpdateMode::multiplicative;
    TrainingConfig add = mult;
    add.update_mode = UpdateMode::additive;
    const StreamDescriptor desc = make_descriptor(f, seed);
    const TaskStream stream = build_stream(desc, f.order);
    const RunResult rm = run_stream(stream, mult);
    const RunResult ra = run_stream(stream, add);
    for (const auto& [cfg, run] : {std::pair{&mult, &rm}, std::pair{&add, &ra}}) {
      const auto r = results_rows(*cfg, stream, *run);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    const double delta = rm.average_accuracy - ra.average_accuracy;
    total += delta;
    table.push_back(std::to_string(seed) + ',' + format_fixed(rm.average_accuracy) + ',' +
                    format_fixed(ra.average_accuracy) + ',' + format_fixed(delta));
    out << "seed " << seed << ": A_T mult = " << format_fixed(rm.average_accuracy)
        << ", add = " << format_fixed(ra.average_accuracy) << ", delta = " << format_fixed(delta) << '\n';
  }
  write_csv(dir / "results.csv", kResultsHeader, rows, CsvMode::append);
  write_csv(dir / "ablate_mult.csv", kAblateMultHeader, table, CsvMode::append);
  out << "mean delta A_T = " << format_fixed(total / static_cast<double>(seeds.size())) << '\n';
  return kExitOk;
}

int cmd_fisher(const std::vector<std::string>& runs, std::ostream& out) {
  for (const std::string& r : runs) {
    const fs::path dir(r);
    const AdapterCheckpoint ckpt = load_checkpoint(dir / "checkpoint.txt");
    const TaskStream stream = load_stream(dir / "stream.txt");
    const FisherReport report =
        cross_task_energy(checkpoint_base_model(ckpt), ckpt.history, stream, parse_method(ckpt.method));
    write_json(dir / "fisher.json", fisher_json(report));
    out << r << ": method " << report.method << ", mode " << report.update_mode << ", E = " << report.energy
        << " (" << report.delta_convention << ", F on task position " << report.fisher_task << ")\n";
  }
  return kExitOk;
}

}  // namespace

std::vector<std::size_t> task_order_permutation(int order, std::size_t tasks) {
  std::vector<std::size_t> p;
  switch (order) {
    case 1:
      for (std::size_t i = 0; i < tasks; ++i) p.push_back(i);
      break;
    case 2:
      for (std::size_t i = tasks; i-- > 0;) p.push_back(i);
      break;
    case 3:
      for (std::size_t i = 0; i < tasks; i += 2) p.push_back(i);
      for (std::size_t i = 1; i < tasks; i += 2) p.push_back(i);
      break;
    default:
      throw ConfigError("task order must be 1, 2 or 3");
  }
  return p;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual-learning adapters with multiplicative low-rank updates", "oliera"};
  app.require_subcommand(1);

  RunFlags run_flags;
  std::uint64_t run_seed = 0;
  bool run_fisher = false;
  auto* run = app.add_subcommand("run", "train one method on one task stream");
  add_run_flags(run, run_flags);
  run->add_option("--seed", run_seed, "seed for the stream, base model and training")->capture_default_str();
  run->add_option("--taylor-order", run_flags.taylor, "Taylor order of the exponential")
      ->check(CLI::Range(1, 3))
      ->capture_default_str();
  run->add_flag("--fisher", run_fisher, "also compute the cross-task Fisher energy");

  RunFlags taylor_flags;
  std::vector<int> orders{1, 2, 3};
  std::vector<std::uint64_t> taylor_seeds{0};
  auto* ablate_taylor = app.add_subcommand("ablate-taylor", "same stream and seeds for each Taylor order");
  add_run_flags(ablate_taylor, taylor_flags);
  ablate_taylor->add_option("--orders", orders, "comma-separated Taylor orders")
      ->delimiter(',')
      ->check(CLI::Range(1, 3))
      ->capture_default_str();
  ablate_taylor->add_option("--seeds", taylor_seeds, "comma-separated seeds")->delimiter(',')->capture_default_str();

  RunFlags mult_flags;
  std::vector<std::uint64_t> mult_seeds{0};
  auto* ablate_mult = app.add_subcommand("ablate-mult", "paired multiplicative vs additive runs");
  add_run_flags(ablate_mult, mult_flags);
  ablate_mult->add_option("--taylor-order", mult_flags.taylor)->check(CLI::Range(1, 3))->capture_default_str();
  ablate_mult->add_option("--seeds", mult_seeds, "comma-separated seeds")->delimiter(',')->capture_default_str();

  std::vector<std::string> fisher_runs;
  auto* fisher = app.add_subcommand("fisher", "Fisher-weighted energy of the last task's update");
  fisher->add_option("--run", fisher_runs, "run directory written by `run` (repeatable)")->required();

  std::string export_kind = kRotatedGaussians;
  std::size_t export_tasks = 5;
  std::uint64_t export_seed = 0;
  int export_order = 1;
  std::string export_out;
  auto* exporter = app.add_subcommand("export-stream", "write a generated task stream to a file");
  exporter->add_option("--stream", export_kind)->check(CLI::IsMember({kRotatedGaussians, kPermutedFeatures}));
  exporter->add_option("--tasks", export_tasks)->check(CLI::PositiveNumber);
  exporter->add_option("--seed", export_seed);
  exporter->add_option("--order", export_order)->check(CLI::Range(1, 3));
  exporter->add_option("--out", export_out, "output file")->required();

  std::vector<const char*> argv{"oliera"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(run_flags, run_seed, run_fisher, out);
    if (ablate_taylor->parsed()) return cmd_ablate_taylor(taylor_flags, orders, taylor_seeds, out);
    if (ablate_mult->parsed()) return cmd_ablate_mult(mult_flags, mult_seeds, out);
    if (fisher->parsed()) return cmd_fisher(fisher_runs, out);
    if (exporter->parsed()) {
      StreamDescriptor d;
      d.kind = export_kind;
      d.tasks = export_tasks;
      d.seed = export_seed;
      d.order_label = "order-" + std::to_string(export_order);
      save_stream(build_stream(d, export_order), export_out);
      out << "wrote " << export_out << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << "\nRun with --help for more information.\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitFormat;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace oliera
