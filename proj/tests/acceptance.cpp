// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, details indented below.
// Exits 0 unless --strict is given and some criterion failed.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "helpers.hpp"
#include "oliera/checkpoint.hpp"
#include "oliera/cli.hpp"
#include "oliera/error.hpp"
#include "oliera/fisher.hpp"
#include "oliera/model.hpp"
#include "oliera/regularizers.hpp"
#include "oliera/report.hpp"
#include "oliera/trainer.hpp"

using namespace oliera;
using namespace oliera::testing;
namespace fs = std::filesystem;

namespace {

constexpr int kInstances = 20;
constexpr double kGradTol = 1e-4;
const std::vector<std::uint64_t> kSeeds{0, 1, 2, 3, 4};

struct Verdict {
  Verdict(int criterion, std::string text) : id(criterion), title(std::move(text)) {}

  int id;
  std::string title;
  bool pass = true;
  std::vector<std::string> details;

  void note(const std::string& line) { details.push_back(line); }
  void require(bool ok, const std::string& line) {
    pass = pass && ok;
    details.push_back((ok ? "ok    " : "FAIL  ") + line);
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string fmt_list(const std::vector<double>& v, const char* f = "%.4f") {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(f, v[i]);
  return s + "]";
}

double mean(const std::vector<double>& v) {
  return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

int cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(args, out, err);
  if (err_text) *err_text = err.str();
  return code;
}

// ---------------------------------------------------------------------------

Verdict gradient_oracles() {
  Verdict v{1, "gradient oracle suite (finite differences, step 1e-5, rel err < 1e-4)"};
  std::mt19937_64 rng(1001);
  auto track = [&](const std::string& op, const std::vector<double>& errs) {
    const double worst = *std::max_element(errs.begin(), errs.end());
    v.require(errs.size() >= kInstances && worst < kGradTol,
              op + ": " + std::to_string(errs.size()) + " instances, worst " + fmt("%.2e", worst));
  };

  std::vector<double> errs;
  for (int order = 1; order <= 3; ++order) {
    const GraphFn f = [order](Tape&, const std::vector<Var>& x) {
      return sum(hadamard(exp_taylor(x[0], TaylorOrder(order)), x[1]));
    };
    for (int i = 0; i < kInstances; ++i) errs.push_back(gradient_check(f, {uniform({3, 4}, rng), uniform({3, 4}, rng)}));
  }
  track("exp_taylor", errs);

  errs.clear();
  for (int order = 1; order <= 3; ++order) {
    for (int i = 0; i < kInstances; ++i) {
      const GroupElement w(nonzero({4, 5}, rng));
      const Tensor probe = uniform({4, 5}, rng);
      const GraphFn f = [&, order](Tape& tape, const std::vector<Var>& x) {
        return sum(hadamard(apply_update(w, x[0], x[1], TaylorOrder(order)), tape.constant(probe)));
      };
      errs.push_back(gradient_check(f, {uniform({4, 2}, rng, -0.5, 0.5), uniform({2, 5}, rng, -0.5, 0.5)}));
    }
  }
  track("apply_update", errs);

  auto factors = [&] { return LoraFactors(uniform({4, 2}, rng, -0.5, 0.5), uniform({2, 5}, rng, -0.5, 0.5)); };
  errs.clear();
  std::vector<double> olora_errs;
  std::vector<double> sparse_errs;
  std::vector<double> total_errs;
  for (int i = 0; i < kInstances; ++i) {
    const std::vector<LoraFactors> prev{factors(), factors()};
    const std::vector<Tensor> prev_b{prev[0].B(), prev[1].B()};
    const int order = 1 + i % 3;
    const GraphFn olier = [&](Tape&, const std::vector<Var>& x) {
      return olier_orth_loss(x[0], x[1], prev, TaylorOrder(order));
    };
    const GraphFn olora = [&](Tape&, const std::vector<Var>& x) { return olora_loss(x[0], prev_b); };
    const GraphFn sparse = [](Tape&, const std::vector<Var>& x) { return nlora_sparsity(x[0], x[1]); };
    const GraphFn total = [&](Tape&, const std::vector<Var>& x) {
      const Var task = sum(hadamard(x[0], x[0]));
      return total_loss(task, olier_orth_loss(x[0], x[1], prev, TaylorOrder(order)), nlora_sparsity(x[0], x[1]),
                        LossWeights{0.5, 0.1});
    };
    const std::vector<Tensor> in{uniform({4, 2}, rng), uniform({2, 5}, rng)};
    errs.push_back(gradient_check(olier, in));
    olora_errs.push_back(gradient_check(olora, {in[0]}));
    sparse_errs.push_back(gradient_check(sparse, in));
    total_errs.push_back(gradient_check(total, in));
  }
  track("olier_orth_loss", errs);
  track("olora_loss", olora_errs);
  track("nlora_sparsity", sparse_errs);
  track("total_loss", total_errs);

  errs.clear();
  const std::vector<int> labels{0, 1, 2, 1};
  for (UpdateMode mode : {UpdateMode::multiplicative, UpdateMode::additive}) {
    ModelConfig mc;
    mc.input_dim = 6;
    mc.hidden_dim = 5;
    mc.classes = 3;
    mc.rank = 2;
    mc.mode = mode;
    ClassifierModel m = ClassifierModel::create(mc, 77);
    m.begin_task(rng);
    m.end_task();
    m.begin_task(rng);
    for (int i = 0; i < kInstances; ++i) {
      const Tensor x = uniform({4, 6}, rng);
      auto params = m.trainable_parameters();
      for (Tensor* p : params) *p = uniform(p->shape(), rng, -0.5, 0.5);
      Tape tape;
      const auto graph = m.forward_training(tape, x);
      const GradientMap g = tape.backward(softmax_cross_entropy(graph.logits, labels));
      double worst = 0.0;
      for (std::size_t k = 0; k < params.size(); ++k) {
        const Tensor original = *params[k];
        const Tensor fd = finite_diff_grad(
            [&](const Tensor& value) {
              *params[k] = value;
              Tape t;
              const double loss = softmax_cross_entropy(m.forward_training(t, x).logits, labels).value().item();
              *params[k] = original;
              return loss;
            },
            original, 1e-5);
        const Tensor& an = g.at(graph.params[k]);
        worst = std::max(worst, frobenius_norm(sub(an, fd)) /
                                    std::max({frobenius_norm(an), frobenius_norm(fd), 1e-6}));
      }
      errs.push_back(worst);
    }
  }
  track("forward", errs);
  return v;
}

Verdict taylor_remainder() {
  Verdict v{2, "Taylor remainder bound for |entries| <= 0.1"};
  std::mt19937_64 rng(1002);
  for (int n = 1; n <= 3; ++n) {
    const double bound = std::pow(0.1, n + 1) * std::exp(0.1) / factorial(n + 1);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Tensor x = uniform({6, 5}, rng, -0.1, 0.1);
      worst = std::max(worst, max_abs_diff(exp_taylor(x, TaylorOrder(n)), exp_true(x)));
    }
    v.require(worst <= bound, "n=" + std::to_string(n) + ": max error " + fmt("%.3e", worst) + " <= bound " +
                                  fmt("%.3e", bound) + " over 100 tensors");
  }
  return v;
}

Verdict group_laws() {
  Verdict v{3, "Hadamard group laws on 100 members"};
  std::mt19937_64 rng(1003);
  bool identity = true;
  bool commutes = true;
  double inverse_err = 0.0;
  double roundtrip_err = 0.0;
  for (int i = 0; i < 100; ++i) {
    const GroupElement a(nonzero({5, 4}, rng));
    const GroupElement b(nonzero({5, 4}, rng));
    const GroupElement e = group_identity(a.shape());
    identity = identity && group_mul(a, e).value().bit_equal(a.value()) && group_mul(e, a).value().bit_equal(a.value());
    commutes = commutes && group_mul(a, b).value().bit_equal(group_mul(b, a).value());
    inverse_err = std::max(inverse_err, max_abs_diff(group_mul(a, group_inverse(a)).value(), e.value()));
    roundtrip_err = std::max(roundtrip_err, max_abs_diff(group_mul(a, GroupElement(recover_delta(a, b))).value(),
                                                         b.value()));
  }
  v.require(identity, "W * 1 = 1 * W = W bitwise");
  v.require(inverse_err < 1e-12, "max |W * W^-1 - 1| = " + fmt("%.2e", inverse_err) + " < 1e-12");
  v.require(commutes, "W1 * W2 = W2 * W1 bitwise");
  v.require(roundtrip_err < 1e-12, "max |W_old * recover_delta(W_old, W_new) - W_new| = " + fmt("%.2e", roundtrip_err));
  return v;
}

Verdict first_order_identity() {
  Verdict v{4, "first-order update equals W + W*(BA)"};
  std::mt19937_64 rng(1004);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const GroupElement w(nonzero({6, 7}, rng));
    const LoraFactors f(uniform({6, 3}, rng), uniform({3, 7}, rng));
    const Tensor expected = add(w.value(), hadamard(w.value(), delta_from_factors(f)));
    worst = std::max(worst, max_abs_diff(apply_update(w, f, TaylorOrder(1)), expected));
  }
  v.require(worst <= 1e-12, "max entry error " + fmt("%.2e", worst) + " <= 1e-12 over 100 instances");
  return v;
}

// ---------------------------------------------------------------------------

Verdict frozen_invariant() {
  Verdict v{5, "frozen-parameter invariant and seed replay (5-task olier run)"};
  const TaskStream stream = make_stream(kRotatedGaussians, 5, 0);
  TrainingConfig c;
  c.method = Method::olier;
  c.seed = 0;
  try {
    (void)run_stream(stream, c);
    v.note("lambda_orth 0.5 run completed");
  } catch (const DivergenceError& e) {
    v.note(std::string("lambda_orth 0.5 run diverged (") + e.what() + "); invariant checked at lambda_orth 0.05");
    c.loss_weights.lambda_orth = 0.05;
  }
  std::optional<RunResult> first;
  std::optional<RunResult> replay;
  try {
    first = run_stream(stream, c);
    replay = run_stream(stream, c);
  } catch (const std::exception& e) {
    v.require(false, std::string("run failed: ") + e.what());
    return v;
  }
  const RunResult& a = *first;
  const RunResult& b = *replay;
  v.require(true, "per-task frozen-byte check inside the run raised no StateError");

  const ClassifierModel base = initial_model(c, 32, 4);
  bool base_same = true;
  for (std::size_t l = 0; l < base.layers().size(); ++l) {
    base_same = base_same && a.model.layers()[l].base().value().bit_equal(base.layers()[l].base().value()) &&
                a.model.layers()[l].bias().bit_equal(base.layers()[l].bias());
  }
  v.require(base_same, "base weights and biases bitwise equal to the initial model");

  bool adapters_same = true;
  for (std::size_t t = 0; t + 1 < stream.size(); ++t) {
    for (std::size_t l = 0; l < a.model.layers().size(); ++l) {
      const LoraFactors& now = a.model.layers()[l].adapters()[t];
      const LoraFactors& snap = a.history.per_task[t][l];
      adapters_same = adapters_same && now.B().bit_equal(snap.B()) && now.A().bit_equal(snap.A());
    }
  }
  v.require(adapters_same, "adapters of tasks 1..4 bitwise equal to their post-task snapshots");
  v.require(a.accuracy == b.accuracy, "accuracy matrix identical under seed replay");
  return v;
}

struct MethodSummary {
  std::vector<double> a_t;
  std::vector<double> forgetting;
  std::vector<std::string> failures;
};

MethodSummary run_seeds(TrainingConfig c, std::size_t tasks = 5) {
  MethodSummary s;
  for (std::uint64_t seed : kSeeds) {
    c.seed = seed;
    try {
      const RunResult r = run_stream(make_stream(kRotatedGaussians, tasks, seed), c);
      s.a_t.push_back(r.average_accuracy);
      s.forgetting.push_back(mean_forgetting(r.accuracy));
    } catch (const DivergenceError& e) {
      s.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
    }
  }
  return s;
}

Verdict forgetting_reduction() {
  Verdict v{6, "olier (lambda 0.5, order 2) beats inc-lora on A_T and forgetting, 5 seeds"};
  TrainingConfig olier;
  olier.method = Method::olier;
  TrainingConfig inc;
  inc.method = Method::inc_lora;
  inc.loss_weights = {0.0, 0.0};
  const MethodSummary o = run_seeds(olier);
  const MethodSummary i = run_seeds(inc);
  v.note("inc-lora A_T " + fmt_list(i.a_t) + " mean " + fmt("%.4f", mean(i.a_t)) + ", forgetting " +
         fmt("%.4f", mean(i.forgetting)));
  for (const std::string& f : o.failures) v.note("olier diverged, " + f);
  if (o.a_t.size() != kSeeds.size()) {
    v.require(false, "olier completed " + std::to_string(o.a_t.size()) + "/5 seeds, no A_T to compare");
  } else {
    v.note("olier A_T " + fmt_list(o.a_t) + " mean " + fmt("%.4f", mean(o.a_t)));
    v.require(mean(o.a_t) > mean(i.a_t), "mean A_T margin " + fmt("%+.4f", mean(o.a_t) - mean(i.a_t)) + " > 0");
    v.require(mean(o.forgetting) < mean(i.forgetting),
              "mean forgetting " + fmt("%.4f", mean(o.forgetting)) + " < " + fmt("%.4f", mean(i.forgetting)));
  }

  TrainingConfig free = olier;
  free.loss_weights = {0.0, 0.0};
  const MethodSummary z = run_seeds(free);
  if (z.a_t.size() == kSeeds.size()) {
    v.note("info: olier with lambda_orth 0 reaches A_T " + fmt("%.4f", mean(z.a_t)) + ", forgetting " +
           fmt("%.4f", mean(z.forgetting)) + " (not the criterion's config)");
  }
  return v;
}

std::vector<double> read_deltas(const fs::path& csv) {
  std::vector<double> out;
  std::ifstream is(csv);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) out.push_back(std::stod(line.substr(line.rfind(',') + 1)));
  return out;
}

Verdict multiplicative_ablation(const fs::path& work) {
  Verdict v{7, "ablate-mult over 5 seeds: mean delta A_T >= 0"};
  const fs::path dir = work / "ablate_mult";
  fs::remove_all(dir);
  std::string err;
  const int code = cli({"ablate-mult", "--seeds", "0,1,2,3,4", "--out", dir.string()}, &err);
  if (code != kExitOk) {
    v.require(false, "ablate-mult at default lambda_orth 0.5 exited " + std::to_string(code) + ": " +
                         err.substr(0, err.find('\n')));
  } else {
    const std::vector<double> d = read_deltas(dir / "ablate_mult.csv");
    v.note("delta A_T per seed " + fmt_list(d, "%+.4f"));
    v.require(d.size() == kSeeds.size() && mean(d) >= 0.0, "mean delta A_T " + fmt("%+.4f", mean(d)) + " >= 0");
  }

  const fs::path free_dir = work / "ablate_mult_lambda0";
  fs::remove_all(free_dir);
  if (cli({"ablate-mult", "--seeds", "0,1,2,3,4", "--lambda-orth", "0", "--out", free_dir.string()}) == kExitOk) {
    const std::vector<double> d = read_deltas(free_dir / "ablate_mult.csv");
    v.note("info: with lambda_orth 0, delta A_T per seed " + fmt_list(d, "%+.4f") + " mean " +
           fmt("%+.4f", mean(d)) + " (not the criterion's config)");
  }
  return v;
}

double small_entry_fraction(const RunResult& r) {
  std::size_t small = 0;
  std::size_t total = 0;
  for (const LoraFactors& f : r.history.per_task.back()) {
    const Tensor d = delta_from_factors(f);
    for (double x : d.data()) small += std::fabs(x) < 1e-4;
    total += d.numel();
  }
  return static_cast<double>(small) / static_cast<double>(total);
}

Verdict fisher_and_sparsity(const fs::path& work, std::vector<RunResult>& olora_runs) {
  Verdict v{8, "Fisher energy via the CLI, nlora sparsity vs olora"};
  for (const char* method : {"olier", "olora", "nlora", "inc-lora", "seq-lora"}) {
    const fs::path dir = work / (std::string("fisher_") + method);
    fs::remove_all(dir);
    std::vector<std::string> run{"run", "--method", method, "--tasks", "3", "--seed", "0", "--out", dir.string()};
    if (std::string(method) == "nlora") run.insert(run.end(), {"--lambda-sparse", "0.01"});
    std::string err;
    if (cli(run, &err) != kExitOk) {
      v.require(false, std::string(method) + ": run failed: " + err.substr(0, err.find('\n')));
      continue;
    }
    if (cli({"fisher", "--run", dir.string()}, &err) != kExitOk) {
      v.require(false, std::string(method) + ": fisher failed: " + err.substr(0, err.find('\n')));
      continue;
    }
    const double energy = read_json(dir / "fisher.json")["energy"].get<double>();

    AdapterCheckpoint ckpt = load_checkpoint(dir / "checkpoint.txt");
    if (ckpt.history.reuse) {
      // untrained final state: the shared adapter as it stood after the previous task
      ckpt.history.per_task.back() = ckpt.history.per_task[ckpt.history.per_task.size() - 2];
    } else {
      for (LoraFactors& f : ckpt.history.per_task.back()) f.A() = Tensor::zeros(f.A().shape());
    }
    save_checkpoint(ckpt, dir / "checkpoint.txt");
    cli({"fisher", "--run", dir.string()});
    const double untrained = read_json(dir / "fisher.json")["energy"].get<double>();
    v.require(energy >= 0.0 && untrained == 0.0,
              std::string(method) + ": E = " + fmt("%.4e", energy) + ", untrained final adapter E = " +
                  fmt("%g", untrained));
  }

  TrainingConfig nlora;
  nlora.method = Method::nlora;
  nlora.loss_weights = {0.0, 0.01};
  TrainingConfig olora;
  olora.method = Method::olora;
  std::vector<double> nf;
  std::vector<double> of;
  bool sparser = true;
  for (std::uint64_t seed : kSeeds) {
    const TaskStream s = make_stream(kRotatedGaussians, 5, seed);
    nlora.seed = olora.seed = seed;
    try {
      nf.push_back(small_entry_fraction(run_stream(s, nlora)));
      olora_runs.push_back(run_stream(s, olora));
      of.push_back(small_entry_fraction(olora_runs.back()));
      sparser = sparser && nf.back() > of.back();
    } catch (const DivergenceError& e) {
      v.require(false, "seed " + std::to_string(seed) + " diverged: " + e.what());
    }
  }
  v.note("fraction of final-adapter BA entries below 1e-4: nlora " + fmt_list(nf) + ", olora " + fmt_list(of));
  v.require(sparser && nf.size() == kSeeds.size(), "nlora (lambda_sparse 0.01, lambda_orth 0) strictly sparser on every seed");
  return v;
}

Verdict olora_overlap(const std::vector<RunResult>& runs) {
  Verdict v{9, "olora drives mean |O_{i,t}| below its initial value, 5 seeds"};
  if (runs.size() != kSeeds.size()) {
    v.require(false, "only " + std::to_string(runs.size()) + " olora runs completed");
    return v;
  }
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto& tasks = runs[k].tasks;
    double start = 0.0;
    double end = 0.0;
    std::size_t per_task_down = 0;
    // each later task has t earlier adapters; weight the per-task means by pair count
    double pairs = 0.0;
    for (std::size_t t = 1; t < tasks.size(); ++t) {
      start += static_cast<double>(t) * tasks[t].log.overlap_start;
      end += static_cast<double>(t) * tasks[t].log.overlap_end;
      pairs += static_cast<double>(t);
      per_task_down += tasks[t].log.overlap_end < tasks[t].log.overlap_start;
    }
    start /= pairs;
    end /= pairs;
    v.require(end < start, "seed " + std::to_string(kSeeds[k]) + ": mean |O| " + fmt("%.4g", start) + " -> " +
                               fmt("%.4g", end) + " (" + std::to_string(per_task_down) + "/" +
                               std::to_string(tasks.size() - 1) + " tasks individually lower)");
  }
  return v;
}

Verdict metric_correctness() {
  Verdict v{10, "average accuracy reproduces the published averages"};
  const std::vector<double> first{79.9, 79.5, 79.5};
  const std::vector<double> second{77.4, 77.5, 78.3};
  const double a = std::round(average_accuracy(first) * 10.0) / 10.0;
  const double b = std::round(average_accuracy(second) * 10.0) / 10.0;
  v.require(a == 79.6, "[79.9, 79.5, 79.5] -> " + fmt("%.1f", a) + " (expected 79.6)");
  v.require(b == 77.7, "[77.4, 77.5, 78.3] -> " + fmt("%.1f", b) + " (expected 77.7)");
  return v;
}

void print(const Verdict& v) {
  std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << v.id << ": " << v.title << '\n';
  for (const std::string& d : v.details) std::cout << "        " << d << '\n';
  std::cout.flush();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string work = (fs::temp_directory_path() / "oliera_acceptance").string();
  bool strict = false;
  app.add_option("--work-dir", work, "scratch directory for CLI runs");
  app.add_flag("--strict", strict, "exit 1 when any criterion fails");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  std::vector<Verdict> verdicts;
  auto record = [&](Verdict v) {
    print(v);
    verdicts.push_back(std::move(v));
  };
  record(gradient_oracles());
  record(taylor_remainder());
  record(group_laws());
  record(first_order_identity());
  record(frozen_invariant());
  record(forgetting_reduction());
  record(multiplicative_ablation(work));
  std::vector<RunResult> olora_runs;
  record(fisher_and_sparsity(work, olora_runs));
  record(olora_overlap(olora_runs));
  record(metric_correctness());

  const auto passed = std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return v.pass; });
  std::cout << passed << "/" << verdicts.size() << " criteria passed\n";
  return strict && passed != static_cast<long>(verdicts.size()) ? 1 : 0;
}
