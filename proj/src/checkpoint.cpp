// SPDX-License-Identifier: Apache-2.0
#include "oliera/checkpoint.hpp"

#include <fstream>

#include "oliera/error.hpp"
#include "textio.hpp"

namespace oliera {

bool operator==(const AdapterCheckpoint& a, const AdapterCheckpoint& b) {
  if (a.format_version != b.format_version || a.method != b.method || a.update_mode != b.update_mode ||
      a.taylor_order != b.taylor_order || a.seed != b.seed || a.input_dim != b.input_dim ||
      a.hidden_dim != b.hidden_dim || a.classes != b.classes || a.rank != b.rank ||
      a.history.reuse != b.history.reuse || a.history.tasks() != b.history.tasks()) {
    return false;
  }
  for (std::size_t t = 0; t < a.history.tasks(); ++t) {
    const auto& x = a.history.per_task[t];
    const auto& y = b.history.per_task[t];
    if (x.size() != y.size()) return false;
    for (std::size_t l = 0; l < x.size(); ++l) {
      if (!x[l].B().bit_equal(y[l].B()) || !x[l].A().bit_equal(y[l].A())) return false;
    }
  }
  return true;
}

AdapterCheckpoint make_checkpoint(const RunResult& run, const TrainingConfig& config) {
  AdapterCheckpoint c;
  c.method = to_string(config.method);
  c.update_mode = to_string(config.resolved_update_mode());
  c.taylor_order = config.taylor_order;
  c.seed = config.seed;
  c.input_dim = run.model.config().input_dim;
  c.hidden_dim = config.hidden_dim;
  c.classes = run.model.config().classes;
  c.rank = config.rank;
  c.history = run.history;
  return c;
}

TrainingConfig checkpoint_config(const AdapterCheckpoint& ckpt) {
  TrainingConfig c;
  c.method = parse_method(ckpt.method);
  c.update_mode = parse_update_mode(ckpt.update_mode);
  c.taylor_order = ckpt.taylor_order;
  c.seed = ckpt.seed;
  c.hidden_dim = ckpt.hidden_dim;
  c.rank = ckpt.rank;
  return c;
}

ClassifierModel checkpoint_base_model(const AdapterCheckpoint& ckpt) {
  return initial_model(checkpoint_config(ckpt), ckpt.input_dim, ckpt.classes);
}

void write_checkpoint(std::ostream& os, const AdapterCheckpoint& c) {
  os << kCheckpointMagic << ' ' << c.format_version << '\n';
  os << "method " << c.method << '\n';
  os << "update_mode " << c.update_mode << '\n';
  os << "taylor_order " << c.taylor_order << '\n';
  os << "seed " << c.seed << '\n';
  os << "dims " << c.input_dim << ' ' << c.hidden_dim << ' ' << c.classes << ' ' << c.rank << '\n';
  os << "reuse " << (c.history.reuse ? 1 : 0) << '\n';
  const std::size_t layers = c.history.per_task.empty() ? 0 : c.history.per_task.front().size();
  os << "tasks " << c.history.tasks() << " layers " << layers << '\n';
  for (std::size_t t = 0; t < c.history.tasks(); ++t) {
    if (c.history.per_task[t].size() != layers) throw ContractError("checkpoint: ragged adapter history");
    for (std::size_t l = 0; l < layers; ++l) {
      const LoraFactors& f = c.history.per_task[t][l];
      os << "adapter " << t << ' ' << l << ' ' << f.out_features() << ' ' << f.rank() << ' ' << f.in_features()
         << '\n';
      os << "B\n";
      textio::write_rows(os, f.B());
      os << "A\n";
      textio::write_rows(os, f.A());
    }
  }
  os << "end\n";
}

AdapterCheckpoint read_checkpoint(std::istream& is, const std::string& what) {
  textio::TokenReader in(is, what);
  const std::string magic = in.word();
  if (magic != kCheckpointMagic) throw FormatError(what + ": not a checkpoint (bad magic '" + magic + "')");
  AdapterCheckpoint c;
  c.format_version = in.integer<int>();
  if (c.format_version != kCheckpointVersion) {
    throw VersionError(what + ": checkpoint format version " + std::to_string(c.format_version) +
                       " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  in.expect("method");
  c.method = in.word();
  in.expect("update_mode");
  c.update_mode = in.word();
  in.expect("taylor_order");
  c.taylor_order = in.integer<int>();
  in.expect("seed");
  c.seed = in.integer<std::uint64_t>();
  in.expect("dims");
  c.input_dim = in.integer<std::size_t>();
  c.hidden_dim = in.integer<std::size_t>();
  c.classes = in.integer<std::size_t>();
  c.rank = in.integer<std::size_t>();
  in.expect("reuse");
  c.history.reuse = in.integer<int>() != 0;
  in.expect("tasks");
  const auto tasks = in.integer<std::size_t>();
  in.expect("layers");
  const auto layers = in.integer<std::size_t>();
  for (std::size_t t = 0; t < tasks; ++t) {
    std::vector<LoraFactors> row;
    for (std::size_t l = 0; l < layers; ++l) {
      in.expect("adapter");
      if (in.integer<std::size_t>() != t || in.integer<std::size_t>() != l) {
        throw FormatError(what + ": adapters out of order");
      }
      const auto out = in.integer<std::size_t>();
      const auto r = in.integer<std::size_t>();
      const auto inf = in.integer<std::size_t>();
      in.expect("B");
      Tensor b = in.matrix(out, r);
      in.expect("A");
      Tensor a = in.matrix(r, inf);
      try {
        row.emplace_back(std::move(b), std::move(a));
      } catch (const ShapeError& e) {
        throw FormatError(what + ": " + e.what());
      }
    }
    c.history.per_task.push_back(std::move(row));
  }
  in.expect("end");
  // Reject unknown method/mode names here rather than at use.
  try {
    (void)parse_method(c.method);
    (void)parse_update_mode(c.update_mode);
  } catch (const ConfigError& e) {
    throw FormatError(what + ": " + e.what());
  }
  return c;
}

void save_checkpoint(const AdapterCheckpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, ckpt);
  if (!os) throw FormatError("failed writing " + path.string());
}

AdapterCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_checkpoint(is, "checkpoint " + path.string());
}

}  // namespace oliera
