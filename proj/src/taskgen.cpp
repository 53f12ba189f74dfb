// SPDX-License-Identifier: Apache-2.0
#include "oliera/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "oliera/error.hpp"
#include "textio.hpp"

namespace oliera {
namespace {

constexpr const char* kStreamMagic = "OLIERA-STREAM";
constexpr int kStreamVersion = 1;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

// Haar-distributed orthogonal matrix: Gram-Schmidt on a Gaussian matrix.
Tensor random_rotation(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor q({dim, dim});
  for (std::size_t r = 0; r < dim; ++r) {
    for (;;) {
      for (std::size_t c = 0; c < dim; ++c) q(r, c) = normal(rng);
      for (std::size_t p = 0; p < r; ++p) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dim; ++c) dot += q(r, c) * q(p, c);
        for (std::size_t c = 0; c < dim; ++c) q(r, c) -= dot * q(p, c);
      }
      double norm = 0.0;
      for (std::size_t c = 0; c < dim; ++c) norm += q(r, c) * q(r, c);
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (std::size_t c = 0; c < dim; ++c) q(r, c) /= norm;
        break;
      }
    }
  }
  return q;
}

// Labels 0..classes-1 repeated, then shuffled: class counts differ by at most 1.
std::vector<int> balanced_labels(std::size_t n, std::size_t classes, std::mt19937_64& rng) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % classes);
  std::shuffle(y.begin(), y.end(), rng);
  return y;
}

Dataset sample_gaussian_split(const Tensor& means, std::size_t n, std::mt19937_64& rng) {
  const std::size_t classes = means.rows();
  const std::size_t dim = means.cols();
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d{Tensor({n, dim}), balanced_labels(n, classes, rng)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(d.y[i]);
    for (std::size_t k = 0; k < dim; ++k) d.x(i, k) = means(c, k) + normal(rng);
  }
  return d;
}

void standardize(Tensor& x) {
  const std::size_t n = x.rows();
  for (std::size_t k = 0; k < x.cols(); ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, k);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x(i, k) - mean) * (x(i, k) - mean);
    var /= static_cast<double>(n);
    const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t i = 0; i < n; ++i) x(i, k) = (x(i, k) - mean) * inv;
  }
}

Tensor permute_columns(const Tensor& x, const std::vector<std::size_t>& perm) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t k = 0; k < x.cols(); ++k) out(i, k) = x(i, perm[k]);
  }
  return out;
}

void validate_options(const StreamOptions& o) {
  if (o.classes < 2) throw ConfigError("stream needs at least 2 classes");
  if (o.feature_dim == 0 || o.train_size < o.classes || o.test_size < o.classes) {
    throw ConfigError("stream splits must hold at least one sample per class");
  }
  if (!(o.prototype_scale > 0.0)) throw ConfigError("prototype_scale must be positive");
}

void write_split(std::ostream& os, const char* name, const Dataset& d) {
  os << name << ' ' << d.size() << ' ' << d.x.cols() << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    os << d.y[i];
    for (std::size_t k = 0; k < d.x.cols(); ++k) os << ' ' << textio::format_double(d.x(i, k));
    os << '\n';
  }
}

Dataset read_split(textio::TokenReader& in, const char* name) {
  in.expect(name);
  const auto n = in.integer<std::size_t>();
  const auto dim = in.integer<std::size_t>();
  if (n == 0 || dim == 0) throw FormatError("stream: empty split");
  Dataset d{Tensor({n, dim}), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    d.y[i] = in.integer<int>();
    for (std::size_t k = 0; k < dim; ++k) d.x(i, k) = in.real();
  }
  return d;
}

}  // namespace

Dataset Dataset::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > size() || count == 0) throw ContractError("Dataset::slice out of range");
  Dataset out{Tensor({count, x.cols()}), std::vector<int>(y.begin() + begin, y.begin() + begin + count)};
  std::copy_n(x.data().begin() + begin * x.cols(), count * x.cols(), out.x.data().begin());
  return out;
}

Dataset Dataset::gather(const std::vector<std::size_t>& rows) const {
  if (rows.empty()) throw ContractError("Dataset::gather with no rows");
  Dataset out{Tensor({rows.size(), x.cols()}), std::vector<int>(rows.size())};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw ContractError("Dataset::gather index out of range");
    out.y[i] = y[rows[i]];
    std::copy_n(x.data().begin() + rows[i] * x.cols(), x.cols(), out.x.data().begin() + i * x.cols());
  }
  return out;
}

TaskStream make_stream(const std::string& kind, std::size_t tasks, std::uint64_t seed, const StreamOptions& options) {
  if (kind != kRotatedGaussians && kind != kPermutedFeatures) {
    throw ConfigError("unknown stream kind '" + kind + "' (expected rotated-gaussians or permuted-features)");
  }
  if (tasks == 0) throw ConfigError("stream needs at least one task");
  validate_options(options);

  const std::size_t dim = options.feature_dim;
  std::mt19937_64 proto_rng = make_rng(seed, 0xC1A55, 0);
  std::normal_distribution<double> normal(0.0, options.prototype_scale);
  Tensor prototypes({options.classes, dim});
  for (double& v : prototypes.data()) v = normal(proto_rng);

  TaskStream stream;
  stream.kind = kind;
  stream.seed = seed;

  // permuted-features shares one sample set across tasks.
  Dataset shared_train;
  Dataset shared_test;
  if (kind == kPermutedFeatures) {
    std::mt19937_64 rng = make_rng(seed, 0x5A3D, 0);
    shared_train = sample_gaussian_split(prototypes, options.train_size, rng);
    shared_test = sample_gaussian_split(prototypes, options.test_size, rng);
  }

  for (std::size_t t = 0; t < tasks; ++t) {
    Task task;
    task.id = static_cast<int>(t);
    task.classes = options.classes;
    task.kind = kind;
    task.seed = seed;
    std::mt19937_64 rng = make_rng(seed, 0x7A5C, t);
    if (kind == kRotatedGaussians) {
      const Tensor rotation = random_rotation(dim, rng);
      const Tensor means = matmul(prototypes, transpose(rotation));
      task.train = sample_gaussian_split(means, options.train_size, rng);
      task.test = sample_gaussian_split(means, options.test_size, rng);
    } else {
      std::vector<std::size_t> perm(dim);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      task.train = Dataset{permute_columns(shared_train.x, perm), shared_train.y};
      task.test = Dataset{permute_columns(shared_test.x, perm), shared_test.y};
    }
    standardize(task.train.x);
    standardize(task.test.x);
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

TaskStream reorder(const TaskStream& stream, const std::vector<std::size_t>& permutation) {
  if (permutation.size() != stream.size()) {
    throw ConfigError("permutation length " + std::to_string(permutation.size()) + " does not match " +
                      std::to_string(stream.size()) + " tasks");
  }
  std::set<std::size_t> seen(permutation.begin(), permutation.end());
  if (seen.size() != permutation.size() || (!seen.empty() && *seen.rbegin() >= stream.size())) {
    throw ConfigError("invalid task permutation");
  }
  TaskStream out;
  out.kind = stream.kind;
  out.seed = stream.seed;
  out.order_label = stream.order_label;
  for (std::size_t pos : permutation) out.tasks.push_back(stream.tasks[pos]);
  return out;
}

std::vector<TaskStream> stream_orders(const TaskStream& stream,
                                      const std::vector<std::vector<std::size_t>>& permutations) {
  std::vector<TaskStream> out;
  for (std::size_t k = 0; k < permutations.size(); ++k) {
    TaskStream s = reorder(stream, permutations[k]);
    s.order_label = "order-" + std::to_string(k + 1);
    out.push_back(std::move(s));
  }
  return out;
}

void save_stream(const TaskStream& stream, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << kStreamMagic << ' ' << kStreamVersion << '\n';
  os << "kind " << stream.kind << '\n' << "seed " << stream.seed << '\n';
  os << "order_label " << stream.order_label << '\n' << "tasks " << stream.size() << '\n';
  for (const Task& t : stream.tasks) {
    os << "task " << t.id << " classes " << t.classes << " kind " << t.kind << " seed " << t.seed << '\n';
    write_split(os, "train", t.train);
    write_split(os, "test", t.test);
  }
  os << "end\n";
  if (!os) throw FormatError("failed writing " + path.string());
}

TaskStream load_stream(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  textio::TokenReader in(is, "stream " + path.string());
  in.expect(kStreamMagic);
  const int version = in.integer<int>();
  if (version != kStreamVersion) {
    throw VersionError("stream format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kStreamVersion) + ")");
  }
  TaskStream stream;
  in.expect("kind");
  stream.kind = in.word();
  in.expect("seed");
  stream.seed = in.integer<std::uint64_t>();
  in.expect("order_label");
  stream.order_label = in.word();
  in.expect("tasks");
  const auto count = in.integer<std::size_t>();
  for (std::size_t i = 0; i < count; ++i) {
    Task t;
    in.expect("task");
    t.id = in.integer<int>();
    in.expect("classes");
    t.classes = in.integer<std::size_t>();
    in.expect("kind");
    t.kind = in.word();
    in.expect("seed");
    t.seed = in.integer<std::uint64_t>();
    t.train = read_split(in, "train");
    t.test = read_split(in, "test");
    stream.tasks.push_back(std::move(t));
  }
  in.expect("end");
  return stream;
}

}  // namespace oliera
