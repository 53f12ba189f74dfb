// SPDX-License-Identifier: Apache-2.0
//
// Synthetic sequential classification tasks.
//
// rotated-gaussians  one set of class prototypes; task t sees them through its
//                    own random orthogonal rotation, plus isotropic noise
// permuted-features  one fixed labelled sample set; task t sees its features
//                    through its own random permutation
//
// Each split is standardized to zero mean and unit variance per feature.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oliera/tensor.hpp"

namespace oliera {

struct Dataset {
  Tensor x;            ///< samples x features
  std::vector<int> y;  ///< one label per row

  std::size_t size() const noexcept { return y.size(); }
  /// Rows [begin, begin + count) as a new dataset.
  Dataset slice(std::size_t begin, std::size_t count) const;
  /// Rows selected by index, in the given order.
  Dataset gather(const std::vector<std::size_t>& rows) const;
};

struct Task {
  int id = 0;
  std::size_t classes = 0;
  std::string kind;
  std::uint64_t seed = 0;
  Dataset train;
  Dataset test;
};

struct TaskStream {
  std::string kind;
  std::uint64_t seed = 0;
  std::string order_label = "order-1";
  std::vector<Task> tasks;

  std::size_t size() const noexcept { return tasks.size(); }
};

struct StreamOptions {
  std::size_t classes = 4;
  std::size_t train_size = 512;
  std::size_t test_size = 256;
  std::size_t feature_dim = 32;
  /// Per-coordinate standard deviation of the class prototypes; the sample
  /// noise has unit variance.
  double prototype_scale = 0.6;
};

inline constexpr const char* kRotatedGaussians = "rotated-gaussians";
inline constexpr const char* kPermutedFeatures = "permuted-features";

/// Throws ConfigError for an unknown kind or T == 0.
TaskStream make_stream(const std::string& kind, std::size_t tasks, std::uint64_t seed,
                       const StreamOptions& options = {});

/// Reordered copies of `stream`, one per permutation (0-based task positions).
/// Copy k is labelled "order-(k+1)". Throws ConfigError on an invalid permutation.
std::vector<TaskStream> stream_orders(const TaskStream& stream,
                                      const std::vector<std::vector<std::size_t>>& permutations);

/// Reorders a stream by a single permutation, keeping its label.
TaskStream reorder(const TaskStream& stream, const std::vector<std::size_t>& permutation);

/// Text serialization with 17 significant digits per value (see README).
void save_stream(const TaskStream& stream, const std::filesystem::path& path);
TaskStream load_stream(const std::filesystem::path& path);

}  // namespace oliera
