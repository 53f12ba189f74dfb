// SPDX-License-Identifier: Apache-2.0
//
// Adapter checkpoints. The frozen base model is not stored: it is regenerated
// from the seed and dimensions recorded here (see initial_model).
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oliera/trainer.hpp"

namespace oliera {

inline constexpr const char* kCheckpointMagic = "OLIERA-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

struct AdapterCheckpoint {
  int format_version = kCheckpointVersion;
  std::string method;
  std::string update_mode;
  int taylor_order = 2;
  std::uint64_t seed = 0;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t classes = 0;
  std::size_t rank = 0;
  AdapterHistory history;

  friend bool operator==(const AdapterCheckpoint& a, const AdapterCheckpoint& b);
};

AdapterCheckpoint make_checkpoint(const RunResult& run, const TrainingConfig& config);

/// Training config that regenerates the checkpoint's base model.
TrainingConfig checkpoint_config(const AdapterCheckpoint& ckpt);
ClassifierModel checkpoint_base_model(const AdapterCheckpoint& ckpt);

void write_checkpoint(std::ostream& os, const AdapterCheckpoint& ckpt);
/// Throws VersionError on a foreign version and FormatError on anything else
/// malformed, including truncation.
AdapterCheckpoint read_checkpoint(std::istream& is, const std::string& what = "checkpoint");

void save_checkpoint(const AdapterCheckpoint& ckpt, const std::filesystem::path& path);
AdapterCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace oliera
