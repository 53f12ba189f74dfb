// SPDX-License-Identifier: Apache-2.0
//
// Run manifests, Fisher reports (JSON) and the flat results tables (CSV).
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "oliera/fisher.hpp"
#include "oliera/trainer.hpp"

namespace oliera {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kManifestVersion = 1;

/// How a stream was produced; enough to regenerate it with make_stream.
struct StreamDescriptor {
  std::string kind;
  std::size_t tasks = 0;
  std::uint64_t seed = 0;
  std::string order_label = "order-1";
  StreamOptions options;
};

Json config_json(const TrainingConfig& config);
Json stream_json(const StreamDescriptor& d);
Json accuracy_json(const AccuracyMatrix& m);
Json fisher_json(const FisherReport& r);

/// Everything a run produced. Only the "wall_clock" block depends on timing.
Json manifest_json(const TrainingConfig& config, const StreamDescriptor& stream, const RunResult& run,
                   const std::optional<FisherReport>& fisher = std::nullopt);

void write_json(const std::filesystem::path& path, const Json& doc);
Json read_json(const std::filesystem::path& path);

inline constexpr const char* kResultsHeader = "method,order,taylor,seed,task,a_iT,A_T";
inline constexpr const char* kAblateMultHeader = "seed,A_T_mult,A_T_add,delta_A_T";
inline constexpr const char* kAblateTaylorHeader = "taylor,seed,A_T";

/// Method label used in results tables: the method name, suffixed with
/// "-add" or "-mult" when the update mode is not the method's default.
std::string method_label(const TrainingConfig& config);

/// One row per task: a_iT is the final accuracy on that task.
std::vector<std::string> results_rows(const TrainingConfig& config, const TaskStream& stream, const RunResult& run);

enum class CsvMode { overwrite, append };
/// Writes the header when the file is new, empty, or overwritten. In append
/// mode an existing file must start with `header`, else FormatError.
void write_csv(const std::filesystem::path& path, const std::string& header, const std::vector<std::string>& rows,
               CsvMode mode);

std::string format_fixed(double v);

}  // namespace oliera
