// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Subcommands: run, ablate-taylor, ablate-mult,
// fisher, export-stream. Exit codes: 0 success, 1 usage, 2 runtime or
// divergence, 3 I/O or file format.
#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

namespace oliera {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitFormat = 3;

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Task permutation for --order k: 1 identity, 2 reversed, 3 even positions
/// then odd positions.
std::vector<std::size_t> task_order_permutation(int order, std::size_t tasks);

}  // namespace oliera
