// Copyright 2026 The dpproc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"

namespace dpproc::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInvalidConfig = 2,
  kExitInfeasible = 3,
  kExitInconclusive = 4,
  kExitFail = 5,
};

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides the config seed
  std::optional<std::filesystem::path> out;
  bool noise_off = false;
};

struct RunResult {
  int exit_code = kExitOk;
  nlohmann::json summary;
  std::vector<std::string> files;
};

/// Runs one experiment and writes manifest.json, results.csv and
/// summary.json into the output directory. Throws ConfigError or
/// dpproc::Infeasible before anything is written.
RunResult run_experiment(ExperimentConfig cfg, const RunOptions& options);

// Writes `content` to dir/name through a temporary file and a rename.
void write_atomically(const std::filesystem::path& dir, const std::string& name, const std::string& content);

// Shortest round-trip formatting used in every CSV cell.
std::string format_double(double x);

}  // namespace dpproc::cli
