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
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpproc/distributions.hpp"

namespace dpproc::cli {

// Raised for anything wrong with the configuration file; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExperimentKind { kRun, kAuditDp, kAuditBic, kAccuracySweep, kBenchmark };

const char* experiment_name(ExperimentKind kind);

struct BudgetSpec {
  double total = 0.0;
  std::optional<double> alpha_max;  // defaults to the largest finite support end
};

struct DpAuditSpec {
  std::string target = "estimate";  // estimate | payment
  std::size_t flip_index = 0;
  int flip_to = 2;
  std::size_t player = 0;  // payment audits only
  std::size_t samples = 200000;
  double slack = 1.1;
  std::optional<double> epsilon_target;  // defaults to epsilon
};

struct BicSpec {
  std::size_t player = 0;
  std::vector<double> cost_grid;  // empty: five points around the offer
};

struct BenchmarkSpec {
  std::vector<std::size_t> w;
  std::vector<std::string> kinds{"envy_free"};  // envy_free | optimal
  double slack = 0.02;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kRun;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::vector<int> database;
  std::vector<nlohmann::json> distribution_specs;  // as written, for the manifest
  std::vector<CostDistribution> distributions;
  std::optional<double> epsilon;
  std::optional<double> c;
  std::optional<double> k;
  std::vector<double> sweep_k;  // accuracy-sweep: extra k values
  std::optional<BudgetSpec> budget;
  std::size_t replications = 1;
  int target_type = 1;
  std::optional<std::string> output;
  DpAuditSpec dp;
  BicSpec bic;
  BenchmarkSpec benchmark;
  bool noise_off = false;

  nlohmann::json echo;     // parsed config as JSON
  std::string raw_text;    // file contents
  std::string config_hash; // git blob SHA-1 of raw_text

  int h() const { return static_cast<int>(distributions.size()); }
  std::size_t count_of(int type) const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// SHA-1 over "blob <size>\0" + content, as `git hash-object` computes it.
std::string git_blob_hash(const std::string& content);

CostDistribution distribution_from_json(const nlohmann::json& spec);

struct ResolvedParams {
  double c;
  double epsilon;
};

// Fills c and epsilon from whichever of c, k or budget is present. Throws
// ConfigError when they are missing and dpproc::Infeasible when the budget is
// too small.
ResolvedParams resolve_params(const ExperimentConfig& cfg);

}  // namespace dpproc::cli
