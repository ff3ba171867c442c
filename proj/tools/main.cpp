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

#include <CLI11.hpp>
#include <fmt/core.h>

#include <iostream>

#include "config.hpp"
#include "dpproc/contracts.hpp"
#include "dpproc/error.hpp"
#include "runner.hpp"
#include "serialize.hpp"

namespace {

using namespace dpproc::cli;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool noise_off = false;
};

void add_common(CLI::App* sub, Flags& f, bool with_outputs) {
  sub->add_option("--config", f.config, "Experiment config (YAML)")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "Override the config seed");
  if (with_outputs) {
    sub->add_option("--out", f.out, "Output directory (overrides 'output')");
    sub->add_flag("--noise-off", f.noise_off, "Zero every Laplace draw (testing only)");
  }
}

int validate(const Flags& f) {
  ExperimentConfig cfg = load_config(f.config);
  nlohmann::json report = {{"experiment", experiment_name(cfg.kind)},
                           {"n", cfg.n},
                           {"h", cfg.h()},
                           {"config_hash", cfg.config_hash}};
  if (cfg.c || cfg.k || cfg.budget) {
    const ResolvedParams p = resolve_params(cfg);
    report["contract"] = dpproc::build_contract(cfg.distributions, p.c, p.epsilon);
  }
  std::cout << report.dump(2) << '\n';
  return kExitOk;
}

int run(const std::string& subcommand, const Flags& f) {
  ExperimentConfig cfg = load_config(f.config);
  if (subcommand != experiment_name(cfg.kind)) {
    throw ConfigError(fmt::format("config describes a '{}' experiment, not '{}'", experiment_name(cfg.kind),
                                  subcommand));
  }
  RunOptions opt;
  opt.seed = f.seed;
  if (!f.out.empty()) opt.out = f.out;
  opt.noise_off = f.noise_off;
  const RunResult r = run_experiment(std::move(cfg), opt);
  std::cout << r.summary.dump(2) << '\n';
  return r.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private data procurement: simulation, audits and benchmarks"};
  app.require_subcommand(1);
  Flags flags;
  std::vector<std::pair<std::string, CLI::App*>> subs;
  for (const char* name : {"run", "audit-dp", "audit-bic", "accuracy-sweep", "benchmark"}) {
    auto* sub = app.add_subcommand(name, fmt::format("Run a config whose experiment is '{}'", name));
    add_common(sub, flags, true);
    subs.emplace_back(name, sub);
  }
  auto* val = app.add_subcommand("validate", "Check a config and print the resolved contract");
  add_common(val, flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalidConfig;
  }

  try {
    if (val->parsed()) return validate(flags);
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) return run(name, flags);
    }
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const dpproc::Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const dpproc::InvalidArgument& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
