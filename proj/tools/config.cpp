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

#include "config.hpp"

#include <openssl/sha.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "dpproc/agents.hpp"
#include "dpproc/error.hpp"
#include "dpproc/mechanism.hpp"

namespace dpproc::cli {

using nlohmann::json;

const char* experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kRun: return "run";
    case ExperimentKind::kAuditDp: return "audit-dp";
    case ExperimentKind::kAuditBic: return "audit-bic";
    case ExperimentKind::kAccuracySweep: return "accuracy-sweep";
    case ExperimentKind::kBenchmark: return "benchmark";
  }
  return "?";
}

std::size_t ExperimentConfig::count_of(int type) const {
  return static_cast<std::size_t>(std::count(database.begin(), database.end(), type));
}

namespace {

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      json arr = json::array();
      for (const auto& item : node) arr.push_back(yaml_to_json(item));
      return arr;
    }
    case YAML::NodeType::Map: {
      json obj = json::object();
      for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return obj;
    }
    case YAML::NodeType::Scalar: {
      const std::string& s = node.Scalar();
      if (node.Tag() == "!") return s;  // quoted
      long long i = 0;
      if (YAML::convert<long long>::decode(node, i) && s.find_first_of(".eE") == std::string::npos) return i;
      double d = 0.0;
      if (YAML::convert<double>::decode(node, d)) return d;
      bool b = false;
      if (YAML::convert<bool>::decode(node, b)) return b;
      return s;
    }
  }
  return nullptr;
}

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

double number(const json& j, const std::string& key) {
  if (!j.is_number()) fail("'" + key + "' must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail("'" + key + "' must be finite");
  return v;
}

std::size_t count(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0) fail("'" + key + "' must be a nonnegative integer");
  return j.get<std::size_t>();
}

std::vector<double> numbers(const json& j, const std::string& key) {
  if (!j.is_array()) fail("'" + key + "' must be a list of numbers");
  std::vector<double> out;
  for (const auto& x : j) out.push_back(number(x, key));
  return out;
}

void only_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, _] : obj.items()) {
    if (!ok.count(k)) fail("unknown key '" + k + "' in " + where);
  }
}

const json& need(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) fail("missing '" + std::string(key) + "' in " + where);
  return obj.at(key);
}

ContinuousDist continuous_from_json(const json& spec) {
  const std::string kind = spec.value("kind", "");
  if (kind == "uniform") {
    only_keys(spec, {"kind", "lo", "hi"}, "uniform distribution");
    return ContinuousDist::uniform(number(need(spec, "lo", kind), "lo"), number(need(spec, "hi", kind), "hi"));
  }
  if (kind == "exponential") {
    only_keys(spec, {"kind", "rate"}, "exponential distribution");
    return ContinuousDist::exponential(number(need(spec, "rate", kind), "rate"));
  }
  if (kind == "piecewise_density") {
    only_keys(spec, {"kind", "breakpoints", "densities"}, "piecewise density");
    return ContinuousDist::piecewise_density(numbers(need(spec, "breakpoints", kind), "breakpoints"),
                                             numbers(need(spec, "densities", kind), "densities"));
  }
  fail("unknown continuous distribution kind '" + kind + "'");
}

}  // namespace

CostDistribution distribution_from_json(const json& spec) {
  if (!spec.is_object()) fail("each distribution must be a mapping with a 'kind'");
  const std::string kind = spec.value("kind", "");
  try {
    if (kind == "discrete") {
      only_keys(spec, {"kind", "atoms", "probs"}, "discrete distribution");
      return DiscreteDist(numbers(need(spec, "atoms", kind), "atoms"), numbers(need(spec, "probs", kind), "probs"));
    }
    if (kind == "degenerate") {
      only_keys(spec, {"kind", "at"}, "degenerate distribution");
      return DiscreteDist::degenerate(number(need(spec, "at", kind), "at"));
    }
    if (kind == "oracle") {
      only_keys(spec, {"kind", "of", "delta", "bracket"}, "oracle distribution");
      const auto bracket = numbers(need(spec, "bracket", kind), "bracket");
      if (bracket.size() != 2) fail("'bracket' must be [lo, hi]");
      return OracleDist::wrapping(continuous_from_json(need(spec, "of", kind)),
                                  number(need(spec, "delta", kind), "delta"),
                                  std::make_pair(bracket[0], bracket[1]));
    }
    return continuous_from_json(spec);
  } catch (const InvalidArgument& e) {
    fail(std::string("bad distribution: ") + e.what());
  }
}

std::string git_blob_hash(const std::string& content) {
  const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char b : digest) {
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

ExperimentConfig parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    fail(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root.IsMap()) fail("config must be a mapping");
  ExperimentConfig cfg;
  cfg.raw_text = text;
  cfg.config_hash = git_blob_hash(text);
  cfg.echo = yaml_to_json(root);
  const json& j = cfg.echo;
  only_keys(j,
            {"experiment", "seed", "n", "database", "distributions", "epsilon", "c", "k", "sweep_k", "budget",
             "replications", "target_type", "output", "audit", "bic", "benchmark", "noise_off"},
            "config");

  const std::string kind = need(j, "experiment", "config").is_string() ? j.at("experiment").get<std::string>() : "";
  if (kind == "run") cfg.kind = ExperimentKind::kRun;
  else if (kind == "audit-dp") cfg.kind = ExperimentKind::kAuditDp;
  else if (kind == "audit-bic") cfg.kind = ExperimentKind::kAuditBic;
  else if (kind == "accuracy-sweep") cfg.kind = ExperimentKind::kAccuracySweep;
  else if (kind == "benchmark") cfg.kind = ExperimentKind::kBenchmark;
  else fail("'experiment' must be one of run, audit-dp, audit-bic, accuracy-sweep, benchmark");

  const json& seed = need(j, "seed", "config");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0)) {
    fail("'seed' must be a nonnegative integer");
  }
  cfg.seed = seed.get<std::uint64_t>();

  const json& dists = need(j, "distributions", "config");
  if (!dists.is_array() || dists.empty()) fail("'distributions' must be a nonempty list, one entry per type");
  for (const auto& d : dists) {
    cfg.distribution_specs.push_back(d);
    cfg.distributions.push_back(distribution_from_json(d));
  }

  const json& db = need(j, "database", "config");
  if (!db.is_object()) fail("'database' must be a mapping with 'counts' or 'types'");
  only_keys(db, {"counts", "types"}, "database");
  if (db.contains("counts") == db.contains("types")) fail("'database' needs exactly one of 'counts' or 'types'");
  if (db.contains("counts")) {
    std::vector<std::size_t> counts;
    if (!db.at("counts").is_array()) fail("'counts' must be a list");
    for (const auto& x : db.at("counts")) counts.push_back(count(x, "counts"));
    if (counts.size() != cfg.distributions.size()) fail("'counts' needs one entry per distribution");
    cfg.database = database_from_counts(counts);
  } else {
    if (!db.at("types").is_array()) fail("'types' must be a list");
    for (const auto& x : db.at("types")) cfg.database.push_back(static_cast<int>(count(x, "types")));
  }
  if (cfg.database.empty()) fail("database is empty");
  try {
    validate_database(cfg.database, cfg.h());
  } catch (const InvalidArgument& e) {
    fail(e.what());
  }
  cfg.n = cfg.database.size();
  if (j.contains("n") && count(j.at("n"), "n") != cfg.n) fail("'n' disagrees with the database size");

  if (j.contains("epsilon")) cfg.epsilon = number(j.at("epsilon"), "epsilon");
  if (j.contains("c")) cfg.c = number(j.at("c"), "c");
  if (j.contains("k")) cfg.k = number(j.at("k"), "k");
  if (j.contains("sweep_k")) cfg.sweep_k = numbers(j.at("sweep_k"), "sweep_k");
  if (j.contains("budget")) {
    const json& b = j.at("budget");
    if (!b.is_object()) fail("'budget' must be a mapping with 'total'");
    only_keys(b, {"total", "alpha_max"}, "budget");
    BudgetSpec spec;
    spec.total = number(need(b, "total", "budget"), "total");
    if (b.contains("alpha_max")) spec.alpha_max = number(b.at("alpha_max"), "alpha_max");
    cfg.budget = spec;
  }
  const int chosen = cfg.c.has_value() + cfg.k.has_value() + cfg.budget.has_value();
  if (chosen > 1) fail("give exactly one of 'c', 'k' or 'budget'");
  if (chosen == 0 && cfg.kind != ExperimentKind::kBenchmark) fail("give exactly one of 'c', 'k' or 'budget'");
  if (cfg.c && !cfg.epsilon) fail("'c' needs 'epsilon'");
  if ((cfg.k || cfg.budget) && cfg.epsilon) fail("'epsilon' is derived from 'k' or 'budget'; do not give both");
  if (!cfg.sweep_k.empty() && cfg.kind != ExperimentKind::kAccuracySweep) fail("'sweep_k' is for accuracy-sweep");

  if (j.contains("replications")) cfg.replications = count(j.at("replications"), "replications");
  if (cfg.replications == 0) fail("'replications' must be positive");
  if (j.contains("target_type")) cfg.target_type = static_cast<int>(count(j.at("target_type"), "target_type"));
  if (cfg.target_type < 1 || cfg.target_type > cfg.h()) fail("'target_type' must name a type");
  if (j.contains("output")) {
    if (!j.at("output").is_string()) fail("'output' must be a path");
    cfg.output = j.at("output").get<std::string>();
  }
  if (j.contains("noise_off")) {
    if (!j.at("noise_off").is_boolean()) fail("'noise_off' must be true or false");
    cfg.noise_off = j.at("noise_off").get<bool>();
  }

  if (j.contains("audit")) {
    const json& a = j.at("audit");
    if (!a.is_object()) fail("'audit' must be a mapping");
    only_keys(a, {"target", "flip", "player", "samples", "slack", "epsilon_target"}, "audit");
    if (a.contains("target")) cfg.dp.target = a.at("target").is_string() ? a.at("target").get<std::string>() : "";
    if (cfg.dp.target != "estimate" && cfg.dp.target != "payment") fail("audit target must be estimate or payment");
    if (a.contains("flip")) {
      const json& f = a.at("flip");
      only_keys(f, {"index", "to"}, "audit.flip");
      cfg.dp.flip_index = count(need(f, "index", "audit.flip"), "index");
      cfg.dp.flip_to = static_cast<int>(count(need(f, "to", "audit.flip"), "to"));
    }
    if (a.contains("player")) cfg.dp.player = count(a.at("player"), "player");
    if (a.contains("samples")) cfg.dp.samples = count(a.at("samples"), "samples");
    if (a.contains("slack")) cfg.dp.slack = number(a.at("slack"), "slack");
    if (a.contains("epsilon_target")) cfg.dp.epsilon_target = number(a.at("epsilon_target"), "epsilon_target");
    if (cfg.dp.flip_index >= cfg.n) fail("audit.flip.index out of range");
    if (cfg.dp.flip_to < 1 || cfg.dp.flip_to > cfg.h()) fail("audit.flip.to must name a type");
    if (cfg.dp.player >= cfg.n) fail("audit.player out of range");
    if (cfg.dp.samples == 0) fail("audit.samples must be positive");
    if (cfg.dp.slack < 1.0) fail("audit.slack must be at least 1");
  }
  if (j.contains("bic")) {
    const json& b = j.at("bic");
    if (!b.is_object()) fail("'bic' must be a mapping");
    only_keys(b, {"player", "cost_grid"}, "bic");
    if (b.contains("player")) cfg.bic.player = count(b.at("player"), "player");
    if (b.contains("cost_grid")) cfg.bic.cost_grid = numbers(b.at("cost_grid"), "cost_grid");
    if (cfg.bic.player >= cfg.n) fail("bic.player out of range");
  }
  if (j.contains("benchmark")) {
    const json& b = j.at("benchmark");
    if (!b.is_object()) fail("'benchmark' must be a mapping");
    only_keys(b, {"w", "kinds", "slack"}, "benchmark");
    const json& w = need(b, "w", "benchmark");
    if (w.is_array()) {
      for (const auto& x : w) cfg.benchmark.w.push_back(count(x, "w"));
    } else {
      cfg.benchmark.w.push_back(count(w, "w"));
    }
    if (b.contains("kinds")) {
      cfg.benchmark.kinds.clear();
      for (const auto& x : b.at("kinds")) {
        const std::string s = x.is_string() ? x.get<std::string>() : "";
        if (s != "envy_free" && s != "optimal") fail("benchmark kinds are envy_free and optimal");
        cfg.benchmark.kinds.push_back(s);
      }
    }
    if (b.contains("slack")) cfg.benchmark.slack = number(b.at("slack"), "slack");
    for (std::size_t w_val : cfg.benchmark.w) {
      if (w_val < 1 || w_val >= cfg.n) fail("benchmark w must satisfy 1 <= w < n");
    }
  }
  if (cfg.kind == ExperimentKind::kBenchmark && cfg.benchmark.w.empty()) fail("benchmark needs 'benchmark.w'");
  if (cfg.kind == ExperimentKind::kAuditBic && cfg.replications < 1000) {
    fail("audit-bic needs at least 1000 replications");
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

ResolvedParams resolve_params(const ExperimentConfig& cfg) {
  const auto n = static_cast<double>(cfg.n);
  if (cfg.c) {
    if (!(*cfg.c > 0 && *cfg.c <= 1)) fail("'c' must lie in (0, 1]");
    if (!(*cfg.epsilon > 0)) fail("'epsilon' must be positive");
    return {*cfg.c, *cfg.epsilon};
  }
  if (cfg.k) {
    if (!(*cfg.k > 0)) fail("'k' must be positive");
    const auto p = params_for_accuracy(*cfg.k, n);
    return {p.c, p.epsilon};
  }
  if (cfg.budget) {
    if (!(cfg.budget->total > 0)) fail("budget total must be positive");
    double alpha_max = -std::numeric_limits<double>::infinity();
    if (cfg.budget->alpha_max) {
      alpha_max = *cfg.budget->alpha_max;
    } else {
      for (const auto& d : cfg.distributions) {
        const double top = std::visit(
            [](const auto& x) -> double {
              using T = std::decay_t<decltype(x)>;
              if constexpr (std::is_same_v<T, ContinuousDist>) return x.support_hi();
              else if constexpr (std::is_same_v<T, DiscreteDist>) return x.atoms().back();
              else return x.bracket_hi();
            },
            d);
        alpha_max = std::max(alpha_max, top);
      }
      if (!std::isfinite(alpha_max)) fail("budget needs 'alpha_max' when a support is unbounded");
    }
    if (!(alpha_max > 0)) fail("budget alpha_max must be positive");
    const auto p = params_for_budget(cfg.budget->total, n, alpha_max);
    return {p.c, p.epsilon};
  }
  fail("no privacy parameters given");
}

}  // namespace dpproc::cli
