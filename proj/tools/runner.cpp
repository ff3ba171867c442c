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

#include "runner.hpp"

#include <fmt/core.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include "dpproc/dpproc.hpp"
#include "serialize.hpp"

namespace dpproc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double x) { return fmt::format("{}", x); }

void write_atomically(const fs::path& dir, const std::string& name, const std::string& content) {
  const fs::path tmp = dir / ("." + name + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, dir / name);
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Accumulates results.csv; every row starts with the seed and config hash.
class Csv {
 public:
  Csv(std::uint64_t seed, std::string hash, std::vector<std::string> columns)
      : seed_(seed), hash_(std::move(hash)), width_(columns.size()) {
    out_ << "seed,config_hash";
    for (const auto& c : columns) out_ << ',' << c;
    out_ << '\n';
  }

  template <typename... Cells>
  void row(const Cells&... cells) {
    static_assert(sizeof...(Cells) > 0);
    if (sizeof...(Cells) != width_) throw std::logic_error("csv row width mismatch");
    out_ << seed_ << ',' << hash_;
    ((out_ << ',' << cell(cells)), ...);
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }

 private:
  static std::string cell(double x) { return format_double(x); }
  static std::string cell(bool b) { return b ? "true" : "false"; }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  template <typename T>
    requires std::is_integral_v<T>
  static std::string cell(T v) {
    return std::to_string(v);
  }

  std::uint64_t seed_;
  std::string hash_;
  std::size_t width_;
  std::ostringstream out_;
};

json check(const std::string& name, const char* status, json detail = json::object()) {
  detail["name"] = name;
  detail["status"] = status;
  return detail;
}

const char* pass_fail(bool ok) { return ok ? "pass" : "fail"; }

int exit_code_for(const json& checks) {
  bool inconclusive = false;
  for (const auto& c : checks) {
    const std::string s = c.at("status");
    if (s == "fail") return kExitFail;
    if (s == "inconclusive") inconclusive = true;
  }
  return inconclusive ? kExitInconclusive : kExitOk;
}

struct Context {
  const ExperimentConfig& cfg;
  std::uint64_t seed;
  bool noise_off;
  std::optional<ResolvedParams> params;
  std::optional<Contract> contract;
  RngStream root;
};

MechanismParams mechanism_params(const Context& ctx) {
  return {ctx.params->epsilon, ctx.params->c, ctx.cfg.target_type, ctx.noise_off};
}

// Fraction of runs with |s_hat - n1| >= bound must stay below 1/3 up to three
// binomial standard errors.
double accuracy_allowance(std::size_t replications) {
  return 1.0 / 3.0 + 3.0 * std::sqrt((2.0 / 9.0) / static_cast<double>(replications));
}

struct Batch {
  RunningStats raw;
  RunningStats estimate;
  std::size_t exceed = 0;
};

Batch run_batch(const Context& ctx, const Contract& contract, const MechanismParams& params, const RngStream& base,
                double bound, Csv* csv, json* first_outcome) {
  Batch b;
  const double n1 = static_cast<double>(ctx.cfg.count_of(ctx.cfg.target_type));
  for (std::size_t r = 0; r < ctx.cfg.replications; ++r) {
    const RngStream rep = base.split(r);
    RngStream pop_rng = rep.derive("population");
    const Population pop = draw_population(ctx.cfg.database, ctx.cfg.distributions, pop_rng);
    RngStream mech_rng = rep.derive("mechanism");
    const MechanismOutcome out = run_mechanism(pop, contract, params, mech_rng);
    b.raw.add(out.raw_estimate);
    b.estimate.add(out.estimate);
    if (std::abs(out.estimate - n1) >= bound) ++b.exceed;
    if (csv) csv->row(r, out.estimate, out.raw_estimate, out.m, out.accepted_count(), out.total_payment());
    if (first_outcome && r == 0) *first_outcome = out;
  }
  return b;
}

json run_run(Context& ctx, std::vector<std::pair<std::string, std::string>>& files) {
  const auto& cfg = ctx.cfg;
  const MechanismParams params = mechanism_params(ctx);
  const std::size_t n1 = cfg.count_of(cfg.target_type);
  const double bound = accuracy_bound(static_cast<double>(n1), params.c, params.epsilon);
  Csv csv(ctx.seed, cfg.config_hash, {"replication", "s_hat", "raw_s", "m", "accepted", "total_payment"});
  json outcome;
  const Batch b = run_batch(ctx, *ctx.contract, params, ctx.root.derive("run"), bound, &csv, &outcome);
  files.emplace_back("results.csv", csv.str());
  files.emplace_back("outcome.json", outcome.dump(2) + "\n");

  const auto reps = static_cast<double>(cfg.replications);
  const double frac = static_cast<double>(b.exceed) / reps;
  json checks = json::array();
  if (cfg.replications >= 100) {
    checks.push_back(check("accuracy", pass_fail(frac <= accuracy_allowance(cfg.replications)),
                           {{"fraction_exceeding", frac}, {"allowed", accuracy_allowance(cfg.replications)}}));
    const double sigma = std::sqrt(raw_estimate_variance(static_cast<double>(n1), params.c, params.epsilon));
    const double tol = 3.0 * sigma / std::sqrt(reps);
    checks.push_back(check("unbiased_raw_estimate", pass_fail(std::abs(b.raw.mean() - static_cast<double>(n1)) <= tol),
                           {{"mean_raw_s", b.raw.mean()}, {"tolerance", tol}}));
  }
  return {{"n1", n1},
          {"accuracy_bound", bound},
          {"first_s_hat", outcome.at("estimate")},
          {"mean_s_hat", b.estimate.mean()},
          {"mean_raw_s", b.raw.mean()},
          {"fraction_exceeding_bound", frac},
          {"checks", checks}};
}

json run_accuracy_sweep(Context& ctx, std::vector<std::pair<std::string, std::string>>& files) {
  const auto& cfg = ctx.cfg;
  const auto n = static_cast<double>(cfg.n);
  const std::size_t n1 = cfg.count_of(cfg.target_type);
  struct Setting {
    std::optional<double> k;
    double c;
    double epsilon;
  };
  std::vector<Setting> settings{{cfg.k, ctx.params->c, ctx.params->epsilon}};
  for (double k : cfg.sweep_k) {
    if (!(k > 0)) throw ConfigError("sweep_k values must be positive");
    const auto p = params_for_accuracy(k, n);
    settings.push_back({k, p.c, p.epsilon});
  }
  Csv csv(ctx.seed, cfg.config_hash,
          {"k", "n", "n1", "c", "epsilon", "accuracy_bound", "replications", "fraction_exceeding", "mean_raw_s", "pass"});
  json checks = json::array();
  const RngStream base = ctx.root.derive("sweep");
  for (std::size_t s = 0; s < settings.size(); ++s) {
    const Setting& st = settings[s];
    const Contract contract = build_contract(cfg.distributions, st.c, st.epsilon);
    const MechanismParams params{st.epsilon, st.c, cfg.target_type, ctx.noise_off};
    const double bound = accuracy_bound(static_cast<double>(n1), st.c, st.epsilon);
    const double threshold = st.k.value_or(bound);
    const Batch b = run_batch(ctx, contract, params, base.split(s), threshold, nullptr, nullptr);
    const double frac = static_cast<double>(b.exceed) / static_cast<double>(cfg.replications);
    const bool ok = frac <= accuracy_allowance(cfg.replications) && bound <= threshold * (1.0 + 1e-12);
    csv.row(st.k.value_or(std::nan("")), cfg.n, n1, st.c, st.epsilon, bound, cfg.replications, frac, b.raw.mean(), ok);
    checks.push_back(check("accuracy[" + std::to_string(s) + "]", pass_fail(ok),
                           {{"k", st.k ? json(*st.k) : json(nullptr)}, {"fraction_exceeding", frac}}));
  }
  files.emplace_back("results.csv", csv.str());
  return {{"n1", n1}, {"settings", settings.size()}, {"checks", checks}};
}

json run_audit_dp(Context& ctx, std::vector<std::pair<std::string, std::string>>& files) {
  const auto& cfg = ctx.cfg;
  const AdjacentPair pair = AdjacentPair::flip(cfg.database, cfg.dp.flip_index, cfg.dp.flip_to);
  const MechanismParams params = mechanism_params(ctx);
  DpAuditOptions opt;
  opt.samples = cfg.dp.samples;
  opt.histogram.slack = cfg.dp.slack;
  opt.epsilon_target = cfg.dp.epsilon_target;
  const RngStream rng = ctx.root.derive("audit-dp");
  const RatioTestReport rep = cfg.dp.target == "estimate"
                                  ? audit_estimate_dp(pair, cfg.distributions, params, opt, rng)
                                  : audit_payment_dp(pair, cfg.distributions, params, cfg.dp.player, opt, rng);
  Csv csv(ctx.seed, cfg.config_hash,
          {"target", "epsilon_target", "slack", "bins", "qualifying_bins", "max_log_ratio_ab", "max_log_ratio_ba",
           "max_log_ratio", "threshold", "direction", "overflow_a", "overflow_b", "verdict"});
  csv.row(cfg.dp.target, rep.epsilon_target, rep.slack, rep.bins, rep.qualifying_bins, rep.max_log_ratio_ab,
          rep.max_log_ratio_ba, rep.max_log_ratio, rep.threshold(), rep.direction, rep.overflow_a, rep.overflow_b,
          std::string(verdict_name(rep.verdict)));
  files.emplace_back("results.csv", csv.str());
  json checks = json::array({check("mutual_boundedness", verdict_name(rep.verdict))});
  return {{"target", cfg.dp.target}, {"report", rep}, {"checks", checks}};
}

json run_audit_bic(Context& ctx, std::vector<std::pair<std::string, std::string>>& files) {
  const auto& cfg = ctx.cfg;
  BicAuditOptions opt;
  opt.cost_grid = cfg.bic.cost_grid;
  opt.target_type = cfg.target_type;
  const auto rows = audit_bic(*ctx.contract, cfg.distributions, cfg.database, cfg.bic.player, cfg.replications,
                              ctx.root.derive("bic"), opt);
  EiirAuditOptions eiir_opt;
  eiir_opt.target_type = cfg.target_type;
  const auto eiir = audit_eiir(*ctx.contract, cfg.distributions, cfg.database, cfg.replications,
                               ctx.root.derive("eiir"), eiir_opt);
  Csv csv(ctx.seed, cfg.config_hash, {"deviation", "v_i", "utility_gap", "ci_halfwidth", "replications", "profitable"});
  std::size_t profitable = 0;
  for (const auto& r : rows) {
    csv.row(r.deviation, r.v_i, r.utility_gap, r.ci_halfwidth, r.replications, r.profitable_deviation());
    profitable += r.profitable_deviation();
  }
  files.emplace_back("results.csv", csv.str());
  json checks = json::array({check("bic", pass_fail(profitable == 0), {{"profitable_deviations", profitable}})});
  json types = json::array();
  for (const auto& t : eiir) {
    types.push_back({{"type", t.type},
                     {"mean_utility", t.mean_utility},
                     {"ci_halfwidth", t.ci_halfwidth},
                     {"accepted_samples", t.accepted_samples}});
    const char* status = t.accepted_samples < 2 ? "inconclusive" : pass_fail(t.individually_rational());
    checks.push_back(check("eiir[type " + std::to_string(t.type) + "]", status));
  }
  return {{"player", cfg.bic.player}, {"rows", rows}, {"eiir", types}, {"checks", checks}};
}

json run_benchmark(Context& ctx, std::vector<std::pair<std::string, std::string>>& files) {
  const auto& cfg = ctx.cfg;
  const CostDistribution& dist = cfg.distributions.at(static_cast<std::size_t>(cfg.target_type - 1));
  Csv csv(ctx.seed, cfg.config_hash,
          {"benchmark", "dist_id", "n", "w", "mech_payment", "benchmark_payment", "benchmark_ci", "ratio", "bound", "r",
           "applicable", "truncated", "pass"});
  json checks = json::array();
  const RngStream base = ctx.root.derive("benchmark");
  for (const auto& kind_name : cfg.benchmark.kinds) {
    const BenchmarkKind kind = kind_name == "optimal" ? BenchmarkKind::kOptimalBic : BenchmarkKind::kEnvyFree;
    for (std::size_t w : cfg.benchmark.w) {
      const auto rep = approx_ratio_experiment(dist, cfg.n, w, std::max<std::size_t>(cfg.replications, 2),
                                               base.derive(kind_name).split(w), kind, cfg.benchmark.slack);
      csv.row(kind_name, dist_name(dist), cfg.n, w, rep.mechanism_payment, rep.benchmark.mean,
              rep.benchmark.ci_halfwidth, rep.ratio, rep.bound, rep.r, rep.applicable, rep.truncated, rep.pass);
      const char* status = rep.applicable ? pass_fail(rep.pass) : "not_applicable";
      checks.push_back(check(kind_name + "[w=" + std::to_string(w) + "]", status,
                             {{"ratio", rep.ratio}, {"bound", rep.bound}}));
    }
  }
  files.emplace_back("results.csv", csv.str());
  return {{"dist_id", dist_name(dist)}, {"checks", checks}};
}

}  // namespace

RunResult run_experiment(ExperimentConfig cfg, const RunOptions& options) {
  const std::string started = utc_now();
  const std::uint64_t seed = options.seed.value_or(cfg.seed);
  const bool noise_off = options.noise_off || cfg.noise_off;
  const std::optional<fs::path> out_dir = options.out ? options.out : cfg.output ? std::optional<fs::path>(*cfg.output)
                                                                                 : std::nullopt;
  if (!out_dir) throw ConfigError("no output directory: pass --out or set 'output'");

  Context ctx{cfg, seed, noise_off, std::nullopt, std::nullopt, RngStream(seed)};
  json resolved = nullptr;
  if (cfg.c || cfg.k || cfg.budget) {
    ctx.params = resolve_params(cfg);
    try {
      ctx.contract = build_contract(cfg.distributions, ctx.params->c, ctx.params->epsilon);
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("cannot build the contract: ") + e.what());
    }
    resolved = *ctx.contract;
  }

  std::vector<std::pair<std::string, std::string>> files;
  json body;
  switch (cfg.kind) {
    case ExperimentKind::kRun: body = run_run(ctx, files); break;
    case ExperimentKind::kAccuracySweep: body = run_accuracy_sweep(ctx, files); break;
    case ExperimentKind::kAuditDp: body = run_audit_dp(ctx, files); break;
    case ExperimentKind::kAuditBic: body = run_audit_bic(ctx, files); break;
    case ExperimentKind::kBenchmark: body = run_benchmark(ctx, files); break;
  }

  RunResult result;
  result.exit_code = exit_code_for(body.at("checks"));
  json summary = {{"experiment", experiment_name(cfg.kind)},
                  {"seed", seed},
                  {"config_hash", cfg.config_hash},
                  {"noise_off", noise_off},
                  {"exit_code", result.exit_code}};
  summary.update(body);
  files.emplace_back("summary.json", summary.dump(2) + "\n");

  json listing = json::array({"manifest.json"});
  for (const auto& f : files) listing.push_back(f.first);
  const json manifest = {{"experiment", experiment_name(cfg.kind)},
                         {"config", cfg.echo},
                         {"config_hash", cfg.config_hash},
                         {"seed", seed},
                         {"noise_off", noise_off},
                         {"resolved", resolved},
                         {"started_at", started},
                         {"finished_at", utc_now()},
                         {"files", listing}};

  fs::create_directories(*out_dir);
  for (const auto& [name, content] : files) write_atomically(*out_dir, name, content);
  write_atomically(*out_dir, "manifest.json", manifest.dump(2) + "\n");
  result.summary = std::move(summary);
  for (const auto& item : listing) result.files.push_back(item.get<std::string>());
  return result;
}

}  // namespace dpproc::cli
