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

// Acceptance checks: one [PASS]/[FAIL] line per criterion. The process exits
// nonzero when any criterion fails.

#include <fmt/core.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "dpproc/dpproc.hpp"
#include "runner.hpp"

namespace {

using namespace dpproc;
namespace fs = std::filesystem;

// Pinned tolerances.
constexpr double kAccuracyAllowance = 0.035;     // on top of the 1/3 Chebyshev level
constexpr double kAcceptanceTolerance = 0.005;   // |rate - c|
constexpr double kDpSlack = 1.1;
constexpr double kZeroAtomTolerance = 0.005;     // |Pr[p = 0] - (1 - c)|
constexpr double kFormulaTolerance = 1e-12;
constexpr double kBudgetTolerance = 1e-6;
// Relative; 1 - c cancels when k^2 << n, which amplifies the rounding of c.
constexpr double kGridTolerance = 1e-9;
constexpr double kRatioSlack = 0.02;
constexpr double kGConstTolerance = 1e-6;
constexpr double kEnvelopeTolerance = 1e-9;
constexpr double kCaseTolerance = 1e-6;

struct Outcome {
  bool pass;
  std::string detail;
};

const std::vector<CostDistribution> kTwoUniform{ContinuousDist::uniform(0, 1), ContinuousDist::uniform(0, 2)};

ContinuousDist kinked() { return ContinuousDist::piecewise_density({0, 0.5, 1}, {0.2, 1.8}); }

struct AccuracyRuns {
  double fraction_exceeding;
  double mean_raw;
  double bound;
};

// n = 1000 with 400 target-type players, c = 0.5, eps = 0.5, 2000 truthful runs.
const AccuracyRuns& accuracy_runs() {
  static const AccuracyRuns runs = [] {
    const auto db = database_from_counts(std::vector<std::size_t>{400, 600});
    const Contract k = build_contract(kTwoUniform, 0.5, 0.5);
    const double bound = accuracy_bound(400, 0.5, 0.5);
    const RngStream root = RngStream(20240601).derive("accuracy");
    RunningStats raw;
    std::size_t exceed = 0;
    for (std::size_t r = 0; r < 2000; ++r) {
      RngStream pop_rng = root.split(r).derive("population");
      RngStream mech_rng = root.split(r).derive("mechanism");
      const auto out = run_mechanism(draw_population(db, kTwoUniform, pop_rng), k, {0.5, 0.5}, mech_rng);
      raw.add(out.raw_estimate);
      exceed += std::abs(out.estimate - 400.0) >= bound;
    }
    return AccuracyRuns{static_cast<double>(exceed) / 2000.0, raw.mean(), bound};
  }();
  return runs;
}

Outcome accuracy_bound_check() {
  const auto& r = accuracy_runs();
  const bool bound_ok = std::abs(r.bound - 36.0) <= kFormulaTolerance * 36.0;
  const double allowed = 1.0 / 3.0 + kAccuracyAllowance;
  return {bound_ok && r.fraction_exceeding <= allowed,
          fmt::format("bound={} fraction(|s_hat-400|>=36)={} allowed={:.4f}", r.bound, r.fraction_exceeding,
                      allowed)};
}

Outcome unbiasedness() {
  const auto& r = accuracy_runs();
  const double sigma = std::sqrt(raw_estimate_variance(400, 0.5, 0.5));
  const double tol = 3.0 * sigma / std::sqrt(2000.0);
  return {std::abs(r.mean_raw - 400.0) <= tol, fmt::format("mean(raw_s)={:.4f} tolerance={:.4f}", r.mean_raw, tol)};
}

Outcome acceptance_independence() {
  const std::vector<CostDistribution> d{ContinuousDist::uniform(0, 1), ContinuousDist::exponential(2.0),
                                        DiscreteDist({1, 3}, {0.4, 0.6})};
  const double c = 0.5;
  const Contract k = build_contract(d, c, 1.0);
  const auto rates = audit_acceptance(k, d, 100000, RngStream(31));
  bool ok = true;
  std::string detail;
  for (const auto& r : rates) {
    ok &= std::abs(r.rate - c) <= kAcceptanceTolerance;
    detail += fmt::format("type{}={:.4f} ", r.type, r.rate);
  }
  return {ok, detail + fmt::format("(c={}, tol={})", c, kAcceptanceTolerance)};
}

Outcome estimate_dp() {
  const auto pair = AdjacentPair::flip(database_from_counts(std::vector<std::size_t>{100, 100}), 0, 2);
  const MechanismParams params{0.5, 0.5};
  DpAuditOptions opt;
  opt.samples = 200000;
  opt.histogram.slack = kDpSlack;
  const RngStream rng = RngStream(41).derive("estimate-dp");
  const auto at_eps = audit_estimate_dp(pair, kTwoUniform, params, opt, rng);
  opt.epsilon_target = params.epsilon / 10.0;
  const auto at_tenth = audit_estimate_dp(pair, kTwoUniform, params, opt, rng);
  return {at_eps.verdict == Verdict::kPass && at_tenth.verdict == Verdict::kFail,
          fmt::format("eps=0.5: max|ln ratio|={:.4f} (a/b {:.4f}, b/a {:.4f}) threshold={:.4f} {} over {} bins; "
                      "eps/10: max={:.4f} threshold={:.4f} {}",
                      at_eps.max_log_ratio, at_eps.max_log_ratio_ab, at_eps.max_log_ratio_ba, at_eps.threshold(),
                      verdict_name(at_eps.verdict), at_eps.qualifying_bins, at_tenth.max_log_ratio,
                      at_tenth.threshold(), verdict_name(at_tenth.verdict))};
}

Outcome payment_dp() {
  const double c = 0.5, eps = 1.0;
  const auto db = database_from_counts(std::vector<std::size_t>{25, 25});
  const Contract k = build_contract(kTwoUniform, c, eps);
  const auto pair = AdjacentPair::flip(db, 0, 2);
  DpAuditOptions opt;
  opt.samples = 200000;
  opt.histogram.slack = kDpSlack;
  const auto rep = audit_payment_dp(pair, kTwoUniform, {eps, c}, 0, opt, RngStream(51));
  double pa = -1, pb = -1;
  for (const auto& a : rep.atoms) {
    if (a.value == 0.0) {
      pa = a.prob_a;
      pb = a.prob_b;
    }
  }
  const bool atom_ok = std::abs(pa - (1 - c)) <= kZeroAtomTolerance && std::abs(pb - (1 - c)) <= kZeroAtomTolerance;
  return {std::abs(k.gamma() - 0.5) <= kFormulaTolerance && rep.verdict == Verdict::kPass && atom_ok,
          fmt::format("gamma={} max|ln ratio|={:.4f} threshold={:.4f} {}; Pr[p=0]={:.4f}/{:.4f}", k.gamma(),
                      rep.max_log_ratio, rep.threshold(), verdict_name(rep.verdict), pa, pb)};
}

Outcome bic_eiir() {
  const std::vector<CostDistribution> d{ContinuousDist::uniform(0, 1), ContinuousDist::uniform(0, 2),
                                        DiscreteDist({1, 3}, {0.4, 0.6})};
  const std::vector<int> db{1, 2, 3, 1, 2, 3, 1, 2, 3, 1};
  const Contract k = build_contract(d, 0.5, 1.0);
  const std::size_t reps = 10000;
  std::size_t rows = 0, profitable = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t player : {std::size_t{0}, std::size_t{2}}) {
    for (const auto& r : audit_bic(k, d, db, player, reps, RngStream(61).split(player))) {
      ++rows;
      profitable += r.profitable_deviation();
      worst = std::min(worst, r.utility_gap + r.ci_halfwidth);
    }
  }
  const auto eiir = audit_eiir(k, d, db, reps, RngStream(62));
  bool ir = true;
  std::string types;
  for (const auto& t : eiir) {
    ir &= t.individually_rational();
    types += fmt::format(" type{}={:.4f}+-{:.4f}", t.type, t.mean_utility, t.ci_halfwidth);
  }
  return {profitable == 0 && rows == 60 && ir,
          fmt::format("{} rows, {} profitable deviations, min(gap+ci)={:.4f}; accepted utility:{}", rows, profitable,
                      worst, types)};
}

Outcome parameter_formulas() {
  const auto p = params_for_accuracy(60, 600);
  const bool acc_ok = std::abs(p.c - 0.5) <= kFormulaTolerance &&
                      std::abs(p.epsilon - 4 * std::sqrt(3.0) / 60) <= kFormulaTolerance;
  const double n = 100, alpha = 1.0, eps = 1.0;
  const double budget = alpha * n * (eps + std::sqrt(eps * eps - 8 / n)) / 2;
  const auto b = params_for_budget(budget, n, alpha);
  const bool budget_ok = std::abs(b.epsilon - eps) <= kBudgetTolerance;
  int grid = 0, below = 0;
  for (double k : {2.0, 10.0, 30.0, 60.0, 150.0}) {
    for (double nn : {50.0, 600.0, 5000.0, 1e6}) {
      const auto q = params_for_accuracy(k, nn);
      ++grid;
      below += accuracy_bound(nn, q.c, q.epsilon) <= k * (1 + kGridTolerance);
    }
  }
  return {acc_ok && budget_ok && below == grid,
          fmt::format("accuracy(60,600)=({}, {}); budget round trip eps={:.9f}; bound<=k on {}/{} grid points", p.c,
                      p.epsilon, b.epsilon, below, grid)};
}

Outcome envy_free_ratio() {
  bool ok = true;
  std::string detail;
  const std::vector<std::pair<std::string, CostDistribution>> dists{{"U[0,1]", ContinuousDist::uniform(0, 1)},
                                                                    {"Exp(1)", ContinuousDist::exponential(1.0)}};
  for (const auto& [name, d] : dists) {
    for (std::size_t w : {10, 50, 90}) {
      const auto rep = approx_ratio_experiment(d, 100, w, 100000, RngStream(81).derive(name).split(w),
                                               BenchmarkKind::kEnvyFree, kRatioSlack);
      ok &= rep.pass;
      detail += fmt::format("{} w={}: {:.3f}; ", name, w, rep.ratio);
    }
  }
  return {ok, detail + fmt::format("bound 2*(1+{})", kRatioSlack)};
}

Outcome anti_regular_optimality() {
  const auto curve = IronedCurve::build(ContinuousDist::uniform(0, 1));
  const auto opt = optimal_bic_benchmark(curve, 5, 2, 100000, RngStream(91));
  const auto ef = envy_free_benchmark(ContinuousDist::uniform(0, 1), 5, 2, 100000, RngStream(92));
  const double ci = std::hypot(opt.ci_halfwidth, ef.ci_halfwidth);
  const auto id = virtual_cost_payment_identity_check(curve, 5, 2, 100000, RngStream(93));
  return {curve.intervals().empty() && std::abs(opt.mean - ef.mean) <= ci && id.agrees,
          fmt::format("optimal={:.4f} w*E[v_(w+1)]={:.4f} ci={:.4f}; payment={:.4f} virtual cost={:.4f} ci={:.4f}",
                      opt.mean, ef.mean, ci, id.payment.mean, id.virtual_cost.mean, id.combined_ci)};
}

Outcome ironing_invariants() {
  const auto curve = IronedCurve::build(kinked());
  const auto& H = curve.H_values();
  const auto& G = curve.G_values();
  const auto& g = curve.g_values();
  bool below = true, convex = true, flat = true, monotone = true;
  for (std::size_t k = 0; k < H.size(); ++k) below &= G[k] <= H[k] + kEnvelopeTolerance;
  for (std::size_t k = 1; k < g.size(); ++k) convex &= g[k - 1] <= g[k];
  const bool one = curve.intervals().size() == 1;
  const bool contains = one && curve.intervals()[0].q_lo <= 0.1 && 0.1 < curve.intervals()[0].q_hi;
  if (one) {
    const auto& iv = curve.intervals()[0];
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double q = curve.q_grid()[k];
      if (q >= iv.q_lo && q < iv.q_hi) flat &= std::abs(g[k] - iv.slope) <= kGConstTolerance;
    }
  }
  double prev = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 1000; ++k) {
    const double v = curve.ironed_virtual_cost(k / 999.0);
    monotone &= v >= prev;
    prev = v;
  }
  std::string where = one ? fmt::format("q in [{:.5f}, {:.5f}) cost in [{:.5f}, {:.5f})", curve.intervals()[0].q_lo,
                                        curve.intervals()[0].q_hi, curve.intervals()[0].cost_lo,
                                        curve.intervals()[0].cost_hi)
                          : fmt::format("{} intervals", curve.intervals().size());
  return {one && contains && below && convex && flat && monotone,
          fmt::format("{}; G<=H {} slopes nondecreasing {} g flat {} ironed cost monotone {}", where, below, convex,
                      flat, monotone)};
}

Outcome two_r_bound() {
  const auto rep =
      approx_ratio_experiment(kinked(), 100, 50, 100000, RngStream(111), BenchmarkKind::kOptimalBic, kRatioSlack);
  return {rep.applicable && rep.pass,
          fmt::format("r={:.4f} mechanism={:.4f} optimal={:.4f}+-{:.4f} ratio={:.4f} bound 2r*(1+{})={:.4f}", rep.r,
                      rep.mechanism_payment, rep.benchmark.mean, rep.benchmark.ci_halfwidth, rep.ratio, kRatioSlack,
                      rep.bound * (1 + kRatioSlack))};
}

Outcome payment_cases() {
  const auto curve = IronedCurve::build(kinked());
  if (curve.intervals().size() != 1) return {false, "expected one ironed interval"};
  const double a = curve.intervals()[0].cost_lo, b = curve.intervals()[0].cost_hi;
  // Case 1: v_{w+1} = 0.7 outside the interval.
  const auto c1 = myerson_expected_payment(std::vector<double>{0.1, 0.2, 0.7, 0.9}, 2, curve);
  const double e1 = std::max(std::abs(c1.expected_payments[0] - 0.7), std::abs(c1.expected_payments[1] - 0.7));
  // Case 2: v_w = 0.2 < a <= v_{w+1}; two players inside [a, b).
  const auto c2 = myerson_expected_payment(std::vector<double>{0.1, 0.2, 0.4, 0.5, 0.9}, 2, curve);
  const double want2 = a + (b - a) / 3.0;
  const double e2 = std::max(std::abs(c2.expected_payments[0] - want2), std::abs(c2.expected_payments[1] - want2));
  const bool at_least_a = c2.expected_payments[0] >= a && c2.expected_payments[1] >= a;
  // Case 3: l1 = 1 sure winner, l2 = 3 tied in [a, b), w = 2.
  const auto c3 = myerson_expected_payment(std::vector<double>{0.1, 0.4, 0.45, 0.5, 0.9}, 2, curve);
  double e3 = 0.0;
  for (std::size_t i : {1, 2, 3}) e3 = std::max(e3, std::abs(c3.expected_payments[i] - b * (2.0 - 1.0) / 3.0));
  return {e1 <= kCaseTolerance && e2 <= kCaseTolerance && e3 <= kCaseTolerance && at_least_a,
          fmt::format("max errors: case1={:.2e} case2={:.2e} case3={:.2e} (a={:.5f}, b={:.5f})", e1, e2, e3, a, b)};
}

Outcome binomial_median() {
  int checked = 0, held = 0;
  for (long long n = 0; n <= 30; ++n) {
    for (int k = 1; k <= 9; ++k) {
      ++checked;
      held += binomial_median_check(n, k / 10.0);
    }
  }
  return {held == checked, fmt::format("{}/{} (n, p) pairs", held, checked)};
}

Outcome flatten_bijection() {
  int pairs = 0, bijective = 0;
  for (int h = 1; h <= 4; ++h) {
    for (int d = 1; d <= 4; ++d) {
      ++pairs;
      long long size = 1;
      for (int j = 0; j < d; ++j) size *= h;
      std::set<long long> codes;
      std::vector<int> rec(static_cast<std::size_t>(d), 1);
      bool in_range = true;
      for (long long idx = 0; idx < size; ++idx) {
        long long rest = idx;
        for (auto& x : rec) {
          x = static_cast<int>(rest % h) + 1;
          rest /= h;
        }
        const long long code = flatten_multiattr(rec, h);
        in_range &= code >= 1 && code <= size;
        codes.insert(code);
      }
      bijective += in_range && static_cast<long long>(codes.size()) == size;
    }
  }
  return {bijective == pairs, fmt::format("{}/{} (h, d) pairs", bijective, pairs)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const std::string common = R"(seed: 77
database: {counts: [12, 8]}
distributions:
  - {kind: uniform, lo: 0, hi: 1}
  - {kind: discrete, atoms: [1, 3], probs: [0.4, 0.6]}
)";
  const std::vector<std::string> configs{
      "experiment: run\nepsilon: 0.5\nc: 0.5\nreplications: 200\n",
      "experiment: accuracy-sweep\nk: 8\nsweep_k: [12]\nreplications: 200\n",
      "experiment: audit-dp\nepsilon: 0.5\nc: 0.5\naudit: {target: payment, flip: {index: 0, to: 2}, samples: 20000}\n",
      "experiment: audit-bic\nepsilon: 0.5\nc: 0.5\nreplications: 1000\n",
      "experiment: benchmark\nbenchmark: {w: [5, 10], kinds: [envy_free]}\nreplications: 2000\n",
  };
  const fs::path root = fs::temp_directory_path() / "dpproc_acceptance_determinism";
  fs::remove_all(root);
  int identical = 0;
  std::string kinds;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto cfg = cli::parse_config_text(common + configs[i]);
    std::string csv[2];
    for (int run = 0; run < 2; ++run) {
      cli::RunOptions opt;
      opt.out = root / fmt::format("{}_{}", i, run);
      cli::run_experiment(cfg, opt);
      csv[run] = slurp(*opt.out / "results.csv");
    }
    const bool same = !csv[0].empty() && csv[0] == csv[1];
    identical += same;
    kinds += fmt::format("{}={} ", cli::experiment_name(cfg.kind), same ? "identical" : "DIFFERENT");
  }
  fs::remove_all(root);
  return {identical == static_cast<int>(configs.size()), kinds};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"accuracy bound", accuracy_bound_check},
      {"unbiased raw estimate", unbiasedness},
      {"type-independent acceptance", acceptance_independence},
      {"estimate privacy audit", estimate_dp},
      {"payment privacy audit", payment_dp},
      {"incentive compatibility and rationality", bic_eiir},
      {"parameter formulas", parameter_formulas},
      {"envy-free 2-approximation", envy_free_ratio},
      {"anti-regular optimality", anti_regular_optimality},
      {"ironing invariants", ironing_invariants},
      {"2r approximation bound", two_r_bound},
      {"three payment cases", payment_cases},
      {"binomial median", binomial_median},
      {"flatten bijection", flatten_bijection},
      {"byte-identical reruns", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.pass;
    fmt::print("[{}] {:02d} {}: {} ({:.1f}s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail, secs);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
