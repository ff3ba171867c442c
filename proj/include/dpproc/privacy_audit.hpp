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

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <optional>
#include <string>
#include <vector>

#include "dpproc/agents.hpp"
#include "dpproc/contracts.hpp"
#include "dpproc/distributions.hpp"
#include "dpproc/mechanism.hpp"

namespace dpproc {

/// Two databases that differ in exactly one entry.
class AdjacentPair {
 public:
  AdjacentPair(std::vector<int> database_a, std::vector<int> database_b, std::size_t flipped_index)
      : a_(std::move(database_a)), b_(std::move(database_b)), flipped_(flipped_index) {
    detail::require(a_.size() == b_.size() && !a_.empty(), "adjacent databases must have the same size");
    detail::require(flipped_ < a_.size(), "flipped index out of range");
    for (std::size_t i = 0; i < a_.size(); ++i) {
      if (i != flipped_) detail::require(a_[i] == b_[i], "adjacent databases differ outside the flipped index");
    }
  }

  static AdjacentPair flip(std::vector<int> database, std::size_t index, int new_type) {
    detail::require(index < database.size(), "flipped index out of range");
    std::vector<int> other = database;
    other[index] = new_type;
    return AdjacentPair(std::move(database), std::move(other), index);
  }

  const std::vector<int>& database_a() const { return a_; }
  const std::vector<int>& database_b() const { return b_; }
  std::size_t flipped_index() const { return flipped_; }
  // A "pair" with identical databases; useful as a null control.
  bool degenerate() const { return a_[flipped_] == b_[flipped_]; }

 private:
  std::vector<int> a_;
  std::vector<int> b_;
  std::size_t flipped_;
};

enum class Verdict { kPass, kFail, kInconclusive };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "?";
}

struct AtomBin {
  double value;
  double prob_a;
  double prob_b;
};

struct RatioTestReport {
  double epsilon_target = 0.0;
  double slack = 1.0;
  std::size_t bins = 0;  // continuous bins + atom bins
  std::size_t qualifying_bins = 0;
  std::size_t min_bin_count = 0;
  double max_log_ratio = 0.0;     // max of the two directions
  double max_log_ratio_ab = 0.0;  // max ln(p_a / p_b)
  double max_log_ratio_ba = 0.0;  // max ln(p_b / p_a)
  std::string direction = "a/b";
  std::vector<AtomBin> atoms;
  double overflow_a = 0.0;  // mass outside the central range, reported only
  double overflow_b = 0.0;
  Verdict verdict = Verdict::kInconclusive;

  double threshold() const { return epsilon_target + std::log(slack); }
  bool pass() const { return verdict == Verdict::kPass; }
};

struct HistogramOptions {
  std::size_t bins = 40;
  std::size_t min_bin_count = 500;
  double slack = 1.1;
  // Mass of pooled continuous samples covered by the binned range; the rest
  // goes to two overflow bins excluded from the test.
  double central_mass = 0.999;
  std::vector<double> atoms;  // always get their own bins
  std::size_t min_qualifying_bins = 5;
};

/// Two-sided histogram ratio test of eps-mutual boundedness.
///
/// Point masses (listed atoms, plus any value repeated at least min_bin_count
/// times in the pooled sample) get dedicated bins. The remaining samples are
/// binned on pooled equal-mass edges over the central range. A bin qualifies
/// when both sides have at least min_bin_count samples in it. The test passes
/// when the largest |ln(p_a / p_b)| over qualifying bins is at most
/// eps + ln(slack); it is inconclusive when fewer than min_qualifying_bins
/// qualify and those bins do not carry the whole central mass.
inline RatioTestReport histogram_ratio_test(std::span<const double> a, std::span<const double> b,
                                            double epsilon, const HistogramOptions& opt) {
  detail::require(!a.empty() && !b.empty(), "ratio test needs samples on both sides");
  detail::require(epsilon >= 0, "epsilon target must be nonnegative");
  detail::require(opt.slack >= 1.0, "slack must be at least 1");
  detail::require(opt.bins >= 1, "need at least one bin");
  detail::require(opt.central_mass > 0 && opt.central_mass <= 1, "central mass must lie in (0, 1]");

  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());

  std::vector<double> atoms = opt.atoms;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
    if (j - i >= opt.min_bin_count) atoms.push_back(pooled[i]);
    i = j;
  }
  std::sort(atoms.begin(), atoms.end());
  atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());
  auto is_atom = [&](double x) { return std::binary_search(atoms.begin(), atoms.end(), x); };

  std::vector<double> cont;
  cont.reserve(pooled.size());
  for (double x : pooled) {
    if (!is_atom(x)) cont.push_back(x);
  }

  std::vector<double> edges;
  if (!cont.empty()) {
    const double tail = 0.5 * (1.0 - opt.central_mass);
    auto at = [&](double q) {
      const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(cont.size() - 1) + 0.5));
      return cont[std::min(idx, cont.size() - 1)];
    };
    for (std::size_t k = 0; k <= opt.bins; ++k) {
      edges.push_back(at(tail + opt.central_mass * static_cast<double>(k) / static_cast<double>(opt.bins)));
    }
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }
  const std::size_t cont_bins = edges.size() >= 2 ? edges.size() - 1 : 0;

  struct Counts {
    std::vector<std::size_t> atom, bin;
    std::size_t overflow = 0;
  };
  auto tally = [&](std::span<const double> xs) {
    Counts c{std::vector<std::size_t>(atoms.size(), 0), std::vector<std::size_t>(cont_bins, 0), 0};
    for (double x : xs) {
      auto ait = std::lower_bound(atoms.begin(), atoms.end(), x);
      if (ait != atoms.end() && *ait == x) {
        ++c.atom[static_cast<std::size_t>(ait - atoms.begin())];
        continue;
      }
      if (cont_bins == 0 || x < edges.front() || x > edges.back()) {
        ++c.overflow;
        continue;
      }
      auto it = std::upper_bound(edges.begin(), edges.end(), x);
      auto k = static_cast<std::size_t>(it - edges.begin());
      k = std::min(k == 0 ? 0 : k - 1, cont_bins - 1);
      ++c.bin[k];
    }
    return c;
  };
  const Counts ca = tally(a);
  const Counts cb = tally(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());

  RatioTestReport rep;
  rep.epsilon_target = epsilon;
  rep.slack = opt.slack;
  rep.bins = cont_bins + atoms.size();
  rep.min_bin_count = opt.min_bin_count;
  rep.overflow_a = static_cast<double>(ca.overflow) / na;
  rep.overflow_b = static_cast<double>(cb.overflow) / nb;
  double qualifying_mass_a = 0.0, qualifying_mass_b = 0.0;
  auto consider = [&](std::size_t ka, std::size_t kb) {
    if (ka < opt.min_bin_count || kb < opt.min_bin_count) return;
    ++rep.qualifying_bins;
    const double pa = static_cast<double>(ka) / na;
    const double pb = static_cast<double>(kb) / nb;
    qualifying_mass_a += pa;
    qualifying_mass_b += pb;
    const double lr = std::log(pa / pb);
    rep.max_log_ratio_ab = std::max(rep.max_log_ratio_ab, lr);
    rep.max_log_ratio_ba = std::max(rep.max_log_ratio_ba, -lr);
  };
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    rep.atoms.push_back({atoms[k], static_cast<double>(ca.atom[k]) / na, static_cast<double>(cb.atom[k]) / nb});
    consider(ca.atom[k], cb.atom[k]);
  }
  for (std::size_t k = 0; k < cont_bins; ++k) consider(ca.bin[k], cb.bin[k]);

  rep.max_log_ratio = std::max(rep.max_log_ratio_ab, rep.max_log_ratio_ba);
  rep.direction = rep.max_log_ratio_ab >= rep.max_log_ratio_ba ? "a/b" : "b/a";
  const double covered = std::min(qualifying_mass_a + rep.overflow_a, qualifying_mass_b + rep.overflow_b);
  if (rep.qualifying_bins < opt.min_qualifying_bins && covered < 1.0 - 1e-12) {
    rep.verdict = Verdict::kInconclusive;
  } else {
    rep.verdict = rep.max_log_ratio <= rep.threshold() ? Verdict::kPass : Verdict::kFail;
  }
  return rep;
}

struct DpAuditOptions {
  std::size_t samples = 200000;  // mechanism runs per side
  HistogramOptions histogram;
  std::optional<double> epsilon_target;  // defaults to the mechanism's epsilon
};

namespace detail {

// Runs the mechanism `samples` times per side with costs redrawn every run
// from independent streams, and collects `statistic(outcome)`.
template <typename Statistic>
std::pair<std::vector<double>, std::vector<double>> sample_adjacent(
    const AdjacentPair& pair, std::span<const CostDistribution> dists, const Contract& contract,
    const MechanismParams& params, std::size_t samples, const RngStream& rng, Statistic statistic) {
  detail::require(samples >= 1, "need at least one sample per side");
  auto side = [&](const std::vector<int>& db, const char* name) {
    const RngStream base = rng.derive(name);
    std::vector<double> xs;
    xs.reserve(samples);
    for (std::size_t s = 0; s < samples; ++s) {
      const RngStream rep = base.split(s);
      RngStream pop_rng = rep.derive("population");
      const Population pop = draw_population(db, dists, pop_rng);
      RngStream mech_rng = rep.derive("mechanism");
      xs.push_back(statistic(run_mechanism(pop, contract, params, mech_rng)));
    }
    return xs;
  };
  return {side(pair.database_a(), "side/a"), side(pair.database_b(), "side/b")};
}

}  // namespace detail

/// eps-mutual-boundedness audit of the released estimate across an adjacent
/// pair. The truncation points 0 and n are binned as atoms.
inline RatioTestReport audit_estimate_dp(const AdjacentPair& pair, std::span<const CostDistribution> dists,
                                         const MechanismParams& params, DpAuditOptions options,
                                         const RngStream& rng) {
  const Contract contract = build_contract(dists, params.c, params.epsilon);
  const auto [a, b] = detail::sample_adjacent(pair, dists, contract, params, options.samples, rng,
                                              [](const MechanismOutcome& o) { return o.estimate; });
  const double n = static_cast<double>(pair.database_a().size());
  options.histogram.atoms.push_back(0.0);
  options.histogram.atoms.push_back(n);
  return histogram_ratio_test(a, b, options.epsilon_target.value_or(params.epsilon), options.histogram);
}

/// Same audit for one player's payment, with the zero payment as an atom.
inline RatioTestReport audit_payment_dp(const AdjacentPair& pair, std::span<const CostDistribution> dists,
                                        const MechanismParams& params, std::size_t player_index,
                                        DpAuditOptions options, const RngStream& rng) {
  detail::require(player_index < pair.database_a().size(), "player index out of range");
  const Contract contract = build_contract(dists, params.c, params.epsilon);
  const auto [a, b] = detail::sample_adjacent(
      pair, dists, contract, params, options.samples, rng,
      [player_index](const MechanismOutcome& o) { return o.payments[player_index]; });
  options.histogram.atoms.push_back(0.0);
  return histogram_ratio_test(a, b, options.epsilon_target.value_or(params.epsilon), options.histogram);
}

/// Draws x1 + Lap(b) and x2 + Lap(b), applies `f` to both and runs the ratio
/// test at `epsilon`. With |x1 - x2| <= b * epsilon the base pair is
/// eps-mutually bounded, so any `f` must pass.
inline RatioTestReport postprocessing_check(const std::function<double(double)>& f, double x1, double x2,
                                            double scale_b, double epsilon, std::size_t samples,
                                            const HistogramOptions& options, const RngStream& rng) {
  detail::require(samples >= 1, "need at least one sample per side");
  auto side = [&](double center, const char* name) {
    RngStream s = rng.derive(name);
    std::vector<double> xs(samples);
    for (auto& x : xs) x = f(center + sample_laplace({scale_b}, s));
    return xs;
  };
  const auto a = side(x1, "side/a");
  const auto b = side(x2, "side/b");
  return histogram_ratio_test(a, b, epsilon, options);
}

}  // namespace dpproc
