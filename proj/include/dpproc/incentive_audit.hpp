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

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpproc/agents.hpp"
#include "dpproc/contracts.hpp"
#include "dpproc/mechanism.hpp"
#include "dpproc/stats.hpp"

namespace dpproc {

// Utility of one player in one run: p_i - eps * x_i * v_i.
inline double player_utility(const MechanismOutcome& out, std::size_t i, double v, double epsilon) {
  return out.payments[i] - (out.accepted[i] ? epsilon * v : 0.0);
}

/// Threshold shifts of +-0.5 and +-0.1 times the type's mean offer, plus the
/// two constant strategies.
inline std::vector<Strategy> default_deviations(const PaymentOffer& offer) {
  const double a = offer.expected_alpha();
  return {ThresholdShift{0.5 * a}, ThresholdShift{-0.5 * a}, ThresholdShift{0.1 * a},
          ThresholdShift{-0.1 * a}, AlwaysAccept{}, AlwaysReject{}};
}

/// Five own-cost points: below, at and above the offered prices.
inline std::vector<double> default_cost_grid(const PaymentOffer& offer) {
  const double lo = offer.lower();
  const double hi = offer.upper();
  if (lo == hi) return {0.0, 0.5 * lo, lo, 1.5 * lo, 2.0 * lo};
  return {0.5 * lo, lo, 0.5 * (lo + hi), hi, 1.5 * hi};
}

struct BicReportRow {
  std::string deviation;
  double v_i;
  double utility_gap;  // E[u | truthful] - E[u | deviation]
  double ci_halfwidth;
  std::size_t replications;

  bool profitable_deviation() const { return utility_gap < -ci_halfwidth; }
};

struct BicAuditOptions {
  std::vector<Strategy> deviations;  // empty: default_deviations
  std::vector<double> cost_grid;     // empty: default_cost_grid
  int target_type = 1;
};

/// Bayesian incentive-compatibility audit for one player.
///
/// For each own cost on the grid, other players' costs are redrawn every
/// replication and play truthfully. The truthful and deviating runs of a
/// replication share every random draw, so the reported gap is a paired
/// difference.
inline std::vector<BicReportRow> audit_bic(const Contract& contract, std::span<const CostDistribution> dists,
                                           std::span<const int> database, std::size_t player_index,
                                           std::size_t replications, const RngStream& rng,
                                           BicAuditOptions options = {}) {
  detail::require(replications >= 1000, "BIC audit needs at least 1000 replications");
  detail::require(player_index < database.size(), "audited player index out of range");
  const PaymentOffer& offer = contract.offer(database[player_index]);
  if (options.deviations.empty()) options.deviations = default_deviations(offer);
  if (options.cost_grid.empty()) options.cost_grid = default_cost_grid(offer);
  const MechanismParams params{contract.epsilon(), contract.c(), options.target_type};

  const std::size_t n = database.size();
  std::vector<BicReportRow> rows;
  for (std::size_t g = 0; g < options.cost_grid.size(); ++g) {
    const double v = options.cost_grid[g];
    std::vector<RunningStats> gaps(options.deviations.size());
    std::vector<Strategy> profile(n, Truthful{});
    for (std::size_t r = 0; r < replications; ++r) {
      const RngStream rep = rng.split(g).split(r);
      RngStream pop_rng = rep.derive("population");
      Population pop = draw_population(database, dists, pop_rng);
      pop.costs[player_index] = v;
      RngStream mech_rng = rep.derive("mechanism");
      const auto truthful = run_mechanism(pop, contract, params, mech_rng);
      const double u_truth = player_utility(truthful, player_index, v, params.epsilon);
      for (std::size_t d = 0; d < options.deviations.size(); ++d) {
        profile[player_index] = options.deviations[d];
        RngStream replay = rep.derive("mechanism");
        const auto dev = run_mechanism(pop, contract, params, replay, profile);
        gaps[d].add(u_truth - player_utility(dev, player_index, v, params.epsilon));
      }
    }
    for (std::size_t d = 0; d < options.deviations.size(); ++d) {
      const Estimate e = to_estimate(gaps[d]);
      rows.push_back({strategy_name(options.deviations[d]), v, e.mean, e.ci_halfwidth, replications});
    }
  }
  return rows;
}

struct EiirTypeReport {
  int type;
  double mean_utility;
  double ci_halfwidth;
  std::size_t accepted_samples;

  bool individually_rational() const { return mean_utility >= -ci_halfwidth; }
};

struct EiirAuditOptions {
  std::vector<Strategy> strategies;  // empty: everyone truthful
  std::vector<std::pair<std::size_t, double>> pinned_costs;  // (player, fixed cost)
  int target_type = 1;
};

/// Mean realized utility of accepting players, per type.
inline std::vector<EiirTypeReport> audit_eiir(const Contract& contract, std::span<const CostDistribution> dists,
                                              std::span<const int> database, std::size_t replications,
                                              const RngStream& rng, const EiirAuditOptions& options = {}) {
  detail::require(replications >= 1000, "EIIR audit needs at least 1000 replications");
  const MechanismParams params{contract.epsilon(), contract.c(), options.target_type};
  std::vector<RunningStats> per_type(dists.size());
  for (std::size_t r = 0; r < replications; ++r) {
    const RngStream rep = rng.split(r);
    RngStream pop_rng = rep.derive("population");
    Population pop = draw_population(database, dists, pop_rng);
    for (const auto& [i, v] : options.pinned_costs) {
      detail::require(i < pop.size(), "pinned player index out of range");
      pop.costs[i] = v;
    }
    RngStream mech_rng = rep.derive("mechanism");
    const auto out = run_mechanism(pop, contract, params, mech_rng, options.strategies);
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (!out.accepted[i]) continue;
      per_type[static_cast<std::size_t>(pop.database[i] - 1)].add(
          player_utility(out, i, pop.costs[i], params.epsilon));
    }
  }
  std::vector<EiirTypeReport> reports;
  for (std::size_t j = 0; j < per_type.size(); ++j) {
    const Estimate e = to_estimate(per_type[j]);
    reports.push_back({static_cast<int>(j + 1), e.mean, e.ci_halfwidth, e.samples});
  }
  return reports;
}

struct AcceptanceRate {
  int type;
  double rate;
  double standard_error;
  std::size_t agents;
};

/// Acceptance frequency of truthful agents per type, with cost and offer drawn
/// fresh for each agent.
inline std::vector<AcceptanceRate> audit_acceptance(const Contract& contract, std::span<const CostDistribution> dists,
                                                    std::size_t agents_per_type, const RngStream& rng) {
  detail::require(contract.type_count() == dists.size(), "contract and distributions disagree on h");
  std::vector<AcceptanceRate> out;
  for (std::size_t j = 0; j < dists.size(); ++j) {
    RngStream s = rng.split(j);
    const PaymentOffer& offer = contract.offer(static_cast<int>(j + 1));
    std::size_t accepted = 0;
    for (std::size_t k = 0; k < agents_per_type; ++k) {
      const double v = sample_cost(dists[j], s);
      if (decide(Truthful{}, realize_offer(offer, s), v)) ++accepted;
    }
    const double p = static_cast<double>(accepted) / static_cast<double>(agents_per_type);
    out.push_back({static_cast<int>(j + 1), p, std::sqrt(p * (1 - p) / static_cast<double>(agents_per_type)),
                   agents_per_type});
  }
  return out;
}

}  // namespace dpproc
