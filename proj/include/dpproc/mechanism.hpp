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
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dpproc/agents.hpp"
#include "dpproc/contracts.hpp"
#include "dpproc/distributions.hpp"
#include "dpproc/error.hpp"
#include "dpproc/rng.hpp"

namespace dpproc {

struct MechanismParams {
  double epsilon;
  double c;
  int target_type = 1;
  // Test hook: all Laplace draws return 0. Never on by default.
  bool noise_off = false;
};

struct MechanismOutcome {
  double estimate = 0.0;      // raw estimate clamped to [0, n]
  double raw_estimate = 0.0;  // (m + Lap(1/eps)) / c
  std::vector<double> payments;
  std::vector<bool> accepted;
  std::vector<std::optional<double>> offers;  // realized price per player
  std::size_t m = 0;                          // accepted players of the target type
  std::uint64_t seed = 0;
  double noise_estimate = 0.0;
  std::vector<double> noise_payments;  // one draw per player, used only for accepters

  std::size_t accepted_count() const {
    return static_cast<std::size_t>(std::count(accepted.begin(), accepted.end(), true));
  }
  double total_payment() const {
    double t = 0.0;
    for (double p : payments) t += p;
    return t;
  }
};

/// One run of the posted-price mechanism.
///
/// Every player is offered a realized price for their type and decides with
/// their strategy (truthful when `strategies` is empty). The count m of
/// accepting target-type players is released as (m + Lap(1/eps)) / c clamped
/// to [0, n]; each accepter of type j is paid eps * (alpha_j + Lap(gamma/eps)).
/// Payments are not clamped and can be negative.
///
/// Randomness is consumed in a fixed order (per player: offer, payment noise;
/// then the estimate noise) regardless of decisions, so runs that differ only
/// in strategies share all random draws.
inline MechanismOutcome run_mechanism(const Population& population, const Contract& contract,
                                      const MechanismParams& params, RngStream& rng,
                                      std::span<const Strategy> strategies = {}) {
  const std::size_t n = population.size();
  detail::require(n >= 1 && population.costs.size() == n, "population is malformed");
  detail::require(contract.type_count() == static_cast<std::size_t>(population.h),
                  "contract and population disagree on the number of types");
  detail::require(params.epsilon > 0, "epsilon must be positive");
  detail::require(std::abs(params.epsilon - contract.epsilon()) <= 1e-12 * params.epsilon &&
                      std::abs(params.c - contract.c()) <= 1e-12,
                  "contract was built for different (c, epsilon)");
  detail::require(params.target_type >= 1 && params.target_type <= population.h, "target type out of range");
  detail::require(strategies.empty() || strategies.size() == n, "need one strategy per player");

  MechanismOutcome out;
  out.seed = rng.seed();
  out.payments.assign(n, 0.0);
  out.accepted.assign(n, false);
  out.offers.resize(n);
  out.noise_payments.assign(n, 0.0);

  const double gamma = contract.gamma();
  const Strategy truthful = Truthful{};
  for (std::size_t i = 0; i < n; ++i) {
    const int type = population.database[i];
    const auto offer = realize_offer(contract.offer(type), rng);
    double noise = 0.0;
    if (gamma > 0) {
      noise = sample_laplace({gamma / params.epsilon, params.noise_off}, rng);
    } else {
      rng.uniform();  // keep alignment; Lap(0) is a point mass at 0
    }
    out.offers[i] = offer;
    out.noise_payments[i] = noise;
    const Strategy& s = strategies.empty() ? truthful : strategies[i];
    if (offer && decide(s, offer, population.costs[i])) {
      out.accepted[i] = true;
      out.payments[i] = params.epsilon * (*offer + noise);
      if (type == params.target_type) ++out.m;
    }
  }
  out.noise_estimate = sample_laplace({1.0 / params.epsilon, params.noise_off}, rng);
  out.raw_estimate = (static_cast<double>(out.m) + out.noise_estimate) / params.c;
  out.estimate = std::clamp(out.raw_estimate, 0.0, static_cast<double>(n));
  return out;
}

/// sqrt(3 (n1 (1 - c) / c + 2 / (eps^2 c^2))): |s_hat - n1| reaches this with
/// probability at most 1/3 under truthful play.
inline double accuracy_bound(double n1, double c, double epsilon) {
  detail::require(c > 0 && c <= 1, "c must lie in (0, 1]");
  detail::require(epsilon > 0, "epsilon must be positive");
  return std::sqrt(3.0 * (n1 * (1.0 - c) / c + 2.0 / (epsilon * epsilon * c * c)));
}

// Variance of the unclamped estimate: (n1 c (1 - c) + 2 / eps^2) / c^2.
inline double raw_estimate_variance(double n1, double c, double epsilon) {
  return (n1 * c * (1.0 - c) + 2.0 / (epsilon * epsilon)) / (c * c);
}

struct PrivacyParams {
  double c;
  double epsilon;
};

/// (c, eps) whose accuracy bound equals k for a population of n.
inline PrivacyParams params_for_accuracy(double k, double n) {
  detail::require(k > 0, "accuracy target k must be positive");
  detail::require(n >= 1, "n must be at least 1");
  const double t = 1.0 + k * k / (6.0 * n);
  return {1.0 / t, 2.0 * std::sqrt(3.0) * t / k};
}

// c as a function of eps for the budget rule; requires eps > sqrt(8 / n).
inline double budget_c_for_epsilon(double epsilon, double n) {
  detail::require(epsilon * epsilon * n > 8.0, "budget rule needs eps > sqrt(8/n)");
  return 0.5 * (1.0 + std::sqrt(1.0 - 8.0 / (epsilon * epsilon * n)));
}

/// Solves eps * alpha_max * c(eps) * n = budget by bisection over eps.
inline PrivacyParams params_for_budget(double budget, double n, double alpha_max) {
  detail::require(budget > 0, "budget must be positive");
  detail::require(n >= 1, "n must be at least 1");
  detail::require(alpha_max > 0, "alpha_max must be positive");
  const double eps_min = std::sqrt(8.0 / n);
  // Total payment at the infimum eps_min is alpha * n * eps_min / 2.
  const double payment_floor = alpha_max * n * eps_min / 2.0;
  if (!(budget > payment_floor)) {
    throw Infeasible("budget too small: needs more than alpha_max * sqrt(2n) = " +
                     std::to_string(payment_floor));
  }
  auto total = [&](double eps) { return eps * alpha_max * budget_c_for_epsilon(eps, n) * n; };
  double lo = eps_min;
  double hi = 2.0 * budget / (alpha_max * n);  // total(hi) >= hi * alpha * n / 2 = budget
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid * mid * n <= 8.0 || total(mid) < budget) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {budget_c_for_epsilon(hi, n), hi};
}

/// Encodes a d-attribute record over [1, h] as one type in [1, h^d]:
/// 1 + sum_j (attr_j - 1) h^j.
inline long long flatten_multiattr(std::span<const int> record, int h) {
  detail::require(h >= 1, "base h must be at least 1");
  detail::require(!record.empty(), "record must have at least one attribute");
  long long code = 0;
  long long place = 1;
  for (int a : record) {
    detail::require(a >= 1 && a <= h, "attribute outside [1, h]");
    code += static_cast<long long>(a - 1) * place;
    place *= h;
  }
  return code + 1;
}

// Mean payment of an accepting truthful player of a type offered `offer`:
// eps * E[alpha | accept]. For randomized offers the accepting branch is
// weighted by its acceptance probability.
inline double expected_accepted_payment(const PaymentOffer& offer, double epsilon) {
  if (auto d = offer.deterministic_offer()) return epsilon * d->alpha;
  const auto& r = *offer.randomized_offer();
  const double w_lo = (1.0 - r.beta) * r.c_lo;
  const double w_hi = r.beta * r.c_hi;
  return epsilon * (w_lo * r.alpha_lo.value_or(0.0) + w_hi * r.alpha_hi) / (w_lo + w_hi);
}

}  // namespace dpproc
