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

#include <nlohmann/json.hpp>

#include "dpproc/dpproc.hpp"

namespace dpproc {

inline void to_json(nlohmann::json& j, const PaymentOffer& offer) {
  if (auto d = offer.deterministic_offer()) {
    j = {{"kind", "deterministic"}, {"alpha", d->alpha}};
    return;
  }
  const auto& r = *offer.randomized_offer();
  j = {{"kind", "randomized"},
       {"alpha_lo", r.alpha_lo ? nlohmann::json(*r.alpha_lo) : nlohmann::json(nullptr)},
       {"alpha_hi", r.alpha_hi},
       {"beta", r.beta},
       {"c_lo", r.c_lo},
       {"c_hi", r.c_hi}};
}

inline void to_json(nlohmann::json& j, const Contract& contract) {
  j = {{"c", contract.c()}, {"epsilon", contract.epsilon()}, {"gamma", contract.gamma()},
       {"offers", contract.offers()}};
}

inline void to_json(nlohmann::json& j, const MechanismOutcome& out) {
  nlohmann::json offers = nlohmann::json::array();
  for (const auto& o : out.offers) offers.push_back(o ? nlohmann::json(*o) : nlohmann::json(nullptr));
  std::vector<std::size_t> winners;
  for (std::size_t i = 0; i < out.accepted.size(); ++i) {
    if (out.accepted[i]) winners.push_back(i);
  }
  j = {{"estimate", out.estimate},
       {"raw_estimate", out.raw_estimate},
       {"m", out.m},
       {"accepted", winners},
       {"offers", offers},
       {"payments", out.payments},
       {"noise_estimate", out.noise_estimate},
       {"noise_payments", out.noise_payments},
       {"seed", out.seed}};
}

inline void to_json(nlohmann::json& j, const RatioTestReport& r) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : r.atoms) atoms.push_back({{"value", a.value}, {"prob_a", a.prob_a}, {"prob_b", a.prob_b}});
  j = {{"epsilon_target", r.epsilon_target},
       {"slack", r.slack},
       {"threshold", r.threshold()},
       {"bins", r.bins},
       {"qualifying_bins", r.qualifying_bins},
       {"min_bin_count", r.min_bin_count},
       {"max_log_ratio", r.max_log_ratio},
       {"max_log_ratio_ab", r.max_log_ratio_ab},
       {"max_log_ratio_ba", r.max_log_ratio_ba},
       {"direction", r.direction},
       {"atoms", atoms},
       {"overflow_a", r.overflow_a},
       {"overflow_b", r.overflow_b},
       {"verdict", verdict_name(r.verdict)}};
}

inline void to_json(nlohmann::json& j, const BicReportRow& r) {
  j = {{"deviation", r.deviation},
       {"v_i", r.v_i},
       {"utility_gap", r.utility_gap},
       {"ci_halfwidth", r.ci_halfwidth},
       {"replications", r.replications},
       {"profitable", r.profitable_deviation()}};
}

inline void to_json(nlohmann::json& j, const Estimate& e) {
  j = {{"mean", e.mean}, {"ci_halfwidth", e.ci_halfwidth}, {"samples", e.samples}};
}

}  // namespace dpproc
