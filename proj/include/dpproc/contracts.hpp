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
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "dpproc/distributions.hpp"
#include "dpproc/error.hpp"
#include "dpproc/rng.hpp"

namespace dpproc {

struct DeterministicOffer {
  double alpha;
};

// Offer alpha_hi with probability beta, otherwise alpha_lo. An absent alpha_lo
// is the null offer: nobody accepts it and it never produces a payment.
struct RandomizedOffer {
  std::optional<double> alpha_lo;
  double alpha_hi;
  double beta;
  double c_lo;  // F(alpha_lo), 0 for the null offer
  double c_hi;  // F(alpha_hi)
};

class PaymentOffer {
 public:
  PaymentOffer(DeterministicOffer d) : kind_(d) {}  // NOLINT(google-explicit-constructor)
  PaymentOffer(RandomizedOffer r) : kind_(r) {      // NOLINT(google-explicit-constructor)
    detail::require(r.beta >= 0 && r.beta <= 1, "offer randomization beta must lie in [0, 1]");
    detail::require(!r.alpha_lo || *r.alpha_lo <= r.alpha_hi, "alpha_lo must not exceed alpha_hi");
  }

  bool randomized() const { return std::holds_alternative<RandomizedOffer>(kind_); }
  const DeterministicOffer* deterministic_offer() const { return std::get_if<DeterministicOffer>(&kind_); }
  const RandomizedOffer* randomized_offer() const { return std::get_if<RandomizedOffer>(&kind_); }

  // Largest price this offer can post.
  double upper() const {
    if (auto d = deterministic_offer()) return d->alpha;
    return randomized_offer()->alpha_hi;
  }
  // Smallest real (non-null) price this offer can post.
  double lower() const {
    if (auto d = deterministic_offer()) return d->alpha;
    const auto& r = *randomized_offer();
    return r.alpha_lo.value_or(r.alpha_hi);
  }
  // (1 - beta) * alpha_lo + beta * alpha_hi; the null branch counts as 0.
  double expected_alpha() const {
    if (auto d = deterministic_offer()) return d->alpha;
    const auto& r = *randomized_offer();
    return (1.0 - r.beta) * r.alpha_lo.value_or(0.0) + r.beta * r.alpha_hi;
  }

 private:
  std::variant<DeterministicOffer, RandomizedOffer> kind_;
};

/// Type-indexed posted-price contract. Types are 1-based: offer(j) for j in [1, h].
class Contract {
 public:
  Contract(std::vector<PaymentOffer> offers, double c, double epsilon, std::optional<double> gamma = std::nullopt)
      : offers_(std::move(offers)), c_(c), epsilon_(epsilon) {
    detail::require(!offers_.empty(), "contract needs at least one type");
    detail::require(c > 0 && c <= 1, "acceptance probability c must lie in (0, 1]");
    detail::require(epsilon > 0, "epsilon must be positive");
    const double span = min_span();
    gamma_ = gamma.value_or(span);
    detail::require(gamma_ >= 0 && gamma_ >= span - 1e-12, "gamma must cover the span of offered prices");
  }

  std::size_t type_count() const { return offers_.size(); }
  const PaymentOffer& offer(int type) const {
    detail::require(type >= 1 && static_cast<std::size_t>(type) <= offers_.size(), "type out of range");
    return offers_[static_cast<std::size_t>(type - 1)];
  }
  const std::vector<PaymentOffer>& offers() const { return offers_; }
  double c() const { return c_; }
  double epsilon() const { return epsilon_; }
  double gamma() const { return gamma_; }

  // max_j upper(j) - min_j lower(j)
  double min_span() const {
    double hi = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& o : offers_) {
      hi = std::max(hi, o.upper());
      lo = std::min(lo, o.lower());
    }
    return hi - lo;
  }

 private:
  std::vector<PaymentOffer> offers_;
  double c_;
  double epsilon_;
  double gamma_ = 0.0;
};

inline PaymentOffer offer_from_quantile(const QuantileResult& qr, double c) {
  if (auto exact = std::get_if<ExactQuantile>(&qr)) return DeterministicOffer{exact->value};
  const auto& b = std::get<QuantileBracket>(qr);
  detail::require(b.cdf_lo < c && c < b.cdf_hi, "c is unreachable for this distribution");
  const double beta = (c - b.cdf_lo) / (b.cdf_hi - b.cdf_lo);
  return RandomizedOffer{b.lo, b.hi, beta, b.cdf_lo, b.cdf_hi};
}

/// Builds the contract under which every type accepts with probability exactly
/// c. `delta` > 0 overrides the bracket width of oracle distributions.
inline Contract build_contract(std::span<const CostDistribution> dists, double c, double epsilon,
                               double delta = 0.0) {
  detail::require(!dists.empty(), "need at least one cost distribution");
  detail::require(c > 0 && c <= 1, "acceptance probability c must lie in (0, 1]");
  detail::require(epsilon > 0, "epsilon must be positive");
  std::vector<PaymentOffer> offers;
  offers.reserve(dists.size());
  for (const auto& d : dists) offers.push_back(offer_from_quantile(quantile(d, c, delta), c));
  return Contract(std::move(offers), c, epsilon);
}

/// Posts a concrete price. Always consumes exactly one uniform draw so that
/// stream alignment does not depend on the offer kind. nullopt is the null offer.
inline std::optional<double> realize_offer(const PaymentOffer& offer, RngStream& rng) {
  const double u = rng.uniform();
  if (auto d = offer.deterministic_offer()) return d->alpha;
  const auto& r = *offer.randomized_offer();
  if (u < r.beta) return r.alpha_hi;
  return r.alpha_lo;
}

}  // namespace dpproc
