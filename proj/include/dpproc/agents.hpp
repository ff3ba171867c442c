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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dpproc/distributions.hpp"
#include "dpproc/error.hpp"
#include "dpproc/rng.hpp"

namespace dpproc {

/// A database of 1-based types with a cost per player drawn from the matching
/// type's distribution.
struct Population {
  std::vector<int> database;
  std::vector<double> costs;
  int h = 0;
  std::uint64_t seed = 0;  // stream that drew the costs

  std::size_t size() const { return database.size(); }
  std::size_t count_of(int type) const {
    return static_cast<std::size_t>(std::count(database.begin(), database.end(), type));
  }
};

inline void validate_database(std::span<const int> database, int h) {
  detail::require(!database.empty(), "database must contain at least one player");
  for (int t : database) detail::require(t >= 1 && t <= h, "database entry outside [1, h]");
}

// Expands per-type counts {n_1, ..., n_h} into a database listing type 1 first.
inline std::vector<int> database_from_counts(std::span<const std::size_t> counts) {
  std::vector<int> db;
  for (std::size_t j = 0; j < counts.size(); ++j) db.insert(db.end(), counts[j], static_cast<int>(j + 1));
  return db;
}

inline Population draw_population(std::span<const int> database, std::span<const CostDistribution> dists,
                                  RngStream& rng) {
  const int h = static_cast<int>(dists.size());
  validate_database(database, h);
  Population pop{{database.begin(), database.end()}, {}, h, rng.seed()};
  pop.costs.reserve(database.size());
  for (int t : database) pop.costs.push_back(sample_cost(dists[static_cast<std::size_t>(t - 1)], rng));
  return pop;
}

struct Truthful {};
struct ThresholdShift {
  double shift;
};
struct AlwaysAccept {};
struct AlwaysReject {};

using Strategy = std::variant<Truthful, ThresholdShift, AlwaysAccept, AlwaysReject>;

inline std::string strategy_name(const Strategy& s) {
  return std::visit(
      [](const auto& k) -> std::string {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Truthful>) return "truthful";
        else if constexpr (std::is_same_v<T, ThresholdShift>) return "shift(" + std::to_string(k.shift) + ")";
        else if constexpr (std::is_same_v<T, AlwaysAccept>) return "always_accept";
        else return "always_reject";
      },
      s);
}

/// Accept/reject a realized offer at own cost v. The null offer (nullopt)
/// carries no price, so no strategy can accept it.
inline bool decide(const Strategy& strategy, std::optional<double> offer, double v) {
  return std::visit(
      [&](const auto& k) -> bool {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, Truthful>) return offer.has_value() && v <= *offer;
        else if constexpr (std::is_same_v<T, ThresholdShift>) return offer.has_value() && v <= *offer + k.shift;
        else if constexpr (std::is_same_v<T, AlwaysAccept>) return offer.has_value();
        else return false;
      },
      strategy);
}

}  // namespace dpproc
