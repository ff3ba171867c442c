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
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dpproc/error.hpp"
#include "dpproc/rng.hpp"

namespace dpproc {

inline constexpr double kQuantileCdfTolerance = 1e-9;
inline constexpr int kMaxBisectionIterations = 200;

/// A cost distribution with a density on [support_lo, support_hi].
///
/// Closed-form quantiles are used when available; otherwise the quantile is
/// found by bisection on the CDF to within kQuantileCdfTolerance. Instances
/// are immutable and safe to share across threads.
class ContinuousDist {
 public:
  using Fn = std::function<double(double)>;

  ContinuousDist(std::string name, double lo, double hi, Fn cdf, Fn pdf,
                 std::optional<Fn> quantile = std::nullopt)
      : name_(std::move(name)),
        lo_(lo),
        hi_(hi),
        cdf_(std::move(cdf)),
        pdf_(std::move(pdf)),
        quantile_(std::move(quantile)) {
    detail::require(std::isfinite(lo) && lo < hi, "continuous support must be a nonempty interval");
  }

  static ContinuousDist uniform(double lo, double hi) {
    detail::require(std::isfinite(lo) && std::isfinite(hi) && lo < hi,
                    "uniform requires finite lo < hi");
    const double width = hi - lo;
    return ContinuousDist(
        "uniform(" + fmt_num(lo) + "," + fmt_num(hi) + ")", lo, hi,
        [=](double v) { return std::clamp((v - lo) / width, 0.0, 1.0); },
        [=](double v) { return (v >= lo && v <= hi) ? 1.0 / width : 0.0; },
        [=](double q) { return lo + q * width; });
  }

  static ContinuousDist exponential(double rate) {
    detail::require(rate > 0 && std::isfinite(rate), "exponential rate must be positive");
    return ContinuousDist(
        "exponential(" + fmt_num(rate) + ")", 0.0, std::numeric_limits<double>::infinity(),
        [=](double v) { return v <= 0 ? 0.0 : -std::expm1(-rate * v); },
        [=](double v) { return v < 0 ? 0.0 : rate * std::exp(-rate * v); },
        [=](double q) { return -std::log1p(-q) / rate; });
  }

  // Piecewise-constant density: densities[i] on [breakpoints[i], breakpoints[i+1]).
  // The total mass must be 1 within 1e-9; it is renormalized exactly.
  static ContinuousDist piecewise_density(std::vector<double> breakpoints,
                                          std::vector<double> densities) {
    detail::require(breakpoints.size() >= 2 && densities.size() + 1 == breakpoints.size(),
                    "piecewise_density needs k+1 breakpoints for k densities");
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
      detail::require(std::isfinite(breakpoints[i]) && breakpoints[i] < breakpoints[i + 1],
                      "piecewise_density breakpoints must be finite and strictly increasing");
      detail::require(densities[i] >= 0 && std::isfinite(densities[i]),
                      "piecewise_density densities must be nonnegative");
    }
    detail::require(std::isfinite(breakpoints.back()), "piecewise_density breakpoints must be finite");
    std::vector<double> cum(breakpoints.size(), 0.0);
    for (std::size_t i = 0; i < densities.size(); ++i) {
      cum[i + 1] = cum[i] + densities[i] * (breakpoints[i + 1] - breakpoints[i]);
    }
    detail::require(std::abs(cum.back() - 1.0) <= 1e-9, "piecewise_density mass must integrate to 1");
    const double total = cum.back();
    for (auto& d : densities) d /= total;
    for (auto& m : cum) m /= total;
    cum.back() = 1.0;

    std::string name = "piecewise_density(";
    for (std::size_t i = 0; i < densities.size(); ++i) {
      name += (i ? ";" : "") + fmt_num(breakpoints[i]) + ":" + fmt_num(densities[i]);
    }
    name += ";" + fmt_num(breakpoints.back()) + ")";

    const double lo = breakpoints.front();
    const double hi = breakpoints.back();
    auto segment = [breakpoints](double v) {
      auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), v);
      return static_cast<std::size_t>(std::distance(breakpoints.begin(), it)) - 1;
    };
    Fn cdf = [=](double v) {
      if (v <= lo) return 0.0;
      if (v >= hi) return 1.0;
      const std::size_t i = segment(v);
      return std::min(1.0, cum[i] + densities[i] * (v - breakpoints[i]));
    };
    Fn pdf = [=](double v) {
      if (v < lo || v > hi) return 0.0;
      if (v == hi) return densities.back();
      return densities[segment(v)];
    };
    Fn quantile = [=](double q) {
      if (q <= 0) return lo;
      if (q >= 1) return hi;
      auto it = std::lower_bound(cum.begin() + 1, cum.end(), q);
      std::size_t i = static_cast<std::size_t>(std::distance(cum.begin(), it)) - 1;
      // Skip zero-density segments: the quantile is the left end of the next
      // segment that carries mass.
      while (densities[i] == 0.0 && i + 1 < densities.size()) ++i;
      if (densities[i] == 0.0) return breakpoints[i];
      return std::min(breakpoints[i + 1], breakpoints[i] + (q - cum[i]) / densities[i]);
    };
    return ContinuousDist(std::move(name), lo, hi, std::move(cdf), std::move(pdf),
                          std::move(quantile));
  }

  const std::string& name() const { return name_; }
  double support_lo() const { return lo_; }
  double support_hi() const { return hi_; }
  bool bounded() const { return std::isfinite(hi_); }

  double cdf(double v) const { return cdf_(v); }
  double pdf(double v) const { return pdf_(v); }
  bool has_closed_form_quantile() const { return quantile_.has_value(); }

  // q in [0, 1]; q == 1 requires bounded support.
  double quantile(double q) const {
    detail::require(q >= 0 && q <= 1, "quantile level must lie in [0, 1]");
    if (q == 1.0) {
      detail::require(bounded(), "quantile at 1 requires bounded support");
      return hi_;
    }
    if (quantile_) return (*quantile_)(q);
    return bisect_quantile(q);
  }

  // Bisection on the CDF; stops at |F(x) - q| <= kQuantileCdfTolerance.
  double bisect_quantile(double q) const {
    double a = lo_;
    double b = hi_;
    if (!std::isfinite(b)) {
      b = std::max(1.0, lo_ + 1.0);
      for (int i = 0; i < 1100 && cdf_(b) < q; ++i) b = lo_ + 2.0 * (b - lo_);
    }
    double mid = 0.5 * (a + b);
    for (int i = 0; i < kMaxBisectionIterations; ++i) {
      mid = 0.5 * (a + b);
      const double f = cdf_(mid);
      if (std::abs(f - q) <= kQuantileCdfTolerance) return mid;
      (f < q ? a : b) = mid;
    }
    return mid;
  }

  // True when the density is positive on a grid of `points` interior points
  // of the support (or of its 1 - 1e-6 quantile range when unbounded).
  bool positive_density(int points = 1000) const {
    const double hi = bounded() ? hi_ : quantile(1.0 - 1e-6);
    for (int k = 0; k <= points; ++k) {
      const double z = lo_ + (hi - lo_) * static_cast<double>(k) / points;
      if (!(pdf_(z) > 0)) return false;
    }
    return true;
  }

 private:
  static std::string fmt_num(double x) {
    std::string s = std::to_string(x);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  }

  std::string name_;
  double lo_;
  double hi_;
  Fn cdf_;
  Fn pdf_;
  std::optional<Fn> quantile_;
};

/// Finite-support cost distribution.
class DiscreteDist {
 public:
  DiscreteDist(std::vector<double> atoms, std::vector<double> probs)
      : atoms_(std::move(atoms)), probs_(std::move(probs)) {
    detail::require(!atoms_.empty() && atoms_.size() == probs_.size(),
                    "discrete distribution needs matching, nonempty atoms and probs");
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      detail::require(std::isfinite(atoms_[i]), "discrete atoms must be finite");
      detail::require(probs_[i] > 0, "discrete probabilities must be positive");
      if (i > 0) detail::require(atoms_[i - 1] < atoms_[i], "discrete atoms must be strictly increasing");
    }
    cumulative_.resize(probs_.size());
    std::partial_sum(probs_.begin(), probs_.end(), cumulative_.begin());
    detail::require(std::abs(cumulative_.back() - 1.0) <= 1e-12,
                    "discrete probabilities must sum to 1");
    cumulative_.back() = 1.0;
  }

  static DiscreteDist degenerate(double atom) { return DiscreteDist({atom}, {1.0}); }

  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& probs() const { return probs_; }
  // cumulative()[i] == F(atoms()[i]).
  const std::vector<double>& cumulative() const { return cumulative_; }

  double cdf(double v) const {
    auto it = std::upper_bound(atoms_.begin(), atoms_.end(), v);
    if (it == atoms_.begin()) return 0.0;
    return cumulative_[static_cast<std::size_t>(std::distance(atoms_.begin(), it)) - 1];
  }

  std::string name() const {
    std::string s = "discrete(";
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      s += (i ? ";" : "") + std::to_string(atoms_[i]) + ":" + std::to_string(probs_[i]);
    }
    return s + ")";
  }

 private:
  std::vector<double> atoms_;
  std::vector<double> probs_;
  std::vector<double> cumulative_;
};

/// A distribution known only through a CDF oracle and a bracket containing
/// every quantile of interest.
class OracleDist {
 public:
  using Fn = std::function<double(double)>;

  OracleDist(std::string name, Fn cdf_oracle, double bracket_lo, double bracket_hi, double delta)
      : name_(std::move(name)),
        cdf_(std::move(cdf_oracle)),
        lo_(bracket_lo),
        hi_(bracket_hi),
        delta_(delta) {
    detail::require(std::isfinite(bracket_lo) && std::isfinite(bracket_hi) && bracket_lo < bracket_hi,
                    "oracle bracket must be a finite nonempty interval");
    detail::require(delta > 0, "oracle delta must be positive");
  }

  // Hides a continuous distribution behind its CDF. The bracket defaults to the
  // wrapped support, which must then be bounded.
  static OracleDist wrapping(const ContinuousDist& inner, double delta,
                             std::optional<std::pair<double, double>> bracket = std::nullopt) {
    std::pair<double, double> b;
    if (bracket) {
      b = *bracket;
    } else {
      detail::require(inner.bounded(), "oracle over unbounded support needs an explicit bracket");
      b = {inner.support_lo(), inner.support_hi()};
    }
    return OracleDist("oracle(" + inner.name() + ")", [inner](double v) { return inner.cdf(v); },
                      b.first, b.second, delta);
  }

  const std::string& name() const { return name_; }
  double cdf(double v) const { return cdf_(v); }
  double bracket_lo() const { return lo_; }
  double bracket_hi() const { return hi_; }
  double delta() const { return delta_; }

 private:
  std::string name_;
  Fn cdf_;
  double lo_;
  double hi_;
  double delta_;
};

using CostDistribution = std::variant<ContinuousDist, DiscreteDist, OracleDist>;

inline std::string dist_name(const CostDistribution& dist) {
  return std::visit([](const auto& d) { return std::string(d.name()); }, dist);
}

inline double cdf_eval(const CostDistribution& dist, double v) {
  detail::require(!std::isnan(v), "cdf_eval needs a number");
  return std::visit([v](const auto& d) { return d.cdf(v); }, dist);
}

// The quantile was hit exactly: F(value) == q.
struct ExactQuantile {
  double value;
};

// No exact hit. `lo` is the largest point with F < q (absent when no such atom
// exists), `hi` the smallest with F > q.
struct QuantileBracket {
  std::optional<double> lo;
  double hi;
  double cdf_lo;  // 0 when lo is absent
  double cdf_hi;
};

using QuantileResult = std::variant<ExactQuantile, QuantileBracket>;

namespace detail {

inline QuantileBracket oracle_bracket(const OracleDist& d, double q, double delta) {
  require(delta > 0, "oracle quantile needs delta > 0");
  const double f_lo = d.cdf(d.bracket_lo());
  const double f_hi = d.cdf(d.bracket_hi());
  require(f_lo < q && q < f_hi, "oracle bracket does not contain the requested quantile");
  // Largest point with F < q, to within delta / 2.
  double a = d.bracket_lo(), b = d.bracket_hi();
  for (int i = 0; i < kMaxBisectionIterations && b - a >= 0.5 * delta; ++i) {
    const double mid = 0.5 * (a + b);
    (d.cdf(mid) < q ? a : b) = mid;
  }
  const double alpha_lo = a;
  // Smallest point with F > q, to within delta / 2.
  a = alpha_lo;
  b = d.bracket_hi();
  for (int i = 0; i < kMaxBisectionIterations && b - a >= 0.5 * delta; ++i) {
    const double mid = 0.5 * (a + b);
    (d.cdf(mid) > q ? b : a) = mid;
  }
  const double alpha_hi = b;
  QuantileBracket out{alpha_lo, alpha_hi, d.cdf(alpha_lo), d.cdf(alpha_hi)};
  require(out.cdf_lo < q && q < out.cdf_hi,
          "oracle bisection lost the bracket; the CDF is not monotone");
  require(alpha_hi - alpha_lo < delta,
          "oracle CDF is flat at the requested level; no bracket narrower than delta exists");
  return out;
}

inline constexpr double kAtomHitTolerance = 1e-12;

inline QuantileResult discrete_quantile(const DiscreteDist& d, double q) {
  const auto& cum = d.cumulative();
  const auto& atoms = d.atoms();
  for (std::size_t i = 0; i < cum.size(); ++i) {
    if (std::abs(cum[i] - q) <= kAtomHitTolerance) return ExactQuantile{atoms[i]};
    if (cum[i] > q) {
      if (i == 0) return QuantileBracket{std::nullopt, atoms[0], 0.0, cum[0]};
      return QuantileBracket{atoms[i - 1], atoms[i], cum[i - 1], cum[i]};
    }
  }
  return ExactQuantile{atoms.back()};
}

}  // namespace detail

/// F^{-1}(q). Continuous distributions always report an exact value; oracle
/// distributions always report a bracket narrower than `delta` (their own
/// delta when `delta` <= 0); discrete distributions report whichever applies.
/// q == 1 is accepted for finite-support distributions (full sample).
inline QuantileResult quantile(const CostDistribution& dist, double q, double delta = 0.0) {
  detail::require(q > 0 && q <= 1, "quantile level must lie in (0, 1]");
  return std::visit(
      [&](const auto& d) -> QuantileResult {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, ContinuousDist>) {
          return ExactQuantile{d.quantile(q)};
        } else if constexpr (std::is_same_v<T, DiscreteDist>) {
          return detail::discrete_quantile(d, q);
        } else {
          if (q == 1.0) return ExactQuantile{d.bracket_hi()};
          return detail::oracle_bracket(d, q, delta > 0 ? delta : d.delta());
        }
      },
      dist);
}

/// Draws one cost: inverse transform for continuous and oracle distributions,
/// categorical for discrete ones.
inline double sample_cost(const CostDistribution& dist, RngStream& rng) {
  return std::visit(
      [&](const auto& d) -> double {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, ContinuousDist>) {
          return d.quantile(rng.uniform());
        } else if constexpr (std::is_same_v<T, DiscreteDist>) {
          const double u = rng.uniform();
          const auto& cum = d.cumulative();
          auto it = std::upper_bound(cum.begin(), cum.end(), u);
          if (it == cum.end()) --it;
          return d.atoms()[static_cast<std::size_t>(std::distance(cum.begin(), it))];
        } else {
          const double u = rng.uniform_open();
          double a = d.bracket_lo(), b = d.bracket_hi();
          for (int i = 0; i < 64 && b - a > 1e-12 * std::max(1.0, std::abs(b)); ++i) {
            const double mid = 0.5 * (a + b);
            (d.cdf(mid) < u ? a : b) = mid;
          }
          return 0.5 * (a + b);
        }
      },
      dist);
}

/// Laplace noise parameters. `forced_zero` is a test hook: draws still
/// consume randomness (so streams stay aligned) but return 0.
struct NoiseSpec {
  double scale_b;
  bool forced_zero = false;
};

inline double sample_laplace(const NoiseSpec& spec, RngStream& rng) {
  detail::require(spec.scale_b > 0, "Laplace scale must be positive");
  const double u = rng.uniform_open() - 0.5;
  if (spec.forced_zero) return 0.0;
  return -spec.scale_b * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
}

inline double laplace_pdf(double x, double center, double scale_b) {
  return std::exp(-std::abs(x - center) / scale_b) / (2.0 * scale_b);
}

// Largest |log density ratio| between Lap(scale_b) centred at x1 and at x2 on
// a uniform grid over [lo, hi].
inline double max_laplace_shift_log_ratio(double x1, double x2, double scale_b, double lo,
                                          double hi, int points) {
  double worst = 0.0;
  for (int k = 0; k <= points; ++k) {
    const double x = lo + (hi - lo) * static_cast<double>(k) / points;
    worst = std::max(worst, std::abs(std::log(laplace_pdf(x, x1, scale_b)) -
                                     std::log(laplace_pdf(x, x2, scale_b))));
  }
  return worst;
}

}  // namespace dpproc
