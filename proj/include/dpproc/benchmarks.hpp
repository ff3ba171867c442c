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
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpproc/distributions.hpp"
#include "dpproc/error.hpp"
#include "dpproc/rng.hpp"
#include "dpproc/stats.hpp"

namespace dpproc {

/// phi(z) = z + F(z) / f(z), the procurement virtual cost.
inline double virtual_cost(const ContinuousDist& dist, double z) {
  detail::require(z >= dist.support_lo() && z <= dist.support_hi(), "virtual cost: z outside support");
  const double f = dist.pdf(z);
  detail::require(f > 0, "virtual cost: density vanishes at z");
  return z + dist.cdf(z) / f;
}

// Quantile level at which unbounded supports are cut for the benchmarks.
inline constexpr double kUnboundedTruncationLevel = 1.0 - 1e-6;
inline constexpr std::size_t kDefaultIroningResolution = 4096;

/// A maximal interval on which the convex envelope G lies strictly below H,
/// in quantile space [q_lo, q_hi) and cost space [cost_lo, cost_hi). The
/// ironed virtual cost equals `slope` throughout.
struct IronedInterval {
  double q_lo;
  double q_hi;
  double cost_lo;
  double cost_hi;
  double slope;
};

/// Ironing of the virtual cost on a uniform quantile grid.
///
/// H(q) is the integral of h(t) = phi(F^{-1}(t)) by the trapezoid rule, G is
/// the lower convex envelope of the grid points of H, and g holds the slope of
/// the envelope segment that starts at each grid point (right-continuous). The
/// ironed virtual cost is g(F(z)).
class IronedCurve {
 public:
  static IronedCurve build(const ContinuousDist& dist, std::size_t resolution = kDefaultIroningResolution) {
    detail::require(resolution >= 2, "ironing grid needs at least two cells");
    IronedCurve c(dist);
    c.truncated_ = !dist.bounded();
    c.effective_hi_ = c.truncated_ ? dist.quantile(kUnboundedTruncationLevel) : dist.support_hi();
    const std::size_t n = resolution;
    const double dq = 1.0 / static_cast<double>(n);
    c.q_.resize(n + 1);
    std::vector<double> h(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
      c.q_[k] = static_cast<double>(k) * dq;
      const double level = c.truncated_ ? std::min(c.q_[k], kUnboundedTruncationLevel) : c.q_[k];
      const double z = level >= 1.0 ? dist.support_hi() : dist.quantile(level);
      if (!(dist.pdf(z) > 0)) {
        throw InvalidArgument("density is zero inside the support; ironing needs a positive density");
      }
      h[k] = virtual_cost(dist, z);
    }
    c.h_ = h;
    c.H_.assign(n + 1, 0.0);
    for (std::size_t k = 1; k <= n; ++k) c.H_[k] = c.H_[k - 1] + 0.5 * dq * (h[k - 1] + h[k]);

    // Lower convex envelope: one monotone-stack sweep. Pop the last vertex
    // while its incoming slope exceeds the slope to the new point.
    std::vector<std::size_t> hull;
    for (std::size_t k = 0; k <= n; ++k) {
      while (hull.size() >= 2) {
        const std::size_t i0 = hull[hull.size() - 2];
        const std::size_t i1 = hull.back();
        const double left = (c.H_[i1] - c.H_[i0]) / static_cast<double>(i1 - i0);
        const double right = (c.H_[k] - c.H_[i1]) / static_cast<double>(k - i1);
        if (left > right) {
          hull.pop_back();
        } else {
          break;
        }
      }
      hull.push_back(k);
    }
    c.G_.assign(n + 1, 0.0);
    c.g_.assign(n + 1, 0.0);
    c.segment_start_.assign(n + 1, 0);
    for (std::size_t s = 0; s + 1 < hull.size(); ++s) {
      const std::size_t a = hull[s];
      const std::size_t b = hull[s + 1];
      const double slope = (c.H_[b] - c.H_[a]) / (c.q_[b] - c.q_[a]);
      for (std::size_t k = a; k < b; ++k) {
        const double t = static_cast<double>(k - a) / static_cast<double>(b - a);
        c.G_[k] = (1.0 - t) * c.H_[a] + t * c.H_[b];
        c.g_[k] = slope;
        c.segment_start_[k] = a;
      }
    }
    c.G_[n] = c.H_[n];
    c.g_[n] = c.g_[n - 1];
    c.segment_start_[n] = c.segment_start_[n - 1];

    double scale = 0.0;
    for (double v : c.H_) scale = std::max(scale, std::abs(v));
    const double threshold = 1e-7 * scale;
    for (std::size_t k = 1; k < n;) {
      if (c.H_[k] - c.G_[k] <= threshold) {
        ++k;
        continue;
      }
      // Grow the interval to the envelope vertices enclosing the run.
      const std::size_t a = c.segment_start_[k];
      std::size_t b = k;
      while (b < n && (c.segment_start_[b] == a && b != a)) ++b;
      const double q_lo = c.q_[a];
      const double q_hi = c.q_[b];
      c.intervals_.push_back({q_lo, q_hi, dist.quantile(q_lo), b == n ? c.effective_hi_ : dist.quantile(q_hi),
                              c.g_[a]});
      k = b;
    }
    return c;
  }

  const ContinuousDist& dist() const { return dist_; }
  std::size_t resolution() const { return q_.size() - 1; }
  const std::vector<double>& q_grid() const { return q_; }
  const std::vector<double>& h_values() const { return h_; }
  const std::vector<double>& H_values() const { return H_; }
  const std::vector<double>& G_values() const { return G_; }
  const std::vector<double>& g_values() const { return g_; }
  const std::vector<IronedInterval>& intervals() const { return intervals_; }
  bool truncated() const { return truncated_; }
  // Upper end of the cost range the benchmark integrates over.
  double effective_hi() const { return effective_hi_; }

  // g(q) by right-continuous grid lookup.
  double slope_at(double q) const {
    const double n = static_cast<double>(resolution());
    const auto k = static_cast<std::size_t>(std::clamp(std::floor(q * n), 0.0, n));
    return g_[k];
  }

  double ironed_virtual_cost(double z) const {
    detail::require(z >= dist_.support_lo() && z <= dist_.support_hi(), "ironed virtual cost: z outside support");
    return slope_at(dist_.cdf(z));
  }

  // Index of the ironed interval holding cost z, if any.
  std::optional<std::size_t> interval_of(double z) const {
    for (std::size_t k = 0; k < intervals_.size(); ++k) {
      if (z >= intervals_[k].cost_lo && z < intervals_[k].cost_hi) return k;
    }
    return std::nullopt;
  }

  // Sort key equivalent to the ironed virtual cost: players compare by cost,
  // except that all costs in one ironed interval share the key of its left end.
  double rank_key(double z) const {
    if (auto k = interval_of(z)) return intervals_[*k].cost_lo;
    return z;
  }

 private:
  explicit IronedCurve(ContinuousDist dist) : dist_(std::move(dist)) {}

  ContinuousDist dist_;
  std::vector<double> q_, h_, H_, G_, g_;
  std::vector<std::size_t> segment_start_;
  std::vector<IronedInterval> intervals_;
  bool truncated_ = false;
  double effective_hi_ = 0.0;
};

struct ProcurementResult {
  std::vector<double> win_probability;
  std::vector<std::size_t> winners;  // one realization of the tie-break
  std::vector<double> ironed_virtual_costs;
  std::vector<double> expected_payments;  // filled by myerson_expected_payment
  double total_expected_payment = 0.0;
};

/// Buys from the w players with the smallest ironed virtual cost; a tied
/// group at the boundary shares the remaining slots uniformly at random.
///
/// The ironed virtual cost is nondecreasing in cost and constant exactly on
/// ironed intervals, so ranking uses IronedCurve::rank_key: ties are declared
/// only between costs in the same ironed interval, independent of grid noise.
inline ProcurementResult myerson_procure(std::span<const double> costs, std::size_t w, const IronedCurve& curve,
                                         RngStream& rng) {
  const std::size_t n = costs.size();
  detail::require(w >= 1 && w < n, "myerson_procure needs 1 <= w < n");
  ProcurementResult out;
  std::vector<double> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    keys[i] = curve.rank_key(costs[i]);
    out.ironed_virtual_costs.push_back(curve.ironed_virtual_cost(costs[i]));
  }
  std::vector<double> sorted = keys;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(w - 1), sorted.end());
  const double boundary = sorted[w - 1];
  std::size_t below = 0, tied = 0;
  for (double k : keys) {
    below += k < boundary;
    tied += k == boundary;
  }
  const double share = static_cast<double>(w - below) / static_cast<double>(tied);
  out.win_probability.assign(n, 0.0);
  std::vector<std::size_t> group;
  for (std::size_t i = 0; i < n; ++i) {
    if (keys[i] < boundary) {
      out.win_probability[i] = 1.0;
      out.winners.push_back(i);
    } else if (keys[i] == boundary) {
      out.win_probability[i] = share;
      group.push_back(i);
    }
  }
  // Partial Fisher-Yates: the first (w - below) entries are a uniform subset.
  for (std::size_t s = 0; s < w - below; ++s) {
    std::swap(group[s], group[s + rng.below(group.size() - s)]);
    out.winners.push_back(group[s]);
  }
  std::sort(out.winners.begin(), out.winners.end());
  return out;
}

namespace detail {

// Keys of all players, sorted, for evaluating one player's win probability as
// a function of their own reported cost t with everyone else fixed.
class WinProfile {
 public:
  WinProfile(std::span<const double> costs, std::size_t w, const IronedCurve& curve) : curve_(curve), w_(w) {
    keys_.reserve(costs.size());
    for (double z : costs) keys_.push_back(curve.rank_key(z));
    sorted_ = keys_;
    std::sort(sorted_.begin(), sorted_.end());
  }

  // x_i(t, v_{-i}).
  double at(std::size_t i, double t) const {
    const double kt = curve_.rank_key(t);
    const double ki = keys_[i];
    auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), kt);
    auto hi = std::upper_bound(lo, sorted_.end(), kt);
    auto below = static_cast<std::size_t>(lo - sorted_.begin());
    auto equal = static_cast<std::size_t>(hi - lo);
    if (ki < kt) --below;
    if (ki == kt) --equal;
    if (below >= w_) return 0.0;
    return std::min(1.0, static_cast<double>(w_ - below) / static_cast<double>(equal + 1));
  }

  // The w-th smallest key among the other players, or +inf if fewer exist.
  double wth_other_key(std::size_t i) const {
    auto pos = static_cast<std::size_t>(std::lower_bound(sorted_.begin(), sorted_.end(), keys_[i]) - sorted_.begin());
    const std::size_t idx = pos <= w_ - 1 ? w_ : w_ - 1;
    return idx < sorted_.size() ? sorted_[idx] : std::numeric_limits<double>::infinity();
  }

 private:
  const IronedCurve& curve_;
  std::size_t w_;
  std::vector<double> keys_;
  std::vector<double> sorted_;
};

}  // namespace detail

/// Expected payments E[p_i] = v_i x_i(v_i) + int_{v_i}^{hi} x_i(t) dt of the
/// optimal mechanism, integrating each player's win-probability profile.
///
/// The profile is piecewise constant in t with jumps only at ironed-interval
/// boundaries and where t passes the w-th smallest other player, so the
/// integral is exact over those pieces. `hi` is the support's upper end, or
/// its 1 - 1e-6 quantile when unbounded.
inline ProcurementResult myerson_expected_payment(std::span<const double> costs, std::size_t w,
                                                  const IronedCurve& curve) {
  const std::size_t n = costs.size();
  detail::require(w < n, "myerson_expected_payment needs w < n");
  ProcurementResult out;
  out.win_probability.assign(n, 0.0);
  out.expected_payments.assign(n, 0.0);
  for (double z : costs) out.ironed_virtual_costs.push_back(curve.ironed_virtual_cost(z));
  if (w == 0) return out;
  const detail::WinProfile profile(costs, w, curve);
  const double top = curve.effective_hi();
  std::vector<double> cuts;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = costs[i];
    const double x = profile.at(i, v);
    out.win_probability[i] = x;
    if (x == 0.0) continue;
    if (x == 1.0) out.winners.push_back(i);
    cuts.assign({v, top});
    for (const auto& iv : curve.intervals()) {
      cuts.push_back(iv.cost_lo);
      cuts.push_back(iv.cost_hi);
    }
    cuts.push_back(profile.wth_other_key(i));
    std::sort(cuts.begin(), cuts.end());
    double integral = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double a = std::max(cuts[k], v);
      const double b = std::min(cuts[k + 1], top);
      if (!(b > a)) continue;
      const double level = profile.at(i, 0.5 * (a + b));
      if (level == 0.0) break;  // the profile is nonincreasing
      integral += level * (b - a);
    }
    out.expected_payments[i] = v * x + integral;
    out.total_expected_payment += out.expected_payments[i];
  }
  return out;
}

/// Monte-Carlo estimate of w * E[v_(w+1)], the (w+1)-th smallest of n i.i.d.
/// costs: the envy-free benchmark.
inline Estimate envy_free_benchmark(const CostDistribution& dist, std::size_t n, std::size_t w,
                                    std::size_t replications, const RngStream& rng) {
  detail::require(w + 1 <= n, "envy-free benchmark needs w + 1 <= n");
  detail::require(replications >= 2, "need at least two replications");
  RunningStats stats;
  std::vector<double> v(n);
  RngStream s = rng;
  for (std::size_t r = 0; r < replications; ++r) {
    for (auto& x : v) x = sample_cost(dist, s);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(w), v.end());
    stats.add(static_cast<double>(w) * v[w]);
  }
  return to_estimate(stats);
}

/// Monte-Carlo estimate of the optimal BIC mechanism's total expected payment.
inline Estimate optimal_bic_benchmark(const IronedCurve& curve, std::size_t n, std::size_t w,
                                      std::size_t replications, const RngStream& rng) {
  detail::require(w < n, "optimal benchmark needs w < n");
  detail::require(replications >= 2, "need at least two replications");
  RunningStats stats;
  std::vector<double> v(n);
  RngStream s = rng;
  const CostDistribution dist = curve.dist();
  for (std::size_t r = 0; r < replications; ++r) {
    for (auto& x : v) x = sample_cost(dist, s);
    stats.add(myerson_expected_payment(v, w, curve).total_expected_payment);
  }
  return to_estimate(stats);
}

/// Total expected payment of the posted-price mechanism buying w of n units in
/// expectation (c = w / n): w * alpha on an exact quantile hit, otherwise
/// w * (alpha+ - (n c- / w)(1 - beta)(alpha+ - alpha-)).
inline double mechanism_expected_payment(const CostDistribution& dist, std::size_t n, std::size_t w) {
  detail::require(w >= 1 && w < n, "mechanism payment needs 1 <= w < n");
  const double c = static_cast<double>(w) / static_cast<double>(n);
  const QuantileResult qr = quantile(dist, c);
  const double wd = static_cast<double>(w);
  if (auto exact = std::get_if<ExactQuantile>(&qr)) return wd * exact->value;
  const auto& b = std::get<QuantileBracket>(qr);
  const double beta = (c - b.cdf_lo) / (b.cdf_hi - b.cdf_lo);
  const double alpha_lo = b.lo.value_or(0.0);
  return wd * (b.hi - static_cast<double>(n) * b.cdf_lo / wd * (1.0 - beta) * (b.hi - alpha_lo));
}

enum class BenchmarkKind { kEnvyFree, kOptimalBic };

struct ApproxRatioReport {
  BenchmarkKind kind = BenchmarkKind::kEnvyFree;
  double mechanism_payment = 0.0;
  Estimate benchmark;
  double ratio = 0.0;
  double r = 1.0;       // max b / a over ironed intervals; 1 with none
  double bound = 2.0;   // 2 or 2r
  bool applicable = true;  // false when an ironed interval starts at cost 0
  bool truncated = false;
  bool pass = false;
};

/// Ratio of the posted-price mechanism's expected payment to a benchmark:
/// the envy-free benchmark (bound 2) or the optimal BIC mechanism (bound 2r).
/// Passes when ratio <= bound * (1 + slack).
inline ApproxRatioReport approx_ratio_experiment(const CostDistribution& dist, std::size_t n, std::size_t w,
                                                 std::size_t replications, const RngStream& rng,
                                                 BenchmarkKind kind, double slack = 0.02) {
  ApproxRatioReport rep;
  rep.kind = kind;
  rep.mechanism_payment = mechanism_expected_payment(dist, n, w);
  if (kind == BenchmarkKind::kEnvyFree) {
    rep.benchmark = envy_free_benchmark(dist, n, w, replications, rng);
  } else {
    const auto* cont = std::get_if<ContinuousDist>(&dist);
    detail::require(cont != nullptr, "optimal BIC benchmark needs a continuous distribution");
    const IronedCurve curve = IronedCurve::build(*cont);
    rep.truncated = curve.truncated();
    for (const auto& iv : curve.intervals()) {
      if (!(iv.cost_lo > 0)) {
        rep.applicable = false;
        continue;
      }
      rep.r = std::max(rep.r, iv.cost_hi / iv.cost_lo);
    }
    rep.bound = 2.0 * rep.r;
    rep.benchmark = optimal_bic_benchmark(curve, n, w, replications, rng);
  }
  rep.ratio = rep.mechanism_payment / rep.benchmark.mean;
  rep.pass = rep.applicable && rep.ratio <= rep.bound * (1.0 + slack);
  return rep;
}

struct BinomialMedians {
  long long lowest;
  long long highest;
};

/// All medians of Bin(n, p) from the exact CDF: m is a median when
/// P[X <= m] >= 1/2 and P[X >= m] >= 1/2.
inline BinomialMedians binomial_medians(long long n, double p) {
  detail::require(n >= 0 && n <= 10000, "binomial median check supports 0 <= n <= 10^4");
  detail::require(p >= 0 && p <= 1, "p must lie in [0, 1]");
  if (p == 0.0) return {0, 0};
  if (p == 1.0) return {n, n};
  std::vector<long double> cdf(static_cast<std::size_t>(n + 1));
  long double acc = 0;
  const long double lp = std::log(static_cast<long double>(p));
  const long double lq = std::log1p(-static_cast<long double>(p));
  for (long long k = 0; k <= n; ++k) {
    const long double log_pmf = std::lgamma(static_cast<long double>(n + 1)) -
                                std::lgamma(static_cast<long double>(k + 1)) -
                                std::lgamma(static_cast<long double>(n - k + 1)) +
                                static_cast<long double>(k) * lp + static_cast<long double>(n - k) * lq;
    acc += std::exp(log_pmf);
    cdf[static_cast<std::size_t>(k)] = acc;
  }
  const long double total = cdf.back();
  constexpr long double kHalf = 0.5L - 1e-12L;
  auto le = [&](long long m) { return cdf[static_cast<std::size_t>(m)] / total; };
  auto ge = [&](long long m) { return m == 0 ? 1.0L : 1.0L - le(m - 1); };
  BinomialMedians out{-1, -1};
  for (long long m = 0; m <= n; ++m) {
    if (le(m) >= kHalf && ge(m) >= kHalf) {
      if (out.lowest < 0) out.lowest = m;
      out.highest = m;
    }
  }
  return out;
}

inline bool binomial_median_check(long long n, double p) {
  const auto med = binomial_medians(n, p);
  const double np = static_cast<double>(n) * p;
  const auto lo = static_cast<long long>(std::floor(np));
  const auto hi = static_cast<long long>(std::ceil(np));
  return med.lowest >= lo && med.highest <= hi;
}

struct IdentityCheck {
  Estimate payment;       // E[sum_i p_i]
  Estimate virtual_cost;  // E[sum_i phi(v_i) x_i]
  double combined_ci = 0.0;
  bool agrees = false;
};

/// Expected total payment of the optimal mechanism against its expected
/// virtual cost of the allocation, both by Monte Carlo over the same draws.
/// Needs an anti-regular distribution (no ironed intervals).
inline IdentityCheck virtual_cost_payment_identity_check(const IronedCurve& curve, std::size_t n, std::size_t w,
                                                         std::size_t replications, const RngStream& rng) {
  detail::require(curve.intervals().empty(), "payment identity check needs an anti-regular distribution");
  detail::require(w < n, "identity check needs w < n");
  detail::require(replications >= 2, "need at least two replications");
  IdentityCheck out;
  if (w == 0) {
    out.payment = {0.0, 0.0, replications};
    out.virtual_cost = {0.0, 0.0, replications};
    out.agrees = true;
    return out;
  }
  RunningStats lhs, rhs;
  std::vector<double> v(n);
  RngStream s = rng;
  const CostDistribution dist = curve.dist();
  for (std::size_t r = 0; r < replications; ++r) {
    for (auto& x : v) x = std::min(sample_cost(dist, s), curve.effective_hi());
    const auto res = myerson_expected_payment(v, w, curve);
    lhs.add(res.total_expected_payment);
    double phi_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (res.win_probability[i] > 0) phi_total += virtual_cost(curve.dist(), v[i]) * res.win_probability[i];
    }
    rhs.add(phi_total);
  }
  out.payment = to_estimate(lhs);
  out.virtual_cost = to_estimate(rhs);
  out.combined_ci = std::hypot(out.payment.ci_halfwidth, out.virtual_cost.ci_halfwidth);
  out.agrees = std::abs(out.payment.mean - out.virtual_cost.mean) <= out.combined_ci;
  return out;
}

}  // namespace dpproc
