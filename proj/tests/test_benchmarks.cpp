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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "dpproc/benchmarks.hpp"
#include "dpproc/error.hpp"

namespace dpproc {
namespace {

// Density 0.2 on [0, 0.5) and 1.8 on [0.5, 1]: the virtual cost jumps down at
// 0.5, and the single ironed interval is q in [1/15, 1/5), cost in [1/3, 5/9),
// with ironed virtual cost 2/3 (hand-derived from h(q) = 10q below q = 0.1 and
// 0.5 + (2q - 0.1)/1.8 above).
ContinuousDist kinked() { return ContinuousDist::piecewise_density({0, 0.5, 1}, {0.2, 1.8}); }

constexpr double kGridQ = 2.0 / 4096;  // interval ends land within a couple of grid cells

TEST(VirtualCost, Examples) {
  EXPECT_DOUBLE_EQ(virtual_cost(ContinuousDist::uniform(0, 1), 0.25), 0.5);
  EXPECT_DOUBLE_EQ(virtual_cost(ContinuousDist::exponential(1), 0.0), 0.0);
  const auto d = kinked();
  EXPECT_NEAR(virtual_cost(d, std::nextafter(0.5, 0.0)), 1.0, 1e-9);
  EXPECT_NEAR(virtual_cost(d, 0.5), 0.5 + 0.1 / 1.8, 1e-12);
  EXPECT_THROW(virtual_cost(ContinuousDist::uniform(0, 1), 1.5), InvalidArgument);
}

TEST(IronedCurve, UniformNeedsNoIroning) {
  const auto curve = IronedCurve::build(ContinuousDist::uniform(0, 1));
  EXPECT_TRUE(curve.intervals().empty());
  EXPECT_NEAR(curve.ironed_virtual_cost(0.25), 0.5, 1e-3);
}

TEST(IronedCurve, KinkedDensityHasOneIntervalAroundTheKink) {
  const auto curve = IronedCurve::build(kinked());
  ASSERT_EQ(curve.intervals().size(), 1u);
  const auto& iv = curve.intervals()[0];
  EXPECT_LE(iv.q_lo, 0.1);
  EXPECT_GT(iv.q_hi, 0.1);
  EXPECT_NEAR(iv.q_lo, 1.0 / 15.0, kGridQ);
  EXPECT_NEAR(iv.q_hi, 0.2, kGridQ);
  EXPECT_NEAR(iv.cost_lo, 1.0 / 3.0, 5 * kGridQ);
  EXPECT_NEAR(iv.cost_hi, 5.0 / 9.0, kGridQ);
  EXPECT_NEAR(iv.slope, 2.0 / 3.0, 1e-3);
}

TEST(IronedCurve, EnvelopeInvariants) {
  for (const auto& d : {kinked(), ContinuousDist::uniform(0, 1), ContinuousDist::exponential(1.0),
                        ContinuousDist::piecewise_density({0, 1, 2, 3}, {0.5, 0.05, 0.45})}) {
    const auto curve = IronedCurve::build(d);
    const auto& H = curve.H_values();
    const auto& G = curve.G_values();
    const auto& g = curve.g_values();
    EXPECT_EQ(G.front(), H.front());
    EXPECT_EQ(G.back(), H.back());
    for (std::size_t k = 0; k < H.size(); ++k) ASSERT_LE(G[k], H[k] + 1e-9) << d.name();
    for (std::size_t k = 1; k < g.size(); ++k) ASSERT_LE(g[k - 1], g[k] + 1e-12) << d.name();
    for (const auto& iv : curve.intervals()) {
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double q = curve.q_grid()[k];
        if (q >= iv.q_lo && q < iv.q_hi) {
          ASSERT_NEAR(g[k], iv.slope, 1e-6);
        }
      }
    }
  }
}

TEST(IronedCurve, IronedVirtualCostIsMonotoneAndFlatOnInterval) {
  const auto curve = IronedCurve::build(kinked());
  double prev = -1.0;
  for (int k = 0; k <= 1000; ++k) {
    const double v = curve.ironed_virtual_cost(k / 1000.0);
    ASSERT_GE(v, prev);
    prev = v;
  }
  EXPECT_NEAR(curve.ironed_virtual_cost(0.4), curve.ironed_virtual_cost(0.52), 1e-6);
}

TEST(IronedCurve, ZeroDensityInsideSupportIsRejected) {
  EXPECT_THROW(IronedCurve::build(ContinuousDist::piecewise_density({0, 0.5, 1}, {2.0, 0.0})), InvalidArgument);
  EXPECT_THROW(IronedCurve::build(ContinuousDist::piecewise_density({0, 0.25, 0.75, 1}, {2.0, 0.0, 2.0})),
               InvalidArgument);
}

TEST(IronedCurve, UnboundedSupportIsTruncated) {
  const auto curve = IronedCurve::build(ContinuousDist::exponential(1.0));
  EXPECT_TRUE(curve.truncated());
  EXPECT_NEAR(curve.effective_hi(), -std::log(1e-6), 1e-6);
  EXPECT_TRUE(curve.intervals().empty());
}

TEST(MyersonProcure, PicksLowestCostsWithoutIroning) {
  const auto curve = IronedCurve::build(ContinuousDist::uniform(0, 1));
  RngStream r(1);
  const std::vector<double> costs{0.2, 0.5, 0.9};
  const auto res = myerson_procure(costs, 2, curve, r);
  EXPECT_EQ(res.winners, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(res.win_probability, (std::vector<double>{1, 1, 0}));
  const auto all_but_max = myerson_procure(std::vector<double>{0.3, 0.1, 0.8, 0.4}, 3, curve, r);
  EXPECT_EQ(all_but_max.winners, (std::vector<std::size_t>{0, 1, 3}));
}

TEST(MyersonProcure, TiedIntervalSharesSlotsUniformly) {
  const auto curve = IronedCurve::build(kinked());
  const std::vector<double> costs{0.4, 0.45, 0.5};
  RngStream r(2);
  std::vector<int> wins(3, 0);
  const int trials = 30000;
  for (int t = 0; t < trials; ++t) {
    const auto res = myerson_procure(costs, 1, curve, r);
    ASSERT_EQ(res.winners.size(), 1u);
    ++wins[res.winners[0]];
    for (double p : res.win_probability) ASSERT_NEAR(p, 1.0 / 3.0, 1e-15);
  }
  for (int w : wins) EXPECT_NEAR(w / double(trials), 1.0 / 3.0, 3 * std::sqrt(2.0 / 9.0 / trials));
}

TEST(MyersonProcure, RejectsBadW) {
  const auto curve = IronedCurve::build(ContinuousDist::uniform(0, 1));
  RngStream r(1);
  const std::vector<double> costs{0.1, 0.2};
  EXPECT_THROW(myerson_procure(costs, 0, curve, r), InvalidArgument);
  EXPECT_THROW(myerson_procure(costs, 2, curve, r), InvalidArgument);
}

TEST(MyersonPayment, WinProbabilitiesSumToW) {
  const auto curve = IronedCurve::build(kinked());
  RngStream r(3);
  const CostDistribution d = kinked();
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(8);
    for (auto& x : v) x = sample_cost(d, r);
    const std::size_t w = 1 + r.below(7);
    const auto res = myerson_expected_payment(v, w, curve);
    ASSERT_NEAR(std::accumulate(res.win_probability.begin(), res.win_probability.end(), 0.0), static_cast<double>(w), 1e-12);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (res.win_probability[i] == 0) {
        ASSERT_EQ(res.expected_payments[i], 0.0);
      }
    }
  }
}

TEST(MyersonPayment, RaisingOwnCostNeverRaisesWinProbability) {
  const auto curve = IronedCurve::build(kinked());
  RngStream r(4);
  const CostDistribution d = kinked();
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(6);
    for (auto& x : v) x = sample_cost(d, r);
    const std::size_t i = r.below(6);
    const std::size_t w = 1 + r.below(5);
    const double before = myerson_expected_payment(v, w, curve).win_probability[i];
    v[i] = std::min(1.0, v[i] + 0.3 * r.uniform());
    ASSERT_LE(myerson_expected_payment(v, w, curve).win_probability[i], before);
  }
}

// Case 1: v_{w+1} outside any ironed interval; each winner is paid v_{w+1}.
TEST(MyersonPayment, CaseOneWinnersPaidNextCost) {
  const auto uniform = IronedCurve::build(ContinuousDist::uniform(0, 1));
  const auto res = myerson_expected_payment(std::vector<double>{0.2, 0.5, 0.9}, 2, uniform);
  EXPECT_NEAR(res.expected_payments[0], 0.9, 1e-6);
  EXPECT_NEAR(res.expected_payments[1], 0.9, 1e-6);
  EXPECT_EQ(res.expected_payments[2], 0.0);
  EXPECT_NEAR(res.total_expected_payment, 1.8, 1e-6);

  const auto curve = IronedCurve::build(kinked());
  const auto k = myerson_expected_payment(std::vector<double>{0.1, 0.2, 0.7, 0.9}, 2, curve);
  EXPECT_NEAR(k.expected_payments[0], 0.7, 1e-6);
  EXPECT_NEAR(k.expected_payments[1], 0.7, 1e-6);
}

// Case 2: v_w < a <= v_{w+1} < b; winners are paid a + (b - a) / (l2 + 1) >= a.
TEST(MyersonPayment, CaseTwoWinnersPaidAtLeastA) {
  const auto curve = IronedCurve::build(kinked());
  const double a = curve.intervals()[0].cost_lo, b = curve.intervals()[0].cost_hi;
  const std::vector<double> v{0.1, 0.2, 0.4, 0.5, 0.9};
  const auto res = myerson_expected_payment(v, 2, curve);
  const double l2 = 2;
  for (std::size_t i : {0, 1}) {
    EXPECT_NEAR(res.expected_payments[i], a + (b - a) / (l2 + 1), 1e-6);
    EXPECT_GE(res.expected_payments[i], a);
  }
}

// Case 3: v_w and v_{w+1} share the interval; each of the l2 tied players
// wins with probability (w - l1) / l2 and is paid b (w - l1) / l2.
TEST(MyersonPayment, CaseThreeTiedGroupPaidBTimesShare) {
  const auto curve = IronedCurve::build(kinked());
  const double b = curve.intervals()[0].cost_hi;
  const std::vector<double> v{0.1, 0.4, 0.45, 0.5, 0.9};
  const auto res = myerson_expected_payment(v, 2, curve);
  const double l1 = 1, l2 = 3, w = 2;
  for (std::size_t i : {1, 2, 3}) {
    EXPECT_NEAR(res.win_probability[i], (w - l1) / l2, 1e-15);
    EXPECT_NEAR(res.expected_payments[i], b * (w - l1) / l2, 1e-6);
  }
}

// Brute force: integrate the allocation rule itself on a fine grid.
TEST(MyersonPayment, MatchesRiemannSumOfAllocationRule) {
  const auto curve = IronedCurve::build(kinked());
  RngStream r(5);
  const CostDistribution d = kinked();
  for (int t = 0; t < 20; ++t) {
    std::vector<double> v(5);
    for (auto& x : v) x = sample_cost(d, r);
    const std::size_t w = 1 + r.below(4);
    const auto res = myerson_expected_payment(v, w, curve);
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto x_at = [&](double z) {
        std::vector<double> u = v;
        u[i] = z;
        RngStream dummy(0);
        return myerson_procure(u, w, curve, dummy).win_probability[i];
      };
      const int steps = 20000;
      const double h = (1.0 - v[i]) / steps;
      double integral = 0.0;
      for (int s = 0; s < steps; ++s) integral += x_at(v[i] + (s + 0.5) * h) * h;
      ASSERT_NEAR(res.expected_payments[i], v[i] * x_at(v[i]) + integral, 2e-4);
    }
  }
}

TEST(EnvyFreeBenchmark, UniformSecondOfThree) {
  const auto e = envy_free_benchmark(ContinuousDist::uniform(0, 1), 3, 1, 100000, RngStream(6));
  EXPECT_NEAR(e.mean, 2.0 / 4.0, e.ci_halfwidth);
}

TEST(EnvyFreeBenchmark, DegenerateIsExact) {
  const auto e = envy_free_benchmark(DiscreteDist::degenerate(0.7), 10, 9, 100, RngStream(7));
  EXPECT_DOUBLE_EQ(e.mean, 9 * 0.7);
  EXPECT_EQ(e.ci_halfwidth, 0.0);
}

// E of the (w+1)-th smallest of n Exp(1) draws is sum_{k=0}^{w} 1/(n-k).
TEST(EnvyFreeBenchmark, ExponentialOrderStatistic) {
  const std::size_t n = 10, w = 3;
  double expected = 0.0;
  for (std::size_t k = 0; k <= w; ++k) expected += 1.0 / static_cast<double>(n - k);
  const auto e = envy_free_benchmark(ContinuousDist::exponential(1.0), n, w, 100000, RngStream(8));
  EXPECT_NEAR(e.mean, w * expected, e.ci_halfwidth);
}

TEST(MechanismPayment, ContinuousIsWTimesQuantile) {
  EXPECT_NEAR(mechanism_expected_payment(ContinuousDist::uniform(0, 1), 3, 1), 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(mechanism_expected_payment(DiscreteDist::degenerate(0.7), 10, 4), 0.0 + 4 * 0.7);
}

// Independent route: n * [(1 - beta) c- alpha- + beta c+ alpha+].
TEST(MechanismPayment, DiscreteMatchesAcceptanceWeightedSum) {
  const CostDistribution d = DiscreteDist({0, 2}, {0.5, 0.5});
  EXPECT_DOUBLE_EQ(mechanism_expected_payment(d, 10, 5), 0.0);
  const double beta = (0.7 - 0.5) / (1.0 - 0.5);
  const double oracle = 10 * ((1 - beta) * 0.5 * 0.0 + beta * 1.0 * 2.0);
  EXPECT_NEAR(mechanism_expected_payment(d, 10, 7), oracle, 1e-12);
  const CostDistribution three = DiscreteDist({1, 2, 4}, {0.2, 0.3, 0.5});
  const double b3 = (0.6 - 0.5) / (1.0 - 0.5);
  EXPECT_NEAR(mechanism_expected_payment(three, 20, 12), 20 * ((1 - b3) * 0.5 * 2 + b3 * 1.0 * 4), 1e-12);
}

TEST(ApproxRatio, UniformEnvyFreeNearOne) {
  const auto rep = approx_ratio_experiment(ContinuousDist::uniform(0, 1), 100, 50, 20000, RngStream(9),
                                           BenchmarkKind::kEnvyFree);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.bound, 2.0);
  EXPECT_NEAR(rep.ratio, 0.5 / (51.0 / 101.0), 0.01);
}

TEST(ApproxRatio, KinkedOptimalWithinTwoR) {
  const auto rep = approx_ratio_experiment(kinked(), 20, 10, 5000, RngStream(10), BenchmarkKind::kOptimalBic);
  EXPECT_TRUE(rep.applicable);
  EXPECT_NEAR(rep.r, 5.0 / 3.0, 0.01);
  EXPECT_TRUE(rep.pass) << rep.ratio;
}

TEST(BinomialMedian, Examples) {
  const auto m = binomial_medians(4, 0.5);
  EXPECT_EQ(m.lowest, 2);
  EXPECT_EQ(m.highest, 2);
  EXPECT_EQ(binomial_medians(17, 0.0).lowest, 0);
  EXPECT_TRUE(binomial_median_check(4, 0.5));
  // Bin(1, 1/2) has every point of [0, 1] as a median.
  EXPECT_EQ(binomial_medians(1, 0.5).lowest, 0);
  EXPECT_EQ(binomial_medians(1, 0.5).highest, 1);
}

TEST(BinomialMedian, SweepHolds) {
  for (long long n = 0; n <= 30; ++n) {
    for (int k = 1; k <= 9; ++k) EXPECT_TRUE(binomial_median_check(n, k / 10.0)) << n << " " << k;
  }
}

TEST(PaymentIdentity, UniformAgrees) {
  const auto curve = IronedCurve::build(ContinuousDist::uniform(0, 1));
  const auto res = virtual_cost_payment_identity_check(curve, 5, 2, 100000, RngStream(12));
  EXPECT_TRUE(res.agrees) << res.payment.mean << " vs " << res.virtual_cost.mean;
}

TEST(PaymentIdentity, ExponentialAgrees) {
  const auto curve = IronedCurve::build(ContinuousDist::exponential(1.0));
  const auto res = virtual_cost_payment_identity_check(curve, 5, 2, 100000, RngStream(13));
  EXPECT_TRUE(res.agrees) << res.payment.mean << " vs " << res.virtual_cost.mean;
}

TEST(PaymentIdentity, NoPurchaseMeansBothSidesZero) {
  const auto curve = IronedCurve::build(ContinuousDist::uniform(0, 1));
  const auto res = virtual_cost_payment_identity_check(curve, 5, 0, 100, RngStream(14));
  EXPECT_EQ(res.payment.mean, 0.0);
  EXPECT_EQ(res.virtual_cost.mean, 0.0);
  EXPECT_TRUE(res.agrees);
}

TEST(PaymentIdentity, RequiresAntiRegularDistribution) {
  const auto curve = IronedCurve::build(kinked());
  EXPECT_THROW(virtual_cost_payment_identity_check(curve, 5, 2, 100, RngStream(15)), InvalidArgument);
}

}  // namespace
}  // namespace dpproc
