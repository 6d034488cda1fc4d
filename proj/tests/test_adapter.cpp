// Copyright 2026 The asymoe Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "asymoe/adapter.hpp"
#include "asymoe/errors.hpp"
#include "asymoe/gradcheck.hpp"
#include "asymoe/rank.hpp"

namespace asymoe {
namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

AdapterParams random_params(const AdapterShape& s, Orientation o, std::mt19937_64& rng) {
  AdapterParams p = AdapterParams::zeros(s, o, 1.0);
  for (Tensor& d : p.down) d = random_tensor(d.shape(), rng);
  for (Tensor& u : p.up) u = random_tensor(u.shape(), rng);
  p.router = random_tensor(p.router.shape(), rng);
  return p;
}

TEST(RouterGates, ZeroRouterIsUniform) {
  std::mt19937_64 rng(1);
  const Tensor g = router_gates(random_tensor({4, 6}, rng), Tensor(Shape{6, 3}));
  for (double v : g.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(RouterGates, SingleExpertIsOne) {
  std::mt19937_64 rng(2);
  const Tensor g = router_gates(random_tensor({5, 4}, rng), random_tensor({4, 1}, rng));
  for (double v : g.values()) EXPECT_EQ(v, 1.0);
}

TEST(RouterGates, HandCase) {
  const Tensor z = Tensor::matrix({{std::log(2.0), 17.0}});
  const Tensor g = router_gates(z, Tensor::matrix({{1, 0}, {0, 0}}));
  EXPECT_NEAR(g(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(g(0, 1), 1.0 / 3.0, 1e-15);
}

TEST(RouterGates, WidthMismatchThrows) {
  EXPECT_THROW(router_gates(Tensor::zeros(2, 3), Tensor::zeros(4, 2)), DimensionError);
}

TEST(RouterGates, RowsSumToOne) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor g = router_gates(random_tensor({3, 8}, rng, -5, 5), random_tensor({8, 4}, rng, -5, 5));
    GateTensor t(1, 1, 3, 4);
    t.set(0, 0, g);
    EXPECT_NO_THROW(t.validate(1e-9));
  }
}

TEST(AdapterForward, HandCase) {
  AdapterParams p = AdapterParams::zeros({2, 1, 2}, Orientation::OneDownManyUps, 1.0);
  p.down[0] = Tensor::matrix({{1}, {0}});
  p.up[0] = Tensor::matrix({{1, 0}});
  p.up[1] = Tensor::matrix({{0, 1}});
  const AdapterOutput out = adapter_forward(Tensor::matrix({{2, 5}}), p);
  EXPECT_EQ(out.delta, Tensor::matrix({{1, 1}}));
}

TEST(AdapterForward, ZeroUpGivesZeroDelta) {
  std::mt19937_64 rng(4);
  AdapterParams p = random_params({8, 3, 4}, Orientation::OneDownManyUps, rng);
  for (Tensor& u : p.up) u.fill(0.0);
  const AdapterOutput out = adapter_forward(random_tensor({5, 8}, rng, -10, 10), p);
  for (double v : out.delta.values()) EXPECT_EQ(v, 0.0);
}

TEST(AdapterForward, DeadActivationGivesZeroDelta) {
  AdapterParams p = AdapterParams::zeros({3, 1, 1}, Orientation::OneDownManyUps, 1.0);
  p.down[0] = Tensor::matrix({{1}, {1}, {1}});
  p.up[0] = Tensor::matrix({{4, 5, 6}});
  const AdapterOutput out = adapter_forward(Tensor::matrix({{-1, -2, -3}}), p);
  for (double v : out.delta.values()) EXPECT_EQ(v, 0.0);
}

TEST(AdapterForward, WrongOrientationThrows) {
  const AdapterParams a = AdapterParams::zeros({4, 2, 2}, Orientation::OneDownManyUps, 1.0);
  const AdapterParams b = AdapterParams::zeros({4, 2, 2}, Orientation::ManyDownsOneUp, 1.0);
  EXPECT_THROW(inverted_forward(Tensor::zeros(1, 4), a), UsageError);
  EXPECT_THROW(adapter_forward(Tensor::zeros(1, 4), b), UsageError);
}

TEST(AdapterForward, HomogeneousInUpScale) {
  std::mt19937_64 rng(5);
  for (Orientation o : {Orientation::OneDownManyUps, Orientation::ManyDownsOneUp}) {
    AdapterParams p = random_params({6, 2, 3}, o, rng);
    const Tensor z = random_tensor({4, 6}, rng);
    const AdapterOutput a = forward(z, p);
    for (Tensor& u : p.up) u *= 2.0;
    const AdapterOutput b = forward(z, p);
    EXPECT_EQ(b.delta, a.delta * 2.0);
    EXPECT_EQ(b.gates, a.gates);
  }
}

TEST(AdapterShape, RejectsDegenerate) {
  EXPECT_THROW((AdapterShape{4, 0, 2}.validate()), ConfigError);
  EXPECT_THROW((AdapterShape{4, 2, 0}.validate()), ConfigError);
  EXPECT_THROW((AdapterShape{4, 4, 2}.validate()), ConfigError);
  EXPECT_NO_THROW((AdapterShape{4, 3, 1}.validate()));
}

TEST(AdapterInit, ZeroUpBoundedDown) {
  std::mt19937_64 rng(6);
  const AdapterParams p = init_adapter({16, 4, 3}, Orientation::OneDownManyUps, 0.001, rng);
  for (const Tensor& u : p.up) EXPECT_EQ(max_abs(u), 0.0);
  EXPECT_LE(max_abs(p.down[0]), 0.25);
  EXPECT_LE(max_abs(p.router), 0.25);
  EXPECT_GT(max_abs(p.router), 0.0);
  EXPECT_EQ(p.alpha, 0.001);
}

TEST(InvertedForward, HandCase) {
  AdapterParams p = AdapterParams::zeros({2, 1, 2}, Orientation::ManyDownsOneUp, 1.0);
  p.down[0] = Tensor::matrix({{1}, {0}});
  p.down[1] = Tensor::matrix({{0}, {1}});
  p.up[0] = Tensor::matrix({{1, 1}});
  // Uniform gates: Z_agg = 0.5·2 + 0.5·5 = 3.5, delta = 3.5·(1, 1).
  const AdapterOutput out = inverted_forward(Tensor::matrix({{2, 5}}), p);
  EXPECT_EQ(out.delta, Tensor::matrix({{3.5, 3.5}}));
}

TEST(InvertedForward, ZeroDownGivesZeroDelta) {
  std::mt19937_64 rng(7);
  AdapterParams p = random_params({5, 2, 3}, Orientation::ManyDownsOneUp, rng);
  for (Tensor& d : p.down) d.fill(0.0);
  const AdapterOutput out = inverted_forward(random_tensor({3, 5}, rng), p);
  for (double v : out.delta.values()) EXPECT_EQ(v, 0.0);
}

TEST(InvertedForward, MatchesStandardAtOneExpert) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    AdapterParams a = random_params({6, 3, 1}, Orientation::OneDownManyUps, rng);
    AdapterParams b = AdapterParams::zeros({6, 3, 1}, Orientation::ManyDownsOneUp, 1.0);
    b.down = a.down;
    b.up = a.up;
    b.router = a.router;
    const Tensor z = random_tensor({4, 6}, rng);
    const Tensor da = adapter_forward(z, a).delta, db = inverted_forward(z, b).delta;
    for (std::size_t i = 0; i < da.size(); ++i) EXPECT_NEAR(da[i], db[i], 1e-14);
  }
}

TEST(AdapterBackward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(9);
  for (Orientation o : {Orientation::OneDownManyUps, Orientation::ManyDownsOneUp}) {
    const AdapterParams p = random_params({4, 2, 3}, o, rng);
    const AdapterOutput out = forward(random_tensor({3, 4}, rng), p);
    const AdapterGrads g = adapter_backward(Tensor(Shape{3, 4}), Tensor(), out.cache, p);
    for (const Tensor& t : g.down) EXPECT_EQ(max_abs(t), 0.0);
    for (const Tensor& t : g.up) EXPECT_EQ(max_abs(t), 0.0);
    EXPECT_EQ(max_abs(g.router), 0.0);
    EXPECT_EQ(max_abs(g.input), 0.0);
  }
}

TEST(AdapterBackward, MissingCacheThrows) {
  const AdapterParams p = AdapterParams::zeros({4, 2, 2}, Orientation::OneDownManyUps, 1.0);
  EXPECT_THROW(adapter_backward(Tensor::zeros(1, 4), Tensor(), AdapterCache{}, p), UsageError);
}

TEST(AdapterBackward, MatchesFiniteDifferencesOnSmallInstance) {
  std::mt19937_64 rng(10);
  for (Orientation o : {Orientation::OneDownManyUps, Orientation::ManyDownsOneUp}) {
    for (int trial = 0; trial < 20; ++trial) {
      AdapterParams p = random_params({3, 2, 2}, o, rng);
      Tensor z = random_tensor({2, 3}, rng);
      const Tensor r = random_tensor({2, 3}, rng);
      auto loss = [&] { return dot(r.values(), forward(z, p).delta.values()); };
      const AdapterGrads g = adapter_backward(r, Tensor(), forward(z, p).cache, p);
      auto check = [&](Tensor& slot, const Tensor& analytic) {
        const GradCheckResult res = check_gradient(
            "block",
            [&](const Tensor& t) {
              const Tensor saved = slot;
              slot = t;
              const double v = loss();
              slot = saved;
              return v;
            },
            slot, analytic);
        EXPECT_TRUE(res.passed) << to_string(o) << " " << res.max_relative_error;
      };
      for (std::size_t k = 0; k < p.down.size(); ++k) check(p.down[k], g.down[k]);
      for (std::size_t k = 0; k < p.up.size(); ++k) check(p.up[k], g.up[k]);
      check(p.router, g.router);
      check(z, g.input);
    }
  }
}

TEST(AdapterBackward, InvertedBranchGradientsFollowGates) {
  // Gates (0.25, 0.75) for a single token: logits (0, ln 3).
  AdapterParams p = AdapterParams::zeros({3, 2, 2}, Orientation::ManyDownsOneUp, 1.0);
  p.router = Tensor::matrix({{0, std::log(3.0)}, {0, 0}, {0, 0}});
  p.down[0] = Tensor::matrix({{1, 0.5}, {0.2, 1}, {0, 0}});
  p.down[1] = Tensor::matrix({{0.3, 1}, {1, 0.1}, {0, 0}});
  p.up[0] = Tensor::matrix({{1, -2, 0.5}, {0.7, 0.3, -1}});
  const AdapterOutput out = inverted_forward(Tensor::matrix({{1, 0, 0}}), p);
  ASSERT_NEAR(out.gates(0, 0), 0.25, 1e-15);
  ASSERT_NEAR(out.gates(0, 1), 0.75, 1e-15);
  const AdapterGrads g = adapter_backward(Tensor::matrix({{0.4, -1.1, 2.0}}), Tensor(), out.cache, p);
  EXPECT_NEAR(l2_norm(g.branch[1]) / l2_norm(g.branch[0]), 3.0, 1e-12);
}

TEST(AdapterBackward, GradientFractionIdentity) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const AdapterParams p = random_params({6, 2, 4}, Orientation::ManyDownsOneUp, rng);
    const AdapterOutput out = forward(random_tensor({3, 6}, rng), p);
    const AdapterGrads g = adapter_backward(random_tensor({3, 6}, rng), Tensor(), out.cache, p);
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t j = 0; j < 2; ++j)
          EXPECT_NEAR(g.branch[k](t, j), out.gates(t, k) * g.aggregate(t, j), 1e-10);
  }
}

TEST(GateTensorTest, ValidateRejectsBadRows) {
  GateTensor g(1, 1, 1, 2);
  g.at(0, 0, 0, 0) = 0.7;
  g.at(0, 0, 0, 1) = 0.2;
  EXPECT_THROW(g.validate(), NumericError);
  g.at(0, 0, 0, 1) = 0.3;
  EXPECT_NO_THROW(g.validate());
  g.at(0, 0, 0, 0) = 1.1;
  g.at(0, 0, 0, 1) = -0.1;
  EXPECT_THROW(g.validate(), NumericError);
}

// Rank oracle: modified Gram-Schmidt with row pivoting, independent of the SVD.
std::size_t gram_schmidt_rank(std::vector<std::vector<double>> rows, double rel) {
  double scale = 0.0;
  for (const auto& r : rows) {
    double n = 0.0;
    for (double v : r) n += v * v;
    scale = std::max(scale, std::sqrt(n));
  }
  if (scale == 0.0) return 0;
  std::size_t rank = 0;
  while (!rows.empty()) {
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double n = 0.0;
      for (double v : rows[i]) n += v * v;
      if (n > best_norm) best_norm = n, best = i;
    }
    best_norm = std::sqrt(best_norm);
    if (best_norm <= rel * scale) break;
    std::vector<double> q = rows[best];
    for (double& v : q) v /= best_norm;
    rows.erase(rows.begin() + static_cast<std::ptrdiff_t>(best));
    for (auto& r : rows) {
      double d = 0.0;
      for (std::size_t j = 0; j < q.size(); ++j) d += r[j] * q[j];
      for (std::size_t j = 0; j < q.size(); ++j) r[j] -= d * q[j];
    }
    ++rank;
  }
  return rank;
}

TEST(OutputSpanRank, AgreesWithGramSchmidtOracle) {
  std::mt19937_64 rng(12);
  for (Orientation o : {Orientation::OneDownManyUps, Orientation::ManyDownsOneUp}) {
    for (int trial = 0; trial < 20; ++trial) {
      AdapterParams p = random_params({16, 2, 3}, o, rng);
      p.router *= 4.0;
      std::normal_distribution<double> n(0.0, 1.0);
      Tensor probes(Shape{32, 16});
      for (double& v : probes.values()) v = n(rng);
      std::vector<std::vector<double>> deltas;
      for (std::size_t i = 0; i < 32; ++i) {
        Tensor z(Shape{1, 16});
        std::copy(probes.row(i).begin(), probes.row(i).end(), z.row(0).begin());
        const Tensor d = forward(z, p).delta;
        deltas.emplace_back(d.values().begin(), d.values().end());
      }
      EXPECT_EQ(output_span_rank(p, probes), gram_schmidt_rank(deltas, 1e-8)) << to_string(o);
    }
  }
}

TEST(OutputSpanRank, ZeroUpIsRankZero) {
  RankTrialConfig cfg;
  cfg.zero_up = true;
  const RankComparison r = compare_orientation_ranks(cfg, 3);
  EXPECT_EQ(r.one_down_many_ups, 0u);
  EXPECT_EQ(r.many_downs_one_up, 0u);
}

TEST(OutputSpanRank, TooFewProbesThrows) {
  std::mt19937_64 rng(13);
  const AdapterParams p = random_params({8, 2, 2}, Orientation::OneDownManyUps, rng);
  EXPECT_THROW(output_span_rank(p, Tensor(Shape{7, 8})), UsageError);
}

TEST(OutputSpanRank, OrientationsBoundedAsExpected) {
  RankTrialConfig cfg;  // d_h=16, r=2, n=3
  std::size_t six = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RankComparison r = compare_orientation_ranks(cfg, seed);
    EXPECT_LE(r.one_down_many_ups, 6u);
    EXPECT_LE(r.many_downs_one_up, 2u);
    six += r.one_down_many_ups == 6;
  }
  EXPECT_GE(six, 45u);
}

TEST(OutputSpanRank, SingleExpertOrientationsAgree) {
  RankTrialConfig cfg;
  cfg.shape = {16, 2, 1};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RankComparison r = compare_orientation_ranks(cfg, seed);
    EXPECT_EQ(r.one_down_many_ups, r.many_downs_one_up);
  }
}

}  // namespace
}  // namespace asymoe
