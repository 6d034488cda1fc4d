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
#include <limits>
#include <random>

#include "asymoe/errors.hpp"
#include "asymoe/gradcheck.hpp"
#include "asymoe/tensor.hpp"

namespace asymoe {
namespace {

TEST(Matmul, IdentityLeavesColumnUnchanged) {
  const Tensor b = Tensor::matrix({{3}, {4}});
  EXPECT_EQ(matmul(Tensor::identity(2), b), b);
}

TEST(Matmul, ZeroColumnGivesZero) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(a, Tensor::matrix({{0}, {0}})), Tensor::matrix({{0}, {0}}));
}

TEST(Matmul, HandArithmetic) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(a, Tensor::matrix({{5}, {6}})), Tensor::matrix({{17}, {39}}));
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros(2, 3), Tensor::zeros(2, 3)), DimensionError);
}

TEST(Matmul, AssociativeOnSmallIntegers) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> d(-9, 9);
  for (int trial = 0; trial < 50; ++trial) {
    auto draw = [&](std::size_t r, std::size_t c) {
      Tensor t(Shape{r, c});
      for (double& v : t.values()) v = d(rng);
      return t;
    };
    const Tensor a = draw(3, 4), b = draw(4, 2), c = draw(2, 5);
    EXPECT_EQ(matmul(matmul(a, b), c), matmul(a, matmul(b, c)));
  }
}

TEST(Matmul, TransposedVariantsAgree) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor a(Shape{3, 4}), b(Shape{3, 5}), c(Shape{6, 4});
  for (Tensor* t : {&a, &b, &c})
    for (double& v : t->values()) v = u(rng);
  EXPECT_EQ(matmul_tn(a, b), matmul(transpose(a), b));
  EXPECT_EQ(matmul_nt(a, c), matmul(a, transpose(c)));
}

TEST(Softmax, ZerosGiveUniform) {
  const Tensor p = softmax(Tensor::vector({0, 0, 0}), 0);
  for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Softmax, SingleLogitIsOne) {
  EXPECT_EQ(softmax(Tensor::vector({-41.5}), 0)[0], 1.0);
}

TEST(Softmax, LogTwoClosedForm) {
  const Tensor p = softmax(Tensor::vector({std::log(2.0), 0.0}), 0);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, EmptyAxisThrows) {
  EXPECT_THROW(softmax(Tensor(Shape{0}), 0), DegenerateInputError);
}

TEST(Softmax, SumsToOneAcrossMagnitudes) {
  std::mt19937_64 rng(3);
  for (double scale : {1e-3, 1e-1, 1.0, 10.0, 1e2, 1e3}) {
    std::normal_distribution<double> n(0.0, scale);
    Tensor v(Shape{4, 7});
    for (double& x : v.values()) x = n(rng);
    const Tensor p = softmax(v, 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (double x : p.row(r)) {
        EXPECT_GE(x, 0.0);
        s += x;
      }
      EXPECT_NEAR(s, 1.0, 1e-12) << "scale " << scale;
    }
  }
}

TEST(Softmax, ShiftInvariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor v(Shape{1, 6});
    for (double& x : v.values()) x = u(rng);
    const double c = u(rng) * 20.0;
    Tensor shifted = v;
    for (double& x : shifted.values()) x += c;
    const Tensor a = softmax(v, 1), b = softmax(shifted, 1);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(Relu, Definition) {
  EXPECT_EQ(relu(Tensor::vector({-1, 0, 2})), Tensor::vector({0, 0, 2}));
  EXPECT_EQ(relu(Tensor::vector({-3, -0.5})), Tensor::vector({0, 0}));
  const Tensor pos = Tensor::vector({0, 1.5, 7});
  EXPECT_EQ(relu(pos), pos);
}

TEST(Cosine, SelfSimilarityIsOne) {
  const Tensor x = Tensor::vector({0.3, -2.0, 5.0});
  EXPECT_NEAR(cosine_similarity(x.values(), x.values()), 1.0, 1e-15);
}

TEST(Cosine, OrthogonalIsZero) {
  EXPECT_EQ(cosine_similarity(Tensor::vector({1, 0}).values(), Tensor::vector({0, 1}).values()), 0.0);
}

TEST(Cosine, DiagonalClosedForm) {
  EXPECT_NEAR(cosine_similarity(Tensor::vector({1, 0}).values(), Tensor::vector({1, 1}).values()),
              1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Cosine, ZeroVectorThrows) {
  EXPECT_THROW(
      cosine_similarity(Tensor::vector({0, 0}).values(), Tensor::vector({1, 1}).values()),
      DegenerateInputError);
}

TEST(Cosine, StaysInRange) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    Tensor x(Shape{3}), w(Shape{3});
    for (double& v : x.values()) v = n(rng);
    w = x * (1.0 + 1e-9 * n(rng));
    const double c = cosine_similarity(x.values(), w.values());
    EXPECT_LE(c, 1.0);
    EXPECT_GE(c, -1.0);
  }
}

TEST(TensorConstruction, RejectsNonFinite) {
  EXPECT_THROW(Tensor(Shape{2}, {1.0, std::numeric_limits<double>::quiet_NaN()}), NumericError);
  EXPECT_THROW(Tensor(Shape{1}, {std::numeric_limits<double>::infinity()}), NumericError);
  EXPECT_THROW(Tensor(Shape{3}, {1.0, 2.0}), DimensionError);
}

TEST(LayerNorm, RowsHaveZeroMeanUnitVariance) {
  const LayerNormResult r = layer_norm_rows(Tensor::matrix({{1, 2, 3, 4}, {-5, 0, 5, 10}}));
  for (std::size_t i = 0; i < 2; ++i) {
    double mean = 0.0, var = 0.0;
    for (double v : r.out.row(i)) mean += v / 4.0;
    for (double v : r.out.row(i)) var += (v - mean) * (v - mean) / 4.0;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(FiniteDifference, SquareAtThree) {
  const Tensor g = finite_difference_gradient(
      [](const Tensor& t) { return t[0] * t[0]; }, Tensor::vector({3.0}));
  EXPECT_NEAR(g[0], 6.0, 1e-8);
}

TEST(FiniteDifference, ConstantGivesZero) {
  const Tensor g =
      finite_difference_gradient([](const Tensor&) { return 4.2; }, Tensor::vector({1, 2, 3}));
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDifference, LinearGivesCoefficients) {
  const Tensor a = Tensor::vector({2.0, -3.0, 0.5});
  const Tensor g = finite_difference_gradient([&](const Tensor& t) { return dot(a.values(), t.values()); },
                                              Tensor::vector({0.1, 0.2, 0.3}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], a[i], 1e-9);
}

TEST(FiniteDifference, NonFiniteValueThrows) {
  EXPECT_THROW(finite_difference_gradient([](const Tensor& t) { return std::log(t[0]); },
                                          Tensor::vector({0.0})),
               NumericError);
}

TEST(FiniteDifference, ConfigValidated) {
  GradCheckConfig c;
  c.epsilon = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.epsilon = 1e-5;
  c.tolerance = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(FiniteDifference, CosineBackwardMatchesOracle) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x(Shape{5}), w(Shape{5});
    for (double& v : x.values()) v = u(rng);
    for (double& v : w.values()) v = u(rng);
    const CosineGradient g = cosine_similarity_backward(x.values(), w.values(), 1.0);
    const GradCheckResult rx = check_gradient(
        "x", [&](const Tensor& t) { return cosine_similarity(t.values(), w.values()); }, x,
        Tensor(Shape{5}, g.dx));
    const GradCheckResult rw = check_gradient(
        "w", [&](const Tensor& t) { return cosine_similarity(x.values(), t.values()); }, w,
        Tensor(Shape{5}, g.dw));
    EXPECT_TRUE(rx.passed) << rx.max_relative_error;
    EXPECT_TRUE(rw.passed) << rw.max_relative_error;
  }
}

TEST(FiniteDifference, LayerNormBackwardMatchesOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x(Shape{3, 4}), r(Shape{3, 4});
    for (double& v : x.values()) v = u(rng);
    for (double& v : r.values()) v = u(rng);
    const Tensor analytic = layer_norm_rows_backward(r, layer_norm_rows(x));
    const GradCheckResult res = check_gradient(
        "ln", [&](const Tensor& t) { return dot(r.values(), layer_norm_rows(t).out.values()); }, x,
        analytic);
    EXPECT_TRUE(res.passed) << res.max_relative_error;
  }
}

TEST(RelativeError, FloorTreatsTinyGradientsAsEqual) {
  EXPECT_LE(relative_error(Tensor::vector({1e-14}), Tensor::vector({-1e-14})), 1e-5);
  EXPECT_NEAR(relative_error(Tensor::vector({1.0, 2.0}), Tensor::vector({1.0, 2.2})), 0.2 / 2.2, 1e-12);
}

}  // namespace
}  // namespace asymoe
