#include "oracles.hpp"

#include <gtest/gtest.h>

// The reference implementations get a few direct checks of their own so that
// a bug in an oracle cannot hide behind the equivalence tests that use it.

TEST(NaiveAttention, EqualLogitsGiveUniformWeights) {
  int n = 1, L = 3, dk = 2, c = 2;
  std::vector<double> q(static_cast<size_t>(L) * dk, 0.0);  // zero queries: all logits equal
  std::vector<double> k = {0.4, -0.2, 1.0, 0.3, -0.7, 0.9};
  std::vector<double> v = {1.0, 0.0, 0.0, 1.0, 1.0, 1.0};
  std::vector<double> bias(L, 0.0);
  oracle::AttentionResult r = oracle::naive_attention(q, k, v, bias, n, L, dk, c, 1.0);
  for (double w : r.weights) EXPECT_DOUBLE_EQ(w, 1.0 / 3.0);
  for (int row = 0; row < L; ++row) {
    EXPECT_DOUBLE_EQ(r.delta[static_cast<size_t>(row) * c], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.delta[static_cast<size_t>(row) * c + 1], 2.0 / 3.0);
  }
}

TEST(NaiveAttention, SingleKeyTakesAllWeightRegardlessOfBias) {
  std::vector<double> q = {0.83};
  std::vector<double> k = {-1.7};
  std::vector<double> v = {3.25, -0.5};
  for (double bias : {-40.0, 0.0, 13.5}) {
    oracle::AttentionResult r = oracle::naive_attention(q, k, v, {bias}, 1, 1, 1, 2, 1.0);
    EXPECT_EQ(r.weights[0], 1.0);
    EXPECT_EQ(r.delta[0], 3.25);
    EXPECT_EQ(r.delta[1], -0.5);
  }
}

TEST(FiniteDiff, QuadraticIsExactUpToRounding) {
  std::vector<double> p = {3.0};
  auto eval = [&]() { return p[0] * p[0]; };
  std::vector<std::vector<double>> g = oracle::finite_diff_grad(eval, {&p});
  EXPECT_NEAR(g[0][0], 6.0, 1e-7);
  EXPECT_EQ(p[0], 3.0);  // the probe restores what it touched
}

TEST(FiniteDiff, ConstantFunctionHasZeroGradient) {
  std::vector<double> p = {1.0, -2.0, 0.5};
  auto eval = []() { return 42.0; };
  std::vector<std::vector<double>> g = oracle::finite_diff_grad(eval, {&p});
  for (double v : g[0]) EXPECT_EQ(v, 0.0);
}

TEST(NaiveBilinear, IdentityShapeCopiesExactly) {
  std::vector<double> src = {0.1, -0.7, 2.0, 0.25, 1.5, -3.0};
  std::vector<double> out = oracle::naive_bilinear(src, 2, 3, 2, 3);
  for (size_t i = 0; i < src.size(); ++i) EXPECT_EQ(out[i], src[i]);
}

TEST(NaiveBilinear, ConstantFieldStaysConstant) {
  std::vector<double> src(9, 0.7);
  std::vector<double> out = oracle::naive_bilinear(src, 3, 3, 5, 4);
  for (double v : out) EXPECT_DOUBLE_EQ(v, 0.7);
}

TEST(NaiveBilinear, TwoByTwoAveragesToSinglePixel) {
  std::vector<double> out = oracle::naive_bilinear({1.0, 2.0, 3.0, 4.0}, 2, 2, 1, 1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], 2.5);
}
