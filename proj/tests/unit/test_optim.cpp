#include <gtest/gtest.h>

#include <cmath>

#include "cdee/optim.hpp"

using namespace cdee;

// Hand oracle evaluated in 30-digit arithmetic:
// theta0 = 1, g = 1 twice, default settings.
TEST(Adam, TwoStepsFromUnitGradient) {
  TensorD theta({1}, 1.0);
  const TensorD g({1}, 1.0);
  AdamState<double> s(theta.shape());
  adam_step(theta, g, s);
  EXPECT_NEAR(theta[0], 0.9990000000099999999, 1e-12);
  EXPECT_EQ(s.t, 1u);
  adam_step(theta, g, s);
  EXPECT_NEAR(theta[0], 0.9980000000199999998, 1e-12);
  EXPECT_EQ(s.t, 2u);
}

// theta0 = 0.5, g = 0.3 then -0.2.
TEST(Adam, TwoStepsWithChangingGradient) {
  TensorD theta({1}, 0.5);
  AdamState<double> s(theta.shape());
  adam_step(theta, TensorD({1}, 0.3), s);
  EXPECT_NEAR(theta[0], 0.4990000000333333322222223, 1e-12);
  adam_step(theta, TensorD({1}, -0.2), s);
  EXPECT_NEAR(theta[0], 0.498855479509285967146171, 1e-12);
  EXPECT_NEAR(s.m[0], 0.9 * 0.1 * 0.3 + 0.1 * -0.2, 1e-15);
  EXPECT_NEAR(s.v[0], 0.999 * 0.001 * 0.09 + 0.001 * 0.04, 1e-15);
}

TEST(Adam, ElementsUpdateIndependently) {
  TensorD theta({3}, std::vector<double>{1.0, 0.5, 2.0});
  AdamState<double> s(theta.shape());
  adam_step(theta, TensorD({3}, std::vector<double>{1.0, 0.3, 0.0}), s);
  EXPECT_NEAR(theta[0], 0.9990000000099999999, 1e-12);
  EXPECT_NEAR(theta[1], 0.4990000000333333322222223, 1e-12);
  EXPECT_EQ(theta[2], 2.0);
}

// Adam moves roughly alpha per step, so the default 0.001 cannot cover the
// distance from 5 in 5000 steps; the toy uses 0.01.
TEST(Adam, ConvergesOnSquare) {
  TensorD theta({1}, 5.0);
  AdamState<double> s(theta.shape(), AdamConfig{0.01, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 5000; ++i) adam_step(theta, TensorD({1}, 2.0 * theta[0]), s);
  EXPECT_LT(std::abs(theta[0]), 0.01);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  TensorD theta({2}, std::vector<double>{0.25, -3.0});
  AdamState<double> s(theta.shape());
  adam_step(theta, TensorD({2}), s);
  EXPECT_EQ(theta[0], 0.25);
  EXPECT_EQ(theta[1], -3.0);
}

TEST(Adam, StepIsBoundedAndSecondMomentNonNegative) {
  TensorD theta({1}, 0.0);
  AdamState<double> s(theta.shape());
  for (int i = 0; i < 50; ++i) {
    const double before = theta[0];
    adam_step(theta, TensorD({1}, i % 3 == 0 ? -4.0 : 2.5), s);
    EXPECT_LE(std::abs(theta[0] - before), 10 * s.config.alpha);
    EXPECT_GE(s.v[0], 0.0);
    EXPECT_EQ(s.t, std::uint64_t(i + 1));
  }
}

TEST(Adam, RejectsShapeMismatch) {
  TensorD theta({2});
  AdamState<double> s(theta.shape());
  EXPECT_THROW(adam_step(theta, TensorD({3}), s), std::invalid_argument);
}
