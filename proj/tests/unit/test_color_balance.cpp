#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "cdee/color_balance.hpp"
#include "cdee/rng.hpp"
#include "cdee/synthetic.hpp"
#include "common/oracles.hpp"

using namespace cdee;
using namespace cdee::testing;

namespace {

RgbImage random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  RgbImage img(w, h);
  for (auto& b : img.bytes()) b = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

}  // namespace

TEST(ColorBalance, PercentageZeroIsBitExactIdentity) {
  const RgbImage img = random_image(37, 23, 1);
  const auto p = derive_params(img, 0.0);
  EXPECT_EQ(p, ColorBalanceParams{});
  EXPECT_EQ(apply_balance(img, p), img);
  RgbImage all(16, 1);
  for (std::size_t i = 0; i < all.bytes().size(); ++i)
    all.bytes()[i] = static_cast<std::uint8_t>((i * 5) % 256);
  EXPECT_EQ(balance_sweep(all, std::vector<double>{0.0}).at(0), all);
}

TEST(ColorBalance, TwoPixelStretch) {
  RgbImage img(2, 1);
  for (int c = 0; c < 3; ++c) {
    img.at(0, 0, c) = 51;   // 0.2
    img.at(1, 0, c) = 204;  // 0.8
  }
  const auto p = derive_params(img, 0.001);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(sorted_quantile(img, c, 0.00001), 51);
    EXPECT_EQ(sorted_quantile(img, c, 0.99999), 204);
    const auto lo = transform_pixel({0.2, 0.2, 0.2}, p);
    const auto hi = transform_pixel({0.8, 0.8, 0.8}, p);
    EXPECT_NEAR(lo[c], 0.0, 1e-12);
    EXPECT_NEAR(hi[c], 1.0, 1e-12);
  }
  const RgbImage out = apply_balance(img, p);
  EXPECT_EQ(out.at(0, 0, 0), 0);
  EXPECT_EQ(out.at(1, 0, 2), 255);
}

TEST(ColorBalance, PureScaling) {
  ColorBalanceParams p;
  p.alpha = 2.0;
  const auto v = transform_pixel({0.25, 0.25, 0.25}, p);
  for (double x : v) EXPECT_DOUBLE_EQ(x, 0.5);
}

TEST(ColorBalance, FiftyPercentHitsDegenerateRule) {
  const RgbImage img = random_image(9, 9, 4);
  const auto p = derive_params(img, 50.0);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(channel_quantile(img, c, 0.5), sorted_quantile(img, c, 0.5));
    EXPECT_EQ(p.wb_gains[c] * p.alpha, 1.0);
  }
}

TEST(ColorBalance, ConstantChannelKeepsUnitGain) {
  RgbImage img = random_image(8, 8, 2);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) img.at(x, y, 1) = 90;
  const auto p = derive_params(img, 1.0);
  EXPECT_DOUBLE_EQ(p.alpha * p.wb_gains[1], 1.0);
  const RgbImage out = apply_balance(img, p);
  EXPECT_EQ(out.at(3, 3, 1), 90);
  EXPECT_TRUE(std::isfinite(p.alpha) && p.alpha > 0);
}

TEST(ColorBalance, RejectsOutOfRangePercentage) {
  const RgbImage img = random_image(4, 4, 3);
  EXPECT_THROW(derive_params(img, -0.1), std::invalid_argument);
  EXPECT_THROW(derive_params(img, 50.5), std::invalid_argument);
  EXPECT_THROW(balance_sweep(img, std::vector<double>{}), std::invalid_argument);
}

TEST(ColorBalance, MatchesPerPixelOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const RgbImage img = random_image(4, 4, 100 + seed);
    for (double pct : {0.001, 0.01, 0.1, 1.0, 0.5, 1.5, 2.0, 10.0, 30.0}) {
      const RgbImage got = apply_balance(img, derive_params(img, pct));
      EXPECT_LE(max_abs_diff(got, oracle_balance(img, pct)), 1) << pct;
    }
  }
}

TEST(ColorBalance, PreservesChannelOrdering) {
  const RgbImage img = random_image(30, 30, 8);
  for (double pct : {0.1, 1.0, 2.0, 25.0}) {
    const RgbImage out = apply_balance(img, derive_params(img, pct));
    const auto a = img.bytes();
    const auto b = out.bytes();
    for (std::size_t i = 0; i + 3 < a.size(); i += 3)
      for (int c = 0; c < 3; ++c)
        if (a[i + c] < a[i + 3 + c]) EXPECT_LE(b[i + c], b[i + 3 + c]);
  }
}

TEST(ColorBalance, SecondApplicationMovesAtMostOneStep) {
  Rng rng(17);
  const RgbImage img = synth_tissue_patch(ClassLabel::CD, 64, rng);
  for (double pct : {0.01, 1.0, 2.0}) {
    const RgbImage once = apply_balance(img, derive_params(img, pct));
    const RgbImage twice = apply_balance(once, derive_params(once, pct));
    EXPECT_LE(max_abs_diff(once, twice), 1) << pct;
  }
}

TEST(ColorBalance, SweepsAreDeterministicAndDistinct) {
  Rng rng(5);
  // 200x200 so that 0.001% and 0.01% fall on different ranks; the stripes
  // do not saturate, so every tail quantile lands on a distinct level.
  const RgbImage img = synth_tissue_patch(ClassLabel::CD, 200, rng);
  for (const auto* sweep : {&kTrainSweep, &kTestSweep}) {
    const auto a = balance_sweep(img, *sweep);
    const auto b = balance_sweep(img, *sweep);
    ASSERT_EQ(a.size(), 4u);
    EXPECT_EQ(a, b);
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = i + 1; j < a.size(); ++j)
        EXPECT_NE(a[i], a[j]) << (*sweep)[i] << " vs " << (*sweep)[j];
  }
}

TEST(ColorBalance, GammaAndMatrixOptions) {
  ColorBalanceParams p;
  p.gamma = 2.0;
  p.color_matrix = {0, 1, 0, 1, 0, 0, 0, 0, 1};
  const auto v = transform_pixel({0.5, 0.25, 1.0}, p);
  EXPECT_DOUBLE_EQ(v[0], 0.0625);
  EXPECT_DOUBLE_EQ(v[1], 0.25);
  EXPECT_DOUBLE_EQ(v[2], 1.0);
}

TEST(ColorBalance, FormatsPercentages) {
  EXPECT_EQ(format_percentage(0.001), "0.001");
  EXPECT_EQ(format_percentage(1.0), "1");
  EXPECT_EQ(format_percentage(1.5), "1.5");
}
