#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "cdee/image.hpp"

namespace cdee {

using Matrix3 = std::array<double, 9>;

inline constexpr Matrix3 kIdentity3 = {1, 0, 0, 0, 1, 0, 0, 0, 1};

// Percentages used to expand the training set and to build the shifted
// robustness test set.
inline const std::vector<double> kTrainSweep = {0.001, 0.01, 0.1, 1.0};
inline const std::vector<double> kTestSweep = {0.5, 1.0, 1.5, 2.0};

// out = clamp(alpha * A * diag(wb_gains) * (in - black_level))^gamma, with
// pixels normalized to [0, 1]. black_level is the per-channel low quantile
// the stretch pins to zero.
struct ColorBalanceParams {
  double percentage = 0.0;
  double alpha = 1.0;
  Matrix3 color_matrix = kIdentity3;
  std::array<double, 3> wb_gains = {1.0, 1.0, 1.0};
  std::array<double, 3> black_level = {0.0, 0.0, 0.0};
  double gamma = 1.0;

  bool operator==(const ColorBalanceParams&) const = default;
};

struct BalanceOptions {
  Matrix3 color_matrix = kIdentity3;
  double gamma = 1.0;
};

// Nearest-rank quantile of one channel's 256-bin histogram. `fraction` is in
// [0, 1]; rank = max(1, ceil(fraction * N)).
int channel_quantile(const RgbImage& image, int channel, double fraction);

// Symmetric percentile clipping: per channel, [q(p%), q(100-p%)] is mapped
// linearly onto [0, 1]. Percentage 0 disables balancing (identity params).
// A channel with q_lo == q_hi keeps a composite gain of 1.
ColorBalanceParams derive_params(const RgbImage& image, double percentage,
                                 const BalanceOptions& options = {});

std::array<double, 3> transform_pixel(const std::array<double, 3>& rgb,
                                      const ColorBalanceParams& params);

RgbImage apply_balance(const RgbImage& image, const ColorBalanceParams& params);

std::vector<RgbImage> balance_sweep(const RgbImage& image,
                                    std::span<const double> percentages,
                                    const BalanceOptions& options = {});

// Round-half-up 8-bit quantization of a [0, 1] value.
std::uint8_t quantize_unit(double v);

// Stable textual form of a percentage, used for directory names ("0.001").
std::string format_percentage(double percentage);

}  // namespace cdee
