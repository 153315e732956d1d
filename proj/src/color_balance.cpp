#include "cdee/color_balance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace cdee {

namespace {

void check_percentage(double percentage) {
  if (!(percentage >= 0.0 && percentage <= 50.0)) {
    throw std::invalid_argument("color balancing percentage " +
                                std::to_string(percentage) +
                                " outside [0, 50]");
  }
}

}  // namespace

std::uint8_t quantize_unit(double v) {
  const double scaled = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::floor(scaled + 0.5));
}

int channel_quantile(const RgbImage& image, int channel, double fraction) {
  if (image.empty()) throw std::invalid_argument("quantile of empty image");
  std::array<std::size_t, 256> hist{};
  const auto bytes = image.bytes();
  for (std::size_t i = static_cast<std::size_t>(channel); i < bytes.size();
       i += 3)
    ++hist[bytes[i]];
  const std::size_t n = image.pixel_count();
  // The epsilon keeps exact products such as 0.5 * 4 from rounding up.
  const double want = std::ceil(fraction * static_cast<double>(n) - 1e-9);
  const std::size_t rank =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::max(0.0, want)));
  std::size_t cum = 0;
  for (int v = 0; v < 256; ++v) {
    cum += hist[v];
    if (cum >= rank) return v;
  }
  return 255;
}

ColorBalanceParams derive_params(const RgbImage& image, double percentage,
                                 const BalanceOptions& options) {
  check_percentage(percentage);
  if (image.empty()) throw std::invalid_argument("derive_params: empty image");
  ColorBalanceParams p;
  p.percentage = percentage;
  p.color_matrix = options.color_matrix;
  p.gamma = options.gamma;
  if (percentage == 0.0) return p;

  std::array<double, 3> composite{};
  for (int c = 0; c < 3; ++c) {
    const int lo = channel_quantile(image, c, percentage / 100.0);
    const int hi = channel_quantile(image, c, (100.0 - percentage) / 100.0);
    if (hi > lo) {
      composite[c] = 255.0 / static_cast<double>(hi - lo);
      p.black_level[c] = static_cast<double>(lo) / 255.0;
    } else {
      composite[c] = 1.0;
      p.black_level[c] = 0.0;
    }
  }
  p.alpha = (composite[0] + composite[1] + composite[2]) / 3.0;
  for (int c = 0; c < 3; ++c) p.wb_gains[c] = composite[c] / p.alpha;
  return p;
}

std::array<double, 3> transform_pixel(const std::array<double, 3>& rgb,
                                      const ColorBalanceParams& params) {
  std::array<double, 3> w{};
  for (int c = 0; c < 3; ++c)
    w[c] = params.wb_gains[c] * (rgb[c] - params.black_level[c]);
  std::array<double, 3> out{};
  for (int r = 0; r < 3; ++r) {
    const double* row = &params.color_matrix[r * 3];
    double v = params.alpha * (row[0] * w[0] + row[1] * w[1] + row[2] * w[2]);
    v = std::clamp(v, 0.0, 1.0);
    if (params.gamma != 1.0) v = std::pow(v, params.gamma);
    out[r] = v;
  }
  return out;
}

RgbImage apply_balance(const RgbImage& image,
                       const ColorBalanceParams& params) {
  if (!(params.alpha > 0.0) || !(params.gamma > 0.0)) {
    throw std::invalid_argument("apply_balance: alpha and gamma must be > 0");
  }
  RgbImage out(image.width(), image.height());
  const auto src = image.bytes();
  auto dst = out.bytes();
  for (std::size_t i = 0; i < src.size(); i += 3) {
    const std::array<double, 3> rgb = {src[i] / 255.0, src[i + 1] / 255.0,
                                       src[i + 2] / 255.0};
    const auto v = transform_pixel(rgb, params);
    for (int c = 0; c < 3; ++c) dst[i + c] = quantize_unit(v[c]);
  }
  return out;
}

std::vector<RgbImage> balance_sweep(const RgbImage& image,
                                    std::span<const double> percentages,
                                    const BalanceOptions& options) {
  if (percentages.empty()) {
    throw std::invalid_argument("balance_sweep: no percentages given");
  }
  std::vector<RgbImage> out;
  out.reserve(percentages.size());
  for (double p : percentages) {
    out.push_back(apply_balance(image, derive_params(image, p, options)));
  }
  return out;
}

std::string format_percentage(double percentage) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", percentage);
  return buf;
}

}  // namespace cdee
