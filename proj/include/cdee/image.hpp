#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdee/tensor.hpp"

namespace cdee {

// 8-bit interleaved RGB raster, row-major from the top-left.
class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(std::size_t width, std::size_t height, std::uint8_t fill = 0)
      : width_(width), height_(height), pixels_(width * height * 3, fill) {}
  RgbImage(std::size_t width, std::size_t height,
           std::vector<std::uint8_t> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (pixels_.size() != width_ * height_ * 3) {
      throw std::invalid_argument(
          "RgbImage: " + std::to_string(pixels_.size()) +
          " bytes for a " + std::to_string(width_) + "x" +
          std::to_string(height_) + " image");
    }
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }
  std::size_t pixel_count() const noexcept { return width_ * height_; }

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels_[(y * width_ + x) * 3 + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels_[(y * width_ + x) * 3 + c];
  }

  std::span<std::uint8_t> bytes() noexcept { return pixels_; }
  std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }

  bool operator==(const RgbImage&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

RgbImage crop(const RgbImage& image, std::size_t x0, std::size_t y0,
              std::size_t width, std::size_t height);

// Box-filter resample; each output pixel averages the source rectangle it
// covers (area averaging when shrinking).
RgbImage resize_area(const RgbImage& image, std::size_t width,
                     std::size_t height);

// Standard deviation over every channel value of the image, in 8-bit units.
double pixel_stddev(const RgbImage& image);

// Packs images of equal size into an NHWC tensor scaled to [0, 1].
Tensor images_to_tensor(std::span<const RgbImage> images);
Tensor image_to_tensor(const RgbImage& image);

}  // namespace cdee
