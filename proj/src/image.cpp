#include "cdee/image.hpp"

#include <cmath>

namespace cdee {

RgbImage crop(const RgbImage& image, std::size_t x0, std::size_t y0,
              std::size_t width, std::size_t height) {
  if (x0 + width > image.width() || y0 + height > image.height()) {
    throw std::out_of_range("crop " + std::to_string(width) + "x" +
                            std::to_string(height) + " at (" +
                            std::to_string(x0) + ", " + std::to_string(y0) +
                            ") exceeds image " +
                            std::to_string(image.width()) + "x" +
                            std::to_string(image.height()));
  }
  RgbImage out(width, height);
  for (std::size_t y = 0; y < height; ++y) {
    const auto* src = &image.bytes()[((y0 + y) * image.width() + x0) * 3];
    std::copy(src, src + width * 3, &out.bytes()[y * width * 3]);
  }
  return out;
}

RgbImage resize_area(const RgbImage& image, std::size_t width,
                     std::size_t height) {
  if (image.empty() || width == 0 || height == 0) {
    throw std::invalid_argument("resize_area: empty source or target");
  }
  if (width == image.width() && height == image.height()) return image;
  RgbImage out(width, height);
  const std::size_t sw = image.width(), sh = image.height();
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t y0 = y * sh / height;
    const std::size_t y1 = std::max(y0 + 1, (y + 1) * sh / height);
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t x0 = x * sw / width;
      const std::size_t x1 = std::max(x0 + 1, (x + 1) * sw / width);
      for (std::size_t c = 0; c < 3; ++c) {
        std::uint64_t sum = 0;
        for (std::size_t sy = y0; sy < y1; ++sy)
          for (std::size_t sx = x0; sx < x1; ++sx) sum += image.at(sx, sy, c);
        const std::uint64_t n = (y1 - y0) * (x1 - x0);
        out.at(x, y, c) = static_cast<std::uint8_t>((sum + n / 2) / n);
      }
    }
  }
  return out;
}

double pixel_stddev(const RgbImage& image) {
  if (image.empty()) return 0.0;
  double sum = 0.0, sq = 0.0;
  for (std::uint8_t v : image.bytes()) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(image.bytes().size());
  const double mean = sum / n;
  return std::sqrt(std::max(0.0, sq / n - mean * mean));
}

Tensor images_to_tensor(std::span<const RgbImage> images) {
  if (images.empty()) throw std::invalid_argument("no images to pack");
  const std::size_t w = images.front().width(), h = images.front().height();
  Tensor t({images.size(), h, w, 3});
  std::size_t off = 0;
  for (const RgbImage& img : images) {
    if (img.width() != w || img.height() != h) {
      throw std::invalid_argument(
          "images_to_tensor: mixed sizes " + std::to_string(w) + "x" +
          std::to_string(h) + " and " + std::to_string(img.width()) + "x" +
          std::to_string(img.height()));
    }
    for (std::uint8_t v : img.bytes()) t[off++] = static_cast<float>(v) / 255.0f;
  }
  return t;
}

Tensor image_to_tensor(const RgbImage& image) {
  return images_to_tensor(std::span<const RgbImage>(&image, 1));
}

}  // namespace cdee
