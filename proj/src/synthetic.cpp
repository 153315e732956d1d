#include "cdee/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "cdee/io.hpp"

namespace cdee {

namespace {

using Rgb = std::array<double, 3>;

// Hematoxylin-like purple and eosin-like pink, unit scale.
constexpr Rgb kHematoxylin = {0.35, 0.20, 0.55};
constexpr Rgb kEosin = {0.92, 0.62, 0.76};

struct Stain {
  Rgb tint;
};

Stain random_stain(Rng& rng) {
  Stain s;
  for (auto& t : s.tint) t = rng.uniform(0.88, 1.08);
  return s;
}

// Texture intensity in [0, 1] at (x, y); 1 is fully hematoxylin.
class Recipe {
 public:
  Recipe(ClassLabel label, Rng& rng) : label_(label) {
    phase_x_ = rng.uniform(0.0, 64.0);
    phase_y_ = rng.uniform(0.0, 64.0);
    for (auto& b : blobs_) {
      b = {rng.uniform(0.0, 64.0), rng.uniform(0.0, 64.0),
           rng.uniform(10.0, 18.0)};
    }
  }

  double operator()(std::size_t x, std::size_t y) const {
    switch (label_) {
      case ClassLabel::EE: {
        const auto cx = static_cast<std::size_t>(x + std::size_t(phase_x_)) / 2;
        const auto cy = static_cast<std::size_t>(y + std::size_t(phase_y_)) / 2;
        return ((cx + cy) % 2) ? 0.8 : 0.2;
      }
      case ClassLabel::CD: {
        const double t = (double(x) + double(y) + phase_x_) * (2.0 * M_PI / 12.0);
        return 0.5 + 0.3 * std::sin(t);
      }
      case ClassLabel::Normal: {
        double v = 0.0;
        for (const auto& b : blobs_) {
          const double dx = std::fmod(double(x) - b[0] + 96.0, 64.0) - 32.0;
          const double dy = std::fmod(double(y) - b[1] + 96.0, 64.0) - 32.0;
          v += std::exp(-(dx * dx + dy * dy) / (2.0 * b[2] * b[2]));
        }
        return 0.2 + 0.6 * std::min(1.0, v);
      }
    }
    return 0.0;
  }

 private:
  ClassLabel label_;
  double phase_x_ = 0.0;
  double phase_y_ = 0.0;
  std::array<std::array<double, 3>, 3> blobs_{};
};

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v * 255.0 + 0.5), 0.0, 255.0));
}

void paint_tissue(RgbImage& img, std::size_t x0, std::size_t y0,
                  std::size_t size, ClassLabel label, const Stain& stain,
                  double noise, Rng& rng) {
  const Recipe recipe(label, rng);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double f = std::clamp(recipe(x, y) + noise * rng.normal(), 0.0, 1.0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = (kEosin[c] * (1.0 - f) + kHematoxylin[c] * f) * stain.tint[c];
        img.at(x0 + x, y0 + y, c) = to_byte(v);
      }
    }
  }
}

void paint_background(RgbImage& img, std::size_t x0, std::size_t y0,
                      std::size_t w, std::size_t h, int base, Rng& rng) {
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(x0 + x, y0 + y, c) =
            static_cast<std::uint8_t>(base + static_cast<int>(rng.below(3)) - 1);
      }
    }
  }
}

std::string slide_id_for(ClassLabel label, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%02zu",
                std::string(to_string(label)).c_str(), i);
  return buf;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (slides_per_class < 2) {
    throw std::invalid_argument("synthetic: need at least 2 slides per class");
  }
  if (patch_size < 8) throw std::invalid_argument("synthetic: patch_size < 8");
  if (grid == 0) throw std::invalid_argument("synthetic: grid must be positive");
  if (tissue_cells == 0 || tissue_cells > grid * grid) {
    throw std::invalid_argument("synthetic: tissue_cells must be in [1, grid^2]");
  }
  if (margin >= patch_size) {
    throw std::invalid_argument("synthetic: margin must be smaller than a patch");
  }
  if (!(noise >= 0.0)) throw std::invalid_argument("synthetic: negative noise");
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticCorpus corpus;
  const std::size_t side = spec.grid * spec.patch_size + spec.margin;
  for (int k = 0; k < kNumClasses; ++k) {
    const auto label = static_cast<ClassLabel>(k);
    for (std::size_t i = 0; i < spec.slides_per_class; ++i) {
      const std::string id = slide_id_for(label, i);
      Rng rng(derive_seed(spec.seed, "synth/" + id));
      RgbImage img(side, side);
      const int base = 240 + static_cast<int>(rng.below(11));
      paint_background(img, 0, 0, side, side, base, rng);

      std::vector<std::size_t> cells(spec.grid * spec.grid);
      for (std::size_t c = 0; c < cells.size(); ++c) cells[c] = c;
      rng.shuffle(cells);
      std::vector<bool> tissue(cells.size(), false);
      for (std::size_t c = 0; c < spec.tissue_cells; ++c) tissue[cells[c]] = true;

      const Stain stain = random_stain(rng);
      for (std::size_t gy = 0; gy < spec.grid; ++gy) {
        for (std::size_t gx = 0; gx < spec.grid; ++gx) {
          const bool t = tissue[gy * spec.grid + gx];
          if (t) {
            paint_tissue(img, gx * spec.patch_size, gy * spec.patch_size,
                         spec.patch_size, label, stain, spec.noise, rng);
          }
          corpus.truth.push_back({id, label, gx, gy, t});
        }
      }
      corpus.slides.push_back({{id, label, id + ".ppm"}, std::move(img)});
    }
  }
  return corpus;
}

void write_synthetic(const SyntheticCorpus& corpus,
                     const std::filesystem::path& dir) {
  std::vector<SlideEntry> entries;
  for (const auto& s : corpus.slides) {
    write_image(dir / "slides" / s.entry.file, s.image);
    entries.push_back(s.entry);
  }
  write_slide_index(dir / kSlideIndexName, entries);
  std::ostringstream truth;
  truth << "slide_id,class_label,grid_x,grid_y,tissue\n";
  for (const auto& c : corpus.truth) {
    truth << c.slide_id << ',' << to_string(c.class_label) << ',' << c.grid_x
          << ',' << c.grid_y << ',' << (c.tissue ? 1 : 0) << '\n';
  }
  write_text_atomic(dir / "truth.csv", truth.str());
}

std::vector<SyntheticCell> read_truth(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::getline(in, line);
  if (line != "slide_id,class_label,grid_x,grid_y,tissue") {
    throw std::invalid_argument(path.string() + ": unexpected header");
  }
  std::vector<SyntheticCell> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string id, label, gx, gy, t;
    std::getline(fields, id, ',');
    std::getline(fields, label, ',');
    std::getline(fields, gx, ',');
    std::getline(fields, gy, ',');
    std::getline(fields, t, ',');
    out.push_back({id, parse_class_label(label), std::stoul(gx), std::stoul(gy),
                   t == "1"});
  }
  return out;
}

RgbImage synth_tissue_patch(ClassLabel label, std::size_t size, Rng& rng,
                            double noise) {
  RgbImage img(size, size);
  paint_tissue(img, 0, 0, size, label, random_stain(rng), noise, rng);
  return img;
}

RgbImage synth_background_patch(std::size_t size, Rng& rng) {
  RgbImage img(size, size);
  paint_background(img, 0, 0, size, size, 240 + static_cast<int>(rng.below(11)), rng);
  return img;
}

double gradient_energy(const RgbImage& image) {
  const std::size_t w = image.width(), h = image.height();
  if (w < 2 || h < 2) throw std::invalid_argument("gradient_energy: image too small");
  auto lum = [&](std::size_t x, std::size_t y) {
    return (0.299 * image.at(x, y, 0) + 0.587 * image.at(x, y, 1) +
            0.114 * image.at(x, y, 2)) / 255.0;
  };
  double sum = 0.0;
  for (std::size_t y = 0; y + 1 < h; ++y) {
    for (std::size_t x = 0; x + 1 < w; ++x) {
      const double dx = lum(x + 1, y) - lum(x, y);
      const double dy = lum(x, y + 1) - lum(x, y);
      sum += dx * dx + dy * dy;
    }
  }
  return sum / double((w - 1) * (h - 1));
}

}  // namespace cdee
