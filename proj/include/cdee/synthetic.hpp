#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cdee/image.hpp"
#include "cdee/manifest.hpp"
#include "cdee/patching.hpp"
#include "cdee/rng.hpp"

namespace cdee {

// Stand-in corpus for the clinical slides. Each slide is a grid of
// patch-sized cells, some textured with the slide's class recipe and the
// rest near-white background, plus a background margin narrower than a
// patch on the right and bottom edges.
//   EE:     2-pixel checker (period 4) + noise
//   CD:     diagonal stripes, period 12 + noise
//   Normal: low-frequency blobs + noise
struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::size_t slides_per_class = 8;
  std::size_t patch_size = 64;
  std::size_t grid = 4;            // cells per side
  std::size_t tissue_cells = 10;   // of grid * grid
  std::size_t margin = 20;         // < patch_size
  double noise = 0.06;             // texture noise, unit intensity

  void validate() const;
};

struct SyntheticCell {
  std::string slide_id;
  ClassLabel class_label = ClassLabel::EE;
  std::size_t grid_x = 0;
  std::size_t grid_y = 0;
  bool tissue = false;
};

struct SyntheticSlide {
  SlideEntry entry;
  RgbImage image;
};

struct SyntheticCorpus {
  std::vector<SyntheticSlide> slides;
  std::vector<SyntheticCell> truth;  // one row per grid cell
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

// Writes slides/<id>.ppm, slides.csv and truth.csv under `dir`.
void write_synthetic(const SyntheticCorpus& corpus,
                     const std::filesystem::path& dir);

std::vector<SyntheticCell> read_truth(const std::filesystem::path& path);

// Single patches drawn from the same recipes, with a fresh stain tint each.
RgbImage synth_tissue_patch(ClassLabel label, std::size_t size, Rng& rng,
                            double noise = 0.06);
// Near-white: a base level in [240, 250] plus per-pixel offsets in {-1,0,1},
// so every channel's standard deviation is below 1 (of 255).
RgbImage synth_background_patch(std::size_t size, Rng& rng);

// Mean squared horizontal plus vertical luminance difference, unit scale.
double gradient_energy(const RgbImage& image);

}  // namespace cdee
