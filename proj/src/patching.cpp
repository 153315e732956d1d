#include "cdee/patching.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "cdee/rng.hpp"

namespace cdee {

std::string_view to_string(ClassLabel c) {
  switch (c) {
    case ClassLabel::EE: return "EE";
    case ClassLabel::CD: return "CD";
    case ClassLabel::Normal: return "Normal";
  }
  return "?";
}

std::string_view to_string(Cluster c) {
  switch (c) {
    case Cluster::unassigned: return "unassigned";
    case Cluster::useful: return "useful";
    case Cluster::not_useful: return "not_useful";
  }
  return "?";
}

std::string_view to_string(Split s) {
  return s == Split::train ? "train" : "test";
}

ClassLabel parse_class_label(std::string_view s) {
  if (s == "EE") return ClassLabel::EE;
  if (s == "CD") return ClassLabel::CD;
  if (s == "Normal") return ClassLabel::Normal;
  throw std::invalid_argument("unknown class label '" + std::string(s) + "'");
}

Cluster parse_cluster(std::string_view s) {
  if (s == "unassigned") return Cluster::unassigned;
  if (s == "useful") return Cluster::useful;
  if (s == "not_useful") return Cluster::not_useful;
  throw std::invalid_argument("unknown cluster '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

std::string make_patch_id(std::string_view slide_id, std::size_t grid_x,
                          std::size_t grid_y) {
  return std::string(slide_id) + "_x" + std::to_string(grid_x) + "_y" +
         std::to_string(grid_y);
}

std::vector<std::pair<PatchRecord, RgbImage>> extract_patches(
    const RgbImage& slide, std::size_t patch_size, const std::string& slide_id,
    ClassLabel class_label) {
  if (patch_size == 0) throw std::invalid_argument("patch size must be >= 1");
  if (slide.width() < patch_size || slide.height() < patch_size) {
    throw std::invalid_argument(
        "slide '" + slide_id + "' is " + std::to_string(slide.width()) + "x" +
        std::to_string(slide.height()) + ", smaller than one " +
        std::to_string(patch_size) + "x" + std::to_string(patch_size) +
        " patch");
  }
  const std::size_t cols = slide.width() / patch_size;
  const std::size_t rows = slide.height() / patch_size;
  std::vector<std::pair<PatchRecord, RgbImage>> out;
  out.reserve(cols * rows);
  for (std::size_t gy = 0; gy < rows; ++gy) {
    for (std::size_t gx = 0; gx < cols; ++gx) {
      PatchRecord r;
      r.patch_id = make_patch_id(slide_id, gx, gy);
      r.slide_id = slide_id;
      r.class_label = class_label;
      r.grid_x = gx;
      r.grid_y = gy;
      out.emplace_back(std::move(r), crop(slide, gx * patch_size,
                                          gy * patch_size, patch_size,
                                          patch_size));
    }
  }
  return out;
}

std::vector<PatchRecord> assign_split(std::vector<PatchRecord> records,
                                      double test_fraction,
                                      std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test fraction must lie in (0, 1), got " +
                                std::to_string(test_fraction));
  }
  // Sorted slide ids per class make the outcome independent of record order.
  std::map<ClassLabel, std::set<std::string>> slides;
  for (const PatchRecord& r : records) slides[r.class_label].insert(r.slide_id);

  Rng rng(derive_seed(seed, "split"));
  std::set<std::string> test_slides;
  for (auto& [label, ids] : slides) {
    if (ids.size() < 2) {
      throw std::invalid_argument("class " + std::string(to_string(label)) +
                                  " has a single slide; cannot split");
    }
    std::vector<std::string> order(ids.begin(), ids.end());
    rng.shuffle(order);
    const auto n = static_cast<std::ptrdiff_t>(order.size());
    const auto want = static_cast<std::ptrdiff_t>(
        std::llround(test_fraction * static_cast<double>(n)));
    const std::ptrdiff_t n_test = std::clamp<std::ptrdiff_t>(want, 1, n - 1);
    test_slides.insert(order.begin(), order.begin() + n_test);
  }
  for (PatchRecord& r : records) {
    r.split = test_slides.count(r.slide_id) ? Split::test : Split::train;
  }
  return records;
}

}  // namespace cdee
