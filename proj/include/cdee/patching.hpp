#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cdee/image.hpp"

namespace cdee {

// Class indices are fixed across every artifact.
enum class ClassLabel : int { EE = 0, CD = 1, Normal = 2 };
inline constexpr int kNumClasses = 3;

enum class Cluster { unassigned, useful, not_useful };
enum class Split { train, test };

std::string_view to_string(ClassLabel c);
std::string_view to_string(Cluster c);
std::string_view to_string(Split s);
ClassLabel parse_class_label(std::string_view s);
Cluster parse_cluster(std::string_view s);
Split parse_split(std::string_view s);

struct PatchRecord {
  std::string patch_id;
  std::string slide_id;
  ClassLabel class_label = ClassLabel::EE;
  std::size_t grid_x = 0;
  std::size_t grid_y = 0;
  Cluster cluster = Cluster::unassigned;
  Split split = Split::train;

  bool operator==(const PatchRecord&) const = default;
};

std::string make_patch_id(std::string_view slide_id, std::size_t grid_x,
                          std::size_t grid_y);

// Non-overlapping row-major tiling from the top-left. Border strips that do
// not fill a whole patch are dropped.
std::vector<std::pair<PatchRecord, RgbImage>> extract_patches(
    const RgbImage& slide, std::size_t patch_size, const std::string& slide_id,
    ClassLabel class_label);

// Assigns whole slides to the test split, per class, so no slide contributes
// patches to both sides. Per class, round(test_fraction * slides) slides go
// to test, clamped to [1, slides - 1].
std::vector<PatchRecord> assign_split(std::vector<PatchRecord> records,
                                      double test_fraction,
                                      std::uint64_t seed);

}  // namespace cdee
