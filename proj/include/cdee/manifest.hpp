#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cdee/patching.hpp"

namespace cdee {

inline constexpr const char* kManifestHeader =
    "patch_id,slide_id,class_label,grid_x,grid_y,cluster,split";

std::string format_manifest(const std::vector<PatchRecord>& records);
std::vector<PatchRecord> parse_manifest(const std::string& text);

void write_manifest(const std::filesystem::path& path,
                    const std::vector<PatchRecord>& records);
std::vector<PatchRecord> read_manifest(const std::filesystem::path& path);

// File name of a patch inside a patch directory.
std::string patch_file_name(const PatchRecord& record);

// Slide listing written next to synthetic (or user-supplied) slides:
// slide_id,class_label,file
struct SlideEntry {
  std::string slide_id;
  ClassLabel class_label = ClassLabel::EE;
  std::string file;

  bool operator==(const SlideEntry&) const = default;
};

inline constexpr const char* kSlideIndexName = "slides.csv";

void write_slide_index(const std::filesystem::path& path,
                       const std::vector<SlideEntry>& slides);
std::vector<SlideEntry> read_slide_index(const std::filesystem::path& path);

}  // namespace cdee
