#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdee/image.hpp"

namespace cdee {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary PPM (P6, maxval 255). Comments and arbitrary whitespace are accepted
// in the header; errors carry the byte offset where parsing failed.
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);

RgbImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const RgbImage& image);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Writes to `path` + ".tmp" and renames over `path` once complete.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path,
                       const std::string& text);

std::filesystem::path tmp_path(const std::filesystem::path& path);

// Replaces `dir` with a fully populated `staging` directory.
void commit_directory(const std::filesystem::path& staging,
                      const std::filesystem::path& dir);

}  // namespace cdee
