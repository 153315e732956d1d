#include "cdee/io.hpp"

#include <cctype>
#include <fstream>
#include <iterator>

namespace cdee {

namespace fs = std::filesystem;

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : b_(bytes) {}

  std::size_t offset() const { return pos_; }
  // Where the most recent number() began.
  std::size_t last_start() const { return last_start_; }
  void advance(std::size_t n) { pos_ += n; }

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    last_start_ = start;
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (1u << 24)) fail(std::string(what) + " is too large", start);
      ++pos_;
    }
    if (pos_ == start) fail(std::string("expected ") + what, start);
    return v;
  }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw FormatError("PPM: " + msg + " at byte offset " + std::to_string(at));
  }

  void expect_single_whitespace() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) {
      fail("expected whitespace before pixel data", pos_);
    }
    ++pos_;
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
  std::size_t last_start_ = 0;
};

}  // namespace

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  HeaderReader r(bytes);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    r.fail("missing P6 magic", 0);
  }
  r.advance(2);
  const std::size_t width = r.number("width");
  const std::size_t height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  const std::size_t maxval_at = r.last_start();
  r.expect_single_whitespace();
  if (width == 0 || height == 0) r.fail("zero image dimension", 2);
  if (maxval != 255) {
    r.fail("maxval " + std::to_string(maxval) + " unsupported (need 255)",
           maxval_at);
  }
  const std::size_t data_start = r.offset();
  const std::size_t need = width * height * 3;
  if (bytes.size() - data_start < need) {
    r.fail("truncated pixel data, expected " + std::to_string(need) +
               " bytes from offset " + std::to_string(data_start),
           bytes.size());
  }
  return RgbImage(width, height,
                  std::vector<std::uint8_t>(bytes.begin() + data_start,
                                            bytes.begin() + data_start + need));
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  const std::string header = "P6\n" + std::to_string(image.width()) + " " +
                             std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.bytes().begin(), image.bytes().end());
  return out;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RgbImage read_image(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_ppm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_image(const fs::path& path, const RgbImage& image) {
  write_file_atomic(path, encode_ppm(image));
}

fs::path tmp_path(const fs::path& path) {
  fs::path p = path;
  p += ".tmp";
  return p;
}

void write_file_atomic(const fs::path& path,
                       std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = tmp_path(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()),
                              text.size()));
}

void commit_directory(const fs::path& staging, const fs::path& dir) {
  if (fs::exists(dir)) fs::remove_all(dir);
  if (dir.has_parent_path()) fs::create_directories(dir.parent_path());
  fs::rename(staging, dir);
}

}  // namespace cdee
