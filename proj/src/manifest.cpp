#include "cdee/manifest.hpp"

#include <charconv>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cdee/io.hpp"

namespace cdee {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::size_t parse_index(const std::string& s, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("line " + std::to_string(line) +
                                ": bad grid index '" + s + "'");
  }
  return v;
}

void check_field(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(",\n\r") != std::string::npos) {
    throw std::invalid_argument(std::string(what) + " '" + s +
                                "' is empty or contains a separator");
  }
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

std::string format_manifest(const std::vector<PatchRecord>& records) {
  std::ostringstream out;
  out << kManifestHeader << '\n';
  for (const PatchRecord& r : records) {
    check_field(r.patch_id, "patch_id");
    check_field(r.slide_id, "slide_id");
    out << r.patch_id << ',' << r.slide_id << ',' << to_string(r.class_label)
        << ',' << r.grid_x << ',' << r.grid_y << ',' << to_string(r.cluster)
        << ',' << to_string(r.split) << '\n';
  }
  return out.str();
}

std::vector<PatchRecord> parse_manifest(const std::string& text) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != kManifestHeader) {
    throw std::invalid_argument(std::string("manifest header must be '") +
                                kManifestHeader + "'");
  }
  std::vector<PatchRecord> out;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 7) {
      throw std::invalid_argument("manifest line " + std::to_string(i + 1) +
                                  ": expected 7 fields, got " +
                                  std::to_string(f.size()));
    }
    PatchRecord r;
    r.patch_id = f[0];
    r.slide_id = f[1];
    r.class_label = parse_class_label(f[2]);
    r.grid_x = parse_index(f[3], i + 1);
    r.grid_y = parse_index(f[4], i + 1);
    r.cluster = parse_cluster(f[5]);
    r.split = parse_split(f[6]);
    if (!seen.insert(r.patch_id).second) {
      throw std::invalid_argument("manifest line " + std::to_string(i + 1) +
                                  ": duplicate patch_id " + r.patch_id);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<PatchRecord>& records) {
  write_text_atomic(path, format_manifest(records));
}

std::vector<PatchRecord> read_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_manifest(std::string(bytes.begin(), bytes.end()));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string patch_file_name(const PatchRecord& record) {
  return record.patch_id + ".ppm";
}

void write_slide_index(const std::filesystem::path& path,
                       const std::vector<SlideEntry>& slides) {
  std::ostringstream out;
  out << "slide_id,class_label,file\n";
  for (const SlideEntry& s : slides) {
    check_field(s.slide_id, "slide_id");
    check_field(s.file, "file");
    out << s.slide_id << ',' << to_string(s.class_label) << ',' << s.file
        << '\n';
  }
  write_text_atomic(path, out.str());
}

std::vector<SlideEntry> read_slide_index(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto lines = lines_of(std::string(bytes.begin(), bytes.end()));
  if (lines.empty() || lines[0] != "slide_id,class_label,file") {
    throw std::invalid_argument(path.string() +
                                ": header must be 'slide_id,class_label,file'");
  }
  std::vector<SlideEntry> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 3) {
      throw std::invalid_argument(path.string() + " line " +
                                  std::to_string(i + 1) +
                                  ": expected 3 fields");
    }
    out.push_back({f[0], parse_class_label(f[1]), f[2]});
  }
  return out;
}

}  // namespace cdee
