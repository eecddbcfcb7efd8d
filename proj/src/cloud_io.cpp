#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bfg/errors.hpp"
#include "bfg/pointcloud.hpp"

namespace bfg {

namespace {

template <typename T>
bool parse_number(std::string_view token, T& out) {
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

LabeledCloud parse_cloud(std::istream& in, const std::string& source_name) {
  LabeledCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;

    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto start = rest.find_first_not_of(" \t");
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      const auto stop = rest.find_first_of(" \t");
      fields.push_back(rest.substr(0, stop));
      rest.remove_prefix(stop == std::string_view::npos ? rest.size() : stop);
    }
    const std::string where = source_name + ":" + std::to_string(line_no);
    if (fields.size() != 7) {
      throw ParseError(where + ": expected 7 fields (x y z r g b label), found " + std::to_string(fields.size()));
    }
    Point3 xyz{}, rgb{};
    for (int i = 0; i < 3; ++i) {
      if (!parse_number(fields[i], xyz[i]) || !std::isfinite(xyz[i])) {
        throw ParseError(where + ": invalid coordinate '" + std::string(fields[i]) + "'");
      }
      if (!parse_number(fields[3 + i], rgb[i]) || !(rgb[i] >= 0.0 && rgb[i] <= 1.0)) {
        throw ParseError(where + ": invalid color '" + std::string(fields[3 + i]) + "' (expected a value in [0, 1])");
      }
    }
    int label = 0;
    if (!parse_number(fields[6], label) || label < 0) {
      throw ParseError(where + ": invalid label '" + std::string(fields[6]) + "'");
    }
    cloud.push_back(xyz, rgb, label);
  }
  return cloud;
}

LabeledCloud read_cloud(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cloud file " + path);
  return parse_cloud(in, path);
}

void write_cloud(const LabeledCloud& cloud, std::ostream& out) {
  cloud.validate();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.coords[i];
    const auto& c = cloud.colors[i];
    out << format_double(p[0]) << ' ' << format_double(p[1]) << ' ' << format_double(p[2]) << ' '
        << format_double(c[0]) << ' ' << format_double(c[1]) << ' ' << format_double(c[2]) << ' ' << cloud.labels[i]
        << '\n';
  }
}

void write_cloud(const LabeledCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_cloud(cloud, out);
  if (!out) throw IoError("failed writing " + path);
}

std::array<unsigned char, 3> palette_color(int label) {
  static constexpr std::array<std::array<unsigned char, 3>, 10> kPalette{{
      {128, 128, 128},
      {230, 25, 75},
      {60, 180, 75},
      {255, 225, 25},
      {0, 130, 200},
      {245, 130, 48},
      {145, 30, 180},
      {70, 240, 240},
      {240, 50, 230},
      {210, 245, 60},
  }};
  if (label < 0) return kPalette[0];
  return kPalette[static_cast<std::size_t>(label) % kPalette.size()];
}

void write_ply(const LabeledCloud& cloud, std::span<const int> labels, const std::string& path) {
  if (labels.size() != cloud.size()) throw ContractError("write_ply: label count does not match cloud size");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "ply\nformat ascii 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "property int label\nend_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto rgb = palette_color(labels[i]);
    const auto& p = cloud.coords[i];
    out << format_double(p[0]) << ' ' << format_double(p[1]) << ' ' << format_double(p[2]) << ' ' << int(rgb[0]) << ' '
        << int(rgb[1]) << ' ' << int(rgb[2]) << ' ' << labels[i] << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace bfg
