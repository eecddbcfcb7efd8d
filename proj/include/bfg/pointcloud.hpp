#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace bfg {

using Point3 = std::array<double, 3>;

// Label 0 is reserved for background / clutter.
struct LabeledCloud {
  std::vector<Point3> coords;
  std::vector<Point3> colors;  // in [0, 1]; zero-filled when the source has none
  std::vector<int> labels;

  std::size_t size() const noexcept { return coords.size(); }
  bool empty() const noexcept { return coords.empty(); }
  void push_back(const Point3& xyz, const Point3& rgb, int label);
  // Throws ContractError on ragged arrays, non-finite coordinates or negative labels.
  void validate() const;
  std::size_t count_label(int label) const;
  LabeledCloud subset(std::span<const std::size_t> indices) const;
};

struct ClassMask {
  int class_id = 0;
  std::vector<bool> mask;

  std::size_t count() const;
};

ClassMask make_mask(const LabeledCloud& cloud, int class_id);

enum class PrimitiveKind { FloorPlane, WallPlane, Box, Cylinder, Wedge, Sphere };

// One class of the synthetic universe and how its instances are drawn.
struct ClassGenerator {
  std::string name;
  int label = 1;
  PrimitiveKind kind = PrimitiveKind::Box;
  double scale_min = 0.4;  // per-axis instance extent range in meters
  double scale_max = 0.9;
  int min_instances = 1;
  int max_instances = 1;
  Point3 color{0.5, 0.5, 0.5};
};

struct SceneSpec {
  std::vector<ClassGenerator> classes;
  double room_size = 4.0;
  double deformation = 0.15;  // maximum taper / squash fraction per instance
  double clutter_fraction = 0.04;
  double color_noise = 0.03;
  std::size_t points_per_scene = 24000;
  std::size_t block_sample_size = 512;
  std::uint64_t seed = 0;

  void validate() const;
  // box, cylinder, floor, sphere, wall, wedge with labels 1..6 in that order.
  static std::vector<ClassGenerator> default_universe();
};

LabeledCloud generate_scene(const SceneSpec& spec);

// Fixed xy grid anchored at the cloud's min corner; empty cells are dropped.
// Blocks are returned in (x cell, y cell) order.
std::vector<LabeledCloud> split_blocks(const LabeledCloud& cloud, double block_size);

// Exactly n_points points. Without replacement when the block is large
// enough; otherwise every point once plus uniform draws to fill.
LabeledCloud sample_block(const LabeledCloud& block, std::size_t n_points, std::uint64_t seed);

// Gaussian jitter of the coordinates, then an optional uniform rotation about
// the vertical axis through the cloud's xy centroid.
LabeledCloud augment(const LabeledCloud& cloud, double jitter_sigma, bool rotate, std::uint64_t seed);

// Text format: one point per line, "x y z r g b label"; '#' starts a comment.
LabeledCloud parse_cloud(std::istream& in, const std::string& source_name);
LabeledCloud read_cloud(const std::string& path);
void write_cloud(const LabeledCloud& cloud, std::ostream& out);
void write_cloud(const LabeledCloud& cloud, const std::string& path);

// ASCII PLY coloured by the fixed class palette applied to `labels`.
void write_ply(const LabeledCloud& cloud, std::span<const int> labels, const std::string& path);
std::array<unsigned char, 3> palette_color(int label);

}  // namespace bfg
