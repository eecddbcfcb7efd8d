#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "bfg/dataset.hpp"
#include "bfg/errors.hpp"
#include "bfg/pointcloud.hpp"
#include "support.hpp"

using namespace bfg;

namespace {

LabeledCloud grid_cloud(std::size_t n, std::uint64_t seed, double extent = 3.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, extent);
  std::uniform_int_distribution<int> lab(0, 3);
  LabeledCloud c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({u(rng), u(rng), u(rng)}, {0.1, 0.2, 0.3}, lab(rng));
  return c;
}

SceneSpec small_scene(std::uint64_t seed) {
  SceneSpec s;
  s.classes = SceneSpec::default_universe();
  s.points_per_scene = 5000;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("default universe is sorted by name with labels 1..6") {
  const auto u = SceneSpec::default_universe();
  REQUIRE(u.size() == 6);
  for (std::size_t i = 0; i < u.size(); ++i) {
    CHECK(u[i].label == static_cast<int>(i) + 1);
    if (i > 0) CHECK(u[i - 1].name < u[i].name);
  }
  const auto split = SplitSpec::alphabetical({{1, "box"}, {2, "cylinder"}, {3, "floor"}, {4, "sphere"}, {5, "wall"}, {6, "wedge"}});
  CHECK(split.s0 == std::vector<int>{1, 2, 3});
  CHECK(split.s1 == std::vector<int>{4, 5, 6});
}

TEST_CASE("generated scenes are deterministic, complete and inside the room") {
  const auto a = generate_scene(small_scene(3));
  const auto b = generate_scene(small_scene(3));
  const auto c = generate_scene(small_scene(4));
  CHECK(a.size() == 5000);
  CHECK(a.coords == b.coords);
  CHECK(a.labels == b.labels);
  CHECK(a.coords != c.coords);
  a.validate();
  std::set<int> labels(a.labels.begin(), a.labels.end());
  for (int l = 0; l <= 6; ++l) CHECK(labels.count(l) == 1);
  CHECK(a.count_label(0) == 200);
  for (const auto& p : a.coords)
    for (double v : p) {
      CHECK(v >= -1e-9);
      CHECK(v <= 4.0 + 1e-9);
    }
  for (const auto& col : a.colors)
    for (double v : col) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
}

TEST_CASE("empty universe is a configuration error") {
  SceneSpec s;
  CHECK_THROWS_AS(generate_scene(s), ConfigError);
}

TEST_CASE("split_blocks partitions the cloud") {
  const LabeledCloud cloud = grid_cloud(4000, 11, 3.4);
  const auto blocks = split_blocks(cloud, 1.0);
  // Counting oracle: histogram of clamped cells from first principles.
  double xmin = 1e9, ymin = 1e9, xmax = -1e9, ymax = -1e9;
  for (const auto& p : cloud.coords) {
    xmin = std::min(xmin, p[0]);
    ymin = std::min(ymin, p[1]);
    xmax = std::max(xmax, p[0]);
    ymax = std::max(ymax, p[1]);
  }
  const auto nx = static_cast<long>(std::ceil(xmax - xmin)), ny = static_cast<long>(std::ceil(ymax - ymin));
  std::map<std::pair<long, long>, std::size_t> hist;
  for (const auto& p : cloud.coords) {
    hist[{std::min(nx - 1, static_cast<long>(p[0] - xmin)), std::min(ny - 1, static_cast<long>(p[1] - ymin))}]++;
  }
  REQUIRE(blocks.size() == hist.size());
  std::size_t total = 0, k = 0;
  for (const auto& [cell, n] : hist) {
    CHECK(blocks[k].size() == n);
    total += blocks[k].size();
    ++k;
  }
  CHECK(total == cloud.size());
  std::multiset<Point3> all(cloud.coords.begin(), cloud.coords.end()), seen;
  for (const auto& b : blocks) seen.insert(b.coords.begin(), b.coords.end());
  CHECK(all == seen);
}

TEST_CASE("split_blocks keeps the far edge in the last cell") {
  LabeledCloud c;
  c.push_back({0, 0, 0}, {0, 0, 0}, 1);
  c.push_back({2, 2, 0}, {0, 0, 0}, 1);
  CHECK(split_blocks(c, 1.0).size() == 2);
  CHECK(split_blocks(c, 5.0).size() == 1);
}

TEST_CASE("sample_block draws without replacement when it can") {
  const LabeledCloud cloud = grid_cloud(300, 2);
  const auto s = sample_block(cloud, 100, 9);
  CHECK(s.size() == 100);
  std::set<Point3> distinct(s.coords.begin(), s.coords.end());
  CHECK(distinct.size() == 100);
  const auto again = sample_block(cloud, 100, 9);
  CHECK(again.coords == s.coords);
}

TEST_CASE("sample_block covers every point of a small block") {
  const LabeledCloud cloud = grid_cloud(40, 3);
  const auto s = sample_block(cloud, 100, 1);
  CHECK(s.size() == 100);
  std::map<Point3, int> mult;
  for (const auto& p : s.coords) ++mult[p];
  CHECK(mult.size() == 40);
  for (const auto& [p, n] : mult) CHECK(n >= 1);
}

TEST_CASE("augment jitter has the requested spread and rotation keeps radii") {
  LabeledCloud c;
  for (int i = 0; i < 20000; ++i) c.push_back({1.0, 2.0, 3.0}, {0, 0, 0}, 1);
  const auto j = augment(c, 0.05, false, 7);
  double sum = 0.0, sq = 0.0;
  for (const auto& p : j.coords) {
    const double d = p[2] - 3.0;
    sum += d;
    sq += d * d;
  }
  const double n = static_cast<double>(j.size());
  CHECK(std::abs(sum / n) < 5 * 0.05 / std::sqrt(n));
  CHECK(std::sqrt(sq / n) == doctest::Approx(0.05).epsilon(0.03));

  const LabeledCloud cloud = grid_cloud(50, 4);
  const auto r = augment(cloud, 0.0, true, 8);
  double cx = 0, cy = 0;
  for (const auto& p : cloud.coords) {
    cx += p[0] / 50.0;
    cy += p[1] / 50.0;
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double r0 = std::hypot(cloud.coords[i][0] - cx, cloud.coords[i][1] - cy);
    const double r1 = std::hypot(r.coords[i][0] - cx, r.coords[i][1] - cy);
    CHECK(r1 == doctest::Approx(r0).epsilon(1e-12));
    CHECK(r.coords[i][2] == cloud.coords[i][2]);
  }
  CHECK(r.labels == cloud.labels);
}

TEST_CASE("cloud text round trip is exact") {
  LabeledCloud c = grid_cloud(25, 5);
  c.coords[0] = {1.0 / 3.0, -1e-17, 123456.789};
  std::stringstream ss;
  write_cloud(c, ss);
  const auto back = parse_cloud(ss, "mem");
  CHECK(back.coords == c.coords);
  CHECK(back.colors == c.colors);
  CHECK(back.labels == c.labels);
}

TEST_CASE("parse errors name the line") {
  std::stringstream bad("# header\n0 0 0 0 0 0 1\n1 2 3 0.5 0.5\n");
  try {
    (void)parse_cloud(bad, "cloud.txt");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("cloud.txt:3") != std::string::npos);
    CHECK(msg.find("found 5") != std::string::npos);
  }
  std::stringstream neg("0 0 0 0 0 0 -2\n");
  CHECK_THROWS_AS((void)parse_cloud(neg, "x"), ParseError);
  std::stringstream junk("0 0 zero 0 0 0 1\n");
  CHECK_THROWS_AS((void)parse_cloud(junk, "x"), ParseError);
  CHECK_THROWS_AS((void)read_cloud("/nonexistent/cloud.txt"), IoError);
}

TEST_CASE("ply export lists every vertex with palette colors") {
  const LabeledCloud c = grid_cloud(12, 6);
  const auto path = (std::filesystem::temp_directory_path() / "bfg_test.ply").string();
  write_ply(c, c.labels, path);
  std::ifstream in(path);
  std::string line;
  std::size_t vertices = 0, body = 0;
  bool in_body = false;
  while (std::getline(in, line)) {
    if (line.rfind("element vertex ", 0) == 0) vertices = std::stoul(line.substr(15));
    if (in_body && !line.empty()) ++body;
    if (line == "end_header") in_body = true;
  }
  CHECK(vertices == 12);
  CHECK(body == 12);
  CHECK(palette_color(1) != palette_color(2));
  std::filesystem::remove(path);
}

TEST_CASE("mask selects exactly the class points") {
  const LabeledCloud c = grid_cloud(200, 7);
  const auto m = make_mask(c, 2);
  CHECK(m.count() == c.count_label(2));
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(m.mask[i] == (c.labels[i] == 2));
}

TEST_CASE("dataset build is deterministic and consistent with its inventory") {
  DataConfig cfg = testing::tiny_data_config();
  std::vector<LabeledCloud> scenes;
  const Dataset a = build_dataset(cfg, &scenes);
  const Dataset b = build_dataset(cfg);
  REQUIRE(scenes.size() == cfg.scenes);
  std::size_t expected_blocks = 0;
  for (const auto& s : scenes) expected_blocks += split_blocks(s, cfg.block_size).size();
  CHECK(a.blocks.size() == expected_blocks);
  REQUIRE(a.blocks.size() == b.blocks.size());
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    CHECK(a.blocks[i].coords == b.blocks[i].coords);
    CHECK(a.blocks[i].size() == cfg.points_per_block);
    std::size_t total = 0;
    for (const auto& [l, n] : a.inventory[i]) {
      CHECK(n == a.blocks[i].count_label(l));
      total += n;
    }
    CHECK(total == cfg.points_per_block);
  }

  const auto dir = (std::filesystem::temp_directory_path() / "bfg_dataset_rt").string();
  std::filesystem::remove_all(dir);
  write_dataset(a, scenes, dir, "test");
  const Dataset back = load_dataset(dir);
  CHECK(back.classes.size() == a.classes.size());
  CHECK(back.class_name(4) == "sphere");
  REQUIRE(back.blocks.size() == a.blocks.size());
  CHECK(back.blocks[3].coords == a.blocks[3].coords);
  CHECK(back.inventory == a.inventory);
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_dataset(dir), DataError);
}
