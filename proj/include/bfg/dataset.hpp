#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bfg/pointcloud.hpp"

namespace bfg {

struct ClassInfo {
  int label = 0;
  std::string name;
};

struct DataConfig {
  std::uint64_t seed = 7;
  std::size_t scenes = 24;
  double block_size = 1.0;
  std::size_t points_per_block = 512;
  SceneSpec scene;  // universe, room and density; its seed is replaced per scene

  DataConfig();
  void validate() const;
};

// Blocks already sampled to points_per_block, with per-label point counts.
struct Dataset {
  std::vector<ClassInfo> classes;
  std::vector<LabeledCloud> blocks;
  std::vector<std::size_t> block_scene;
  std::vector<std::size_t> block_raw_points;
  std::vector<std::map<int, std::size_t>> inventory;

  std::size_t count(std::size_t block, int label) const;
  std::string class_name(int label) const;
};

// Scenes are generated from derived seeds, split into blocks and each block
// is sampled once. `scenes_out`, when given, receives the full scenes.
Dataset build_dataset(const DataConfig& cfg, std::vector<LabeledCloud>* scenes_out = nullptr);

// Directory layout: manifest.csv, scenes/scene_NNN.txt, blocks/block_NNNNN.txt.
void write_dataset(const Dataset& data, const std::vector<LabeledCloud>& scenes, const std::string& dir,
                   const std::string& header_comment);
Dataset load_dataset(const std::string& dir);

// Two disjoint class lists; classes sorted by name, first half in s0.
struct SplitSpec {
  std::vector<int> s0;
  std::vector<int> s1;

  static SplitSpec alphabetical(const std::vector<ClassInfo>& classes);
  void validate() const;
};

}  // namespace bfg
