#include "bfg/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "bfg/errors.hpp"
#include "bfg/seed.hpp"

namespace bfg {

namespace fs = std::filesystem;

DataConfig::DataConfig() { scene.classes = SceneSpec::default_universe(); }

void DataConfig::validate() const {
  if (scenes == 0) throw ConfigError("data: scenes must be >= 1");
  if (!(block_size > 0.0)) throw ConfigError("data: block_size must be positive");
  if (points_per_block == 0) throw ConfigError("data: points_per_block must be >= 1");
  SceneSpec s = scene;
  s.block_sample_size = points_per_block;
  s.validate();
}

std::size_t Dataset::count(std::size_t block, int label) const {
  const auto& inv = inventory.at(block);
  auto it = inv.find(label);
  return it == inv.end() ? 0 : it->second;
}

std::string Dataset::class_name(int label) const {
  if (label == 0) return "background";
  for (const auto& c : classes)
    if (c.label == label) return c.name;
  return "class" + std::to_string(label);
}

namespace {

std::map<int, std::size_t> count_labels(const LabeledCloud& c) {
  std::map<int, std::size_t> inv;
  for (int l : c.labels) ++inv[l];
  return inv;
}

std::string zero_pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

}  // namespace

Dataset build_dataset(const DataConfig& cfg, std::vector<LabeledCloud>* scenes_out) {
  cfg.validate();
  Dataset data;
  for (const auto& c : cfg.scene.classes) data.classes.push_back({c.label, c.name});
  for (std::size_t s = 0; s < cfg.scenes; ++s) {
    SceneSpec spec = cfg.scene;
    spec.block_sample_size = cfg.points_per_block;
    spec.seed = derive_seed(cfg.seed, {1, s});
    LabeledCloud scene = generate_scene(spec);
    const auto blocks = split_blocks(scene, cfg.block_size);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      LabeledCloud sampled = sample_block(blocks[b], cfg.points_per_block, derive_seed(cfg.seed, {2, s, b}));
      data.inventory.push_back(count_labels(sampled));
      data.blocks.push_back(std::move(sampled));
      data.block_scene.push_back(s);
      data.block_raw_points.push_back(blocks[b].size());
    }
    if (scenes_out) scenes_out->push_back(std::move(scene));
  }
  return data;
}

void write_dataset(const Dataset& data, const std::vector<LabeledCloud>& scenes, const std::string& dir,
                   const std::string& header_comment) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "scenes", ec);
  fs::create_directories(fs::path(dir) / "blocks", ec);
  if (ec) throw IoError("cannot create dataset directory " + dir + ": " + ec.message());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    write_cloud(scenes[s], (fs::path(dir) / "scenes" / ("scene_" + zero_pad(s, 3) + ".txt")).string());
  }
  std::ofstream manifest(fs::path(dir) / "manifest.csv", std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest in " + dir);
  if (!header_comment.empty()) manifest << "# " << header_comment << '\n';
  manifest << "# classes=";
  for (std::size_t i = 0; i < data.classes.size(); ++i) {
    manifest << (i ? "," : "") << data.classes[i].label << ':' << data.classes[i].name;
  }
  manifest << "\nblock,scene,file,raw_points,inventory\n";
  for (std::size_t b = 0; b < data.blocks.size(); ++b) {
    const std::string rel = "blocks/block_" + zero_pad(b, 5) + ".txt";
    write_cloud(data.blocks[b], (fs::path(dir) / rel).string());
    manifest << b << ',' << data.block_scene[b] << ',' << rel << ',' << data.block_raw_points[b] << ',';
    bool first = true;
    for (const auto& [label, n] : data.inventory[b]) {
      manifest << (first ? "" : ";") << label << ':' << n;
      first = false;
    }
    manifest << '\n';
  }
  if (!manifest) throw IoError("failed writing manifest in " + dir);
}

Dataset load_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.csv";
  std::ifstream in(manifest_path);
  if (!in) throw DataError("missing data: no manifest at " + manifest_path.string());
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("# classes=", 0) == 0) {
      std::stringstream ss(line.substr(10));
      std::string item;
      while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ParseError(manifest_path.string() + ": malformed class list");
        data.classes.push_back({std::stoi(item.substr(0, colon)), item.substr(colon + 1)});
      }
      continue;
    }
    if (line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string block, scene, file, raw;
    if (!std::getline(ss, block, ',') || !std::getline(ss, scene, ',') || !std::getline(ss, file, ',') ||
        !std::getline(ss, raw, ',')) {
      throw ParseError(manifest_path.string() + ":" + std::to_string(line_no) + ": malformed manifest row");
    }
    LabeledCloud cloud = read_cloud((fs::path(dir) / file).string());
    data.inventory.push_back(count_labels(cloud));
    data.blocks.push_back(std::move(cloud));
    data.block_scene.push_back(std::stoul(scene));
    data.block_raw_points.push_back(std::stoul(raw));
  }
  if (data.blocks.empty()) throw DataError("missing data: manifest at " + manifest_path.string() + " lists no blocks");
  if (data.classes.empty()) throw ParseError(manifest_path.string() + ": missing class list");
  return data;
}

SplitSpec SplitSpec::alphabetical(const std::vector<ClassInfo>& classes) {
  std::vector<ClassInfo> sorted = classes;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  SplitSpec split;
  const std::size_t half = sorted.size() / 2;
  for (std::size_t i = 0; i < sorted.size(); ++i) (i < half ? split.s0 : split.s1).push_back(sorted[i].label);
  return split;
}

void SplitSpec::validate() const {
  if (s0.empty() || s1.empty()) throw ConfigError("split: both class lists must be nonempty");
  std::set<int> a(s0.begin(), s0.end());
  for (int c : s1)
    if (a.count(c)) throw ConfigError("split: class " + std::to_string(c) + " appears in both splits");
}

}  // namespace bfg
