#include "bfg/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>

#include "bfg/errors.hpp"

namespace bfg {

void LabeledCloud::push_back(const Point3& xyz, const Point3& rgb, int label) {
  coords.push_back(xyz);
  colors.push_back(rgb);
  labels.push_back(label);
}

void LabeledCloud::validate() const {
  if (colors.size() != coords.size() || labels.size() != coords.size()) {
    throw ContractError("LabeledCloud: ragged arrays (" + std::to_string(coords.size()) + " coords, " +
                        std::to_string(colors.size()) + " colors, " + std::to_string(labels.size()) + " labels)");
  }
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (double v : coords[i]) {
      if (!std::isfinite(v)) throw ContractError("LabeledCloud: non-finite coordinate at point " + std::to_string(i));
    }
    if (labels[i] < 0) throw ContractError("LabeledCloud: negative label at point " + std::to_string(i));
  }
}

std::size_t LabeledCloud::count_label(int label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

LabeledCloud LabeledCloud::subset(std::span<const std::size_t> indices) const {
  LabeledCloud out;
  out.coords.reserve(indices.size());
  out.colors.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw ContractError("LabeledCloud::subset: index out of range");
    out.push_back(coords[i], colors[i], labels[i]);
  }
  return out;
}

std::size_t ClassMask::count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); }

ClassMask make_mask(const LabeledCloud& cloud, int class_id) {
  ClassMask m{class_id, std::vector<bool>(cloud.size())};
  for (std::size_t i = 0; i < cloud.size(); ++i) m.mask[i] = cloud.labels[i] == class_id;
  return m;
}

std::vector<LabeledCloud> split_blocks(const LabeledCloud& cloud, double block_size) {
  if (!(block_size > 0.0)) throw ContractError("split_blocks: block_size must be positive");
  if (cloud.empty()) return {};
  double xmin = cloud.coords[0][0], ymin = cloud.coords[0][1];
  double xmax = xmin, ymax = ymin;
  for (const auto& p : cloud.coords) {
    xmin = std::min(xmin, p[0]);
    xmax = std::max(xmax, p[0]);
    ymin = std::min(ymin, p[1]);
    ymax = std::max(ymax, p[1]);
  }
  // A point on the far edge belongs to the last cell rather than opening a new one.
  auto cells = [&](double span) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span / block_size))); };
  const std::size_t nx = cells(xmax - xmin);
  const std::size_t ny = cells(ymax - ymin);
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto ix = std::min(nx - 1, static_cast<std::size_t>(std::floor((cloud.coords[i][0] - xmin) / block_size)));
    auto iy = std::min(ny - 1, static_cast<std::size_t>(std::floor((cloud.coords[i][1] - ymin) / block_size)));
    buckets[{ix, iy}].push_back(i);
  }
  std::vector<LabeledCloud> blocks;
  blocks.reserve(buckets.size());
  for (const auto& [cell, idx] : buckets) blocks.push_back(cloud.subset(idx));
  return blocks;
}

LabeledCloud sample_block(const LabeledCloud& block, std::size_t n_points, std::uint64_t seed) {
  if (block.empty()) throw ContractError("sample_block: empty block");
  if (n_points == 0) throw ContractError("sample_block: n_points must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(block.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (block.size() >= n_points) {
    // Partial Fisher-Yates: the first n_points entries are a uniform draw.
    for (std::size_t i = 0; i < n_points; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n_points);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, block.size() - 1);
    while (idx.size() < n_points) idx.push_back(pick(rng));
    std::shuffle(idx.begin(), idx.end(), rng);
  }
  return block.subset(idx);
}

LabeledCloud augment(const LabeledCloud& cloud, double jitter_sigma, bool rotate, std::uint64_t seed) {
  if (jitter_sigma < 0.0) throw ContractError("augment: jitter_sigma must be >= 0");
  LabeledCloud out = cloud;
  std::mt19937_64 rng(seed);
  if (jitter_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, jitter_sigma);
    for (auto& p : out.coords)
      for (double& v : p) v += noise(rng);
  }
  if (rotate && !out.empty()) {
    std::uniform_real_distribution<double> angle_dist(0.0, 2.0 * std::numbers::pi);
    const double angle = angle_dist(rng);
    const double c = std::cos(angle), s = std::sin(angle);
    double cx = 0.0, cy = 0.0;
    for (const auto& p : out.coords) {
      cx += p[0];
      cy += p[1];
    }
    cx /= static_cast<double>(out.size());
    cy /= static_cast<double>(out.size());
    for (auto& p : out.coords) {
      const double dx = p[0] - cx, dy = p[1] - cy;
      p[0] = cx + c * dx - s * dy;
      p[1] = cy + s * dx + c * dy;
    }
  }
  return out;
}

}  // namespace bfg
