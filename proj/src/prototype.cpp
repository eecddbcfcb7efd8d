#include "bfg/prototype.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include "bfg/embedder.hpp"
#include "bfg/errors.hpp"

namespace bfg {

namespace {

double sq_dist(std::span<const double> points, std::size_t dim, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t c = 0; c < dim; ++c) {
    const double d = points[a * dim + c] - points[b * dim + c];
    s += d * d;
  }
  return s;
}

std::vector<double> flatten(const std::vector<Point3>& pts) {
  std::vector<double> out;
  out.reserve(pts.size() * 3);
  for (const auto& p : pts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

ag::Tensor MaskedPoints::coord_tensor() const { return ag::Tensor::constant({size(), 3}, flatten(coords)); }

MaskedPoints apply_mask(const ag::Tensor& features, const LabeledCloud& cloud, const ClassMask& mask) {
  if (mask.mask.size() != cloud.size() || features.rows() != cloud.size()) {
    throw ContractError("apply_mask: mask of " + std::to_string(mask.mask.size()) + " entries, cloud of " +
                        std::to_string(cloud.size()) + " points, features with " + std::to_string(features.rows()) +
                        " rows");
  }
  MaskedPoints mp;
  mp.class_id = mask.class_id;
  for (std::size_t i = 0; i < mask.mask.size(); ++i) {
    if (!mask.mask[i]) continue;
    mp.indices.push_back(i);
    mp.coords.push_back(cloud.coords[i]);
  }
  if (mp.indices.empty()) throw ContractError("apply_mask: empty mask for class " + std::to_string(mask.class_id));
  mp.features = ag::gather_rows(features, mp.indices);
  return mp;
}

MaskedPoints pool_shots(std::span<const MaskedPoints> shots) {
  if (shots.empty()) throw ContractError("pool_shots: no shots");
  if (shots.size() == 1) return shots.front();
  MaskedPoints out;
  out.class_id = shots.front().class_id;
  std::vector<ag::Tensor> parts;
  for (const auto& s : shots) {
    parts.push_back(s.features);
    out.coords.insert(out.coords.end(), s.coords.begin(), s.coords.end());
    out.indices.insert(out.indices.end(), s.indices.begin(), s.indices.end());
  }
  out.features = ag::concat(parts, 0);
  return out;
}

std::vector<std::size_t> fps(std::span<const double> points, std::size_t dim, std::size_t count) {
  if (dim == 0 || points.size() % dim != 0) throw ContractError("fps: point buffer is not a multiple of dim");
  const std::size_t m = points.size() / dim;
  if (count == 0 || count > m) {
    throw ContractError("fps: cannot pick " + std::to_string(count) + " seeds from " + std::to_string(m) + " points");
  }
  std::vector<double> centroid(dim, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < dim; ++c) centroid[c] += points[i * dim + c];
  for (double& v : centroid) v /= static_cast<double>(m);

  std::size_t first = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = points[i * dim + c] - centroid[c];
      s += d * d;
    }
    if (s > best) {
      best = s;
      first = i;
    }
  }

  std::vector<std::size_t> seeds{first};
  std::vector<double> min_dist(m, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(m, false);
  chosen[first] = true;
  while (seeds.size() < count) {
    const std::size_t last = seeds.back();
    std::size_t next = m;
    double far = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
      min_dist[i] = std::min(min_dist[i], sq_dist(points, dim, i, last));
      if (!chosen[i] && min_dist[i] > far) {
        far = min_dist[i];
        next = i;
      }
    }
    chosen[next] = true;
    seeds.push_back(next);
  }
  return seeds;
}

PartAssignment assign_to_seeds(std::span<const double> points, std::size_t dim, std::span<const std::size_t> seeds) {
  if (dim == 0 || points.size() % dim != 0) throw ContractError("assign_to_seeds: point buffer is not a multiple of dim");
  const std::size_t m = points.size() / dim;
  if (seeds.empty()) throw ContractError("assign_to_seeds: no seeds");
  PartAssignment pa{std::vector<std::size_t>(seeds.begin(), seeds.end()), std::vector<std::size_t>(m)};
  for (std::size_t s : seeds)
    if (s >= m) throw ContractError("assign_to_seeds: seed index out of range");
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t part = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      const double d = sq_dist(points, dim, i, seeds[k]);
      if (d < best) {
        best = d;
        part = k;
      }
    }
    pa.assignment[i] = part;
  }
  for (std::size_t k = 0; k < seeds.size(); ++k) pa.assignment[seeds[k]] = k;
  return pa;
}

PrototypeSet extract_prototypes(const MaskedPoints& mp, const PartAssignment& parts) {
  if (parts.assignment.size() != mp.size()) throw ContractError("extract_prototypes: assignment does not match points");
  const std::size_t k = parts.seeds.size();
  PrototypeSet ps;
  ps.class_id = mp.class_id;
  ps.features = ag::scatter_mean(mp.features, parts.assignment, k);
  ps.coords = ag::scatter_mean(mp.coord_tensor(), parts.assignment, k);
  ps.stage = PrototypeStage::Initial;
  return ps;
}

PrototypeSet generate_prototypes(const MaskedPoints& mp, std::size_t k, SeedSpace space) {
  if (mp.size() == 0) throw ContractError("generate_prototypes: no masked points");
  k = std::clamp<std::size_t>(k, 1, mp.size());
  std::vector<double> buffer;
  std::size_t dim = 3;
  if (space == SeedSpace::Feature) {
    buffer.assign(mp.features.values().begin(), mp.features.values().end());
    dim = mp.features.cols();
  } else {
    buffer = flatten(mp.coords);
  }
  const auto seeds = fps(buffer, dim, k);
  return extract_prototypes(mp, assign_to_seeds(buffer, dim, seeds));
}

PrototypeSet mean_prototype(const MaskedPoints& mp) {
  const std::vector<std::size_t> single(mp.size(), 0);
  return extract_prototypes(mp, PartAssignment{{0}, single});
}

namespace {

// Identity plus a small seeded perturbation. Prototype features are
// nonnegative, so at initialization the MLP passes them through almost
// unchanged and assembly starts out as a plain per-channel fusion.
std::vector<double> near_identity(std::size_t dim, std::mt19937_64& rng) {
  constexpr double kPerturbation = 0.01;
  std::vector<double> w = glorot_uniform(dim, dim, rng);
  for (double& v : w) v *= kPerturbation;
  for (std::size_t i = 0; i < dim; ++i) w[i * dim + i] += 1.0;
  return w;
}

}  // namespace

void add_spa_parameters(ag::ParameterSet& params, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  params.add("spa.hidden.weight", {dim, dim}, near_identity(dim, rng));
  params.add("spa.hidden.bias", {1, dim}, std::vector<double>(dim, 0.0));
  params.add("spa.out.weight", {dim, dim}, near_identity(dim, rng));
  params.add("spa.out.bias", {1, dim}, std::vector<double>(dim, 0.0));
}

ag::Tensor spa_transform(const ag::Tensor& prototypes, const ag::ParameterSet& params) {
  const ag::Tensor hidden =
      ag::relu(ag::add(ag::matmul(prototypes, params.at("spa.hidden.weight")), params.at("spa.hidden.bias")));
  return ag::add(ag::matmul(hidden, params.at("spa.out.weight")), params.at("spa.out.bias"));
}

SpaFusion spa_fuse(const ag::Tensor& transformed) {
  SpaFusion f;
  f.weights = ag::softmax_over_axis(transformed, 0);
  f.fused = ag::sum_over_axis(ag::mul(f.weights, transformed), 0);
  return f;
}

ClassPrototype assemble(const PrototypeSet& protos, const ag::ParameterSet& params) {
  if (protos.count() == 0) throw ContractError("assemble: empty prototype set");
  return ClassPrototype{protos.class_id, spa_fuse(spa_transform(protos.features, params)).fused};
}

}  // namespace bfg
