#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bfg/autograd.hpp"
#include "bfg/pointcloud.hpp"

namespace bfg {

// Points of one class: features (m x D), raw coordinates and their row
// indices in the source cloud.
struct MaskedPoints {
  int class_id = 0;
  ag::Tensor features;
  std::vector<Point3> coords;
  std::vector<std::size_t> indices;

  std::size_t size() const noexcept { return coords.size(); }
  ag::Tensor coord_tensor() const;  // m x 3 constant
};

MaskedPoints apply_mask(const ag::Tensor& features, const LabeledCloud& cloud, const ClassMask& mask);

// Concatenates the masked points of several support shots of one class.
MaskedPoints pool_shots(std::span<const MaskedPoints> shots);

struct PartAssignment {
  std::vector<std::size_t> seeds;       // K row indices into the masked points
  std::vector<std::size_t> assignment;  // part id per masked point
};

// Greedy farthest point sampling over m points of dimension dim (row-major).
// The first seed is the point farthest from the centroid; each next seed
// maximizes the distance to the seeds chosen so far. Ties go to the smaller
// index.
std::vector<std::size_t> fps(std::span<const double> points, std::size_t dim, std::size_t count);

// Nearest seed per point (ties to the smaller seed index); every seed point
// is assigned to its own part.
PartAssignment assign_to_seeds(std::span<const double> points, std::size_t dim, std::span<const std::size_t> seeds);

enum class PrototypeStage { Initial, Po2PrG, Pr2PoG, AssembledInput };

struct PrototypeSet {
  int class_id = 0;
  ag::Tensor features;  // K x D
  ag::Tensor coords;    // K x 3, constant
  PrototypeStage stage = PrototypeStage::Initial;

  std::size_t count() const { return features.rows(); }
};

// Per-part means of features and coordinates; the partition itself carries
// no gradient.
PrototypeSet extract_prototypes(const MaskedPoints& mp, const PartAssignment& parts);

enum class SeedSpace { Feature, Coordinate };

// Full sparse prototype generation for one class. K is clipped to the number
// of masked points.
PrototypeSet generate_prototypes(const MaskedPoints& mp, std::size_t k, SeedSpace space = SeedSpace::Feature);

// Masked average pooling: the single-prototype baseline.
PrototypeSet mean_prototype(const MaskedPoints& mp);

struct ClassPrototype {
  int class_id = 0;
  ag::Tensor vector;  // 1 x D
};

// "spa.*" parameters: one hidden layer of width D with a rectifier, output D,
// both weight matrices initialized near the identity.
void add_spa_parameters(ag::ParameterSet& params, std::size_t dim, std::uint64_t seed);

// Shared MLP applied to each prototype row.
ag::Tensor spa_transform(const ag::Tensor& prototypes, const ag::ParameterSet& params);

struct SpaFusion {
  ag::Tensor weights;  // K x D, per-channel softmax over the K prototypes
  ag::Tensor fused;    // 1 x D
};

// Per-channel convex combination of already transformed prototypes.
SpaFusion spa_fuse(const ag::Tensor& transformed);

ClassPrototype assemble(const PrototypeSet& protos, const ag::ParameterSet& params);

}  // namespace bfg
