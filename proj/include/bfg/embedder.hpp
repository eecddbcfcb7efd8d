#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "bfg/autograd.hpp"
#include "bfg/pointcloud.hpp"

namespace bfg {

// DGCNN-lite: EdgeConv layers over a static kNN graph, then a per-point head.
struct EmbedderConfig {
  int input_channels = 6;  // 3 = centered xyz, 6 = centered xyz + rgb
  std::vector<std::size_t> edge_widths{32, 64};
  std::size_t knn_k = 16;
  std::vector<std::size_t> head_widths{64, 64};  // last entry is the feature dimension D
  std::uint64_t seed = 1;

  std::size_t feature_dim() const { return head_widths.back(); }
  void validate() const;
};

// Row-major n x k neighbor indices.
struct NeighborGraph {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::size_t> indices;

  std::size_t at(std::size_t i, std::size_t j) const { return indices[i * k + j]; }
};

// k nearest points by Euclidean distance excluding the point itself, ordered
// by distance with ties broken by the smaller index.
NeighborGraph knn_graph(std::span<const Point3> coords, std::size_t k);

// Shared edge MLP applied to [f_i, f_j - f_i]; the C x C' halves of the
// 2C x C' weight matrix are stored separately.
struct EdgeConvWeights {
  ag::Tensor w_self;  // rows acting on f_i
  ag::Tensor w_edge;  // rows acting on f_j - f_i
  ag::Tensor bias;    // 1 x C'
};

// out_i = max over neighbors j of relu([f_i, f_j - f_i] W + b).
ag::Tensor edgeconv(const ag::Tensor& features, const NeighborGraph& graph, const EdgeConvWeights& weights);

// Glorot-uniform values for a fan_in x fan_out matrix.
std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

// Registers "embedder.*" parameters, initialized from cfg.seed.
void add_embedder_parameters(ag::ParameterSet& params, const EmbedderConfig& cfg);

// N x C input: per-block centered coordinates, optionally followed by colors.
ag::Tensor embedder_input(const LabeledCloud& cloud, const EmbedderConfig& cfg);

// N x D point features; row i belongs to input point i.
ag::Tensor embed(const LabeledCloud& cloud, const EmbedderConfig& cfg, const ag::ParameterSet& params);

}  // namespace bfg
