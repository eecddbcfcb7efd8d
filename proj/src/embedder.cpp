#include "bfg/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bfg/errors.hpp"

namespace bfg {

void EmbedderConfig::validate() const {
  if (input_channels != 3 && input_channels != 6) throw ConfigError("embedder: input_channels must be 3 or 6");
  if (edge_widths.empty() || head_widths.empty()) throw ConfigError("embedder: layer width lists must be nonempty");
  for (auto w : edge_widths)
    if (w == 0) throw ConfigError("embedder: edgeconv widths must be >= 1");
  for (auto w : head_widths)
    if (w == 0) throw ConfigError("embedder: head widths must be >= 1");
  if (knn_k == 0) throw ConfigError("embedder: knn_k must be >= 1");
}

NeighborGraph knn_graph(std::span<const Point3> coords, std::size_t k) {
  const std::size_t n = coords.size();
  if (k == 0 || k >= n) {
    throw ContractError("knn_graph: k = " + std::to_string(k) + " requires at least k + 1 points, got " + std::to_string(n));
  }
  NeighborGraph g{n, k, std::vector<std::size_t>(n * k)};
  std::vector<std::pair<double, std::size_t>> cand(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = coords[i][0] - coords[j][0];
      const double dy = coords[i][1] - coords[j][1];
      const double dz = coords[i][2] - coords[j][2];
      cand[c++] = {dx * dx + dy * dy + dz * dz, j};
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t j = 0; j < k; ++j) g.indices[i * k + j] = cand[j].second;
  }
  return g;
}

ag::Tensor edgeconv(const ag::Tensor& features, const NeighborGraph& graph, const EdgeConvWeights& weights) {
  if (graph.n != features.rows()) {
    throw ContractError("edgeconv: graph over " + std::to_string(graph.n) + " points, features have " +
                        std::to_string(features.rows()) + " rows");
  }
  // [f_i, f_j - f_i] W = f_i (W_self - W_edge) + f_j W_edge, so the edge term
  // is one projection per point gathered per neighbor.
  const ag::Tensor center = ag::add(ag::sub(ag::matmul(features, weights.w_self), ag::matmul(features, weights.w_edge)),
                                    weights.bias);
  const ag::Tensor projected = ag::matmul(features, weights.w_edge);
  ag::Tensor best;
  std::vector<std::size_t> column(graph.n);
  for (std::size_t j = 0; j < graph.k; ++j) {
    for (std::size_t i = 0; i < graph.n; ++i) column[i] = graph.at(i, j);
    ag::Tensor edge = ag::add(center, ag::gather_rows(projected, column));
    best = best.defined() ? ag::maximum(best, edge) : edge;
  }
  // relu is monotone, so max-then-relu equals max over relu'd edges.
  return ag::relu(best);
}

std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<double> w(fan_in * fan_out);
  for (double& v : w) v = dist(rng);
  return w;
}

void add_embedder_parameters(ag::ParameterSet& params, const EmbedderConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::size_t in = static_cast<std::size_t>(cfg.input_channels);
  std::size_t concat_width = 0;
  for (std::size_t l = 0; l < cfg.edge_widths.size(); ++l) {
    const std::size_t out = cfg.edge_widths[l];
    const auto full = glorot_uniform(2 * in, out, rng);
    const auto half = static_cast<std::ptrdiff_t>(in * out);
    const std::string prefix = "embedder.edge" + std::to_string(l) + ".";
    params.add(prefix + "w_self", {in, out}, std::vector<double>(full.begin(), full.begin() + half));
    params.add(prefix + "w_edge", {in, out}, std::vector<double>(full.begin() + half, full.end()));
    params.add(prefix + "bias", {1, out}, std::vector<double>(out, 0.0));
    concat_width += out;
    in = out;
  }
  in = concat_width;
  for (std::size_t l = 0; l < cfg.head_widths.size(); ++l) {
    const std::size_t out = cfg.head_widths[l];
    const std::string prefix = "embedder.head" + std::to_string(l) + ".";
    params.add(prefix + "weight", {in, out}, glorot_uniform(in, out, rng));
    params.add(prefix + "bias", {1, out}, std::vector<double>(out, 0.0));
    in = out;
  }
}

ag::Tensor embedder_input(const LabeledCloud& cloud, const EmbedderConfig& cfg) {
  const std::size_t n = cloud.size();
  const auto c = static_cast<std::size_t>(cfg.input_channels);
  Point3 centroid{0, 0, 0};
  for (const auto& p : cloud.coords)
    for (int d = 0; d < 3; ++d) centroid[d] += p[d];
  for (double& v : centroid) v /= static_cast<double>(n);
  std::vector<double> x(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < 3; ++d) x[i * c + d] = cloud.coords[i][d] - centroid[d];
    if (c == 6)
      for (std::size_t d = 0; d < 3; ++d) x[i * c + 3 + d] = cloud.colors[i][d];
  }
  return ag::Tensor::constant({n, c}, std::move(x));
}

ag::Tensor embed(const LabeledCloud& cloud, const EmbedderConfig& cfg, const ag::ParameterSet& params) {
  if (cloud.size() < cfg.knn_k + 1) {
    throw ContractError("embed: cloud of " + std::to_string(cloud.size()) + " points is too small for knn_k = " +
                        std::to_string(cfg.knn_k));
  }
  // Distances are translation invariant, so the raw coordinates give the same graph.
  const NeighborGraph graph = knn_graph(cloud.coords, cfg.knn_k);
  ag::Tensor h = embedder_input(cloud, cfg);
  std::vector<ag::Tensor> levels;
  for (std::size_t l = 0; l < cfg.edge_widths.size(); ++l) {
    const std::string prefix = "embedder.edge" + std::to_string(l) + ".";
    h = edgeconv(h, graph, {params.at(prefix + "w_self"), params.at(prefix + "w_edge"), params.at(prefix + "bias")});
    levels.push_back(h);
  }
  h = levels.size() == 1 ? levels.front() : ag::concat(levels, 1);
  for (std::size_t l = 0; l < cfg.head_widths.size(); ++l) {
    const std::string prefix = "embedder.head" + std::to_string(l) + ".";
    h = ag::relu(ag::add(ag::matmul(h, params.at(prefix + "weight")), params.at(prefix + "bias")));
  }
  return h;
}

}  // namespace bfg
