#pragma once

#include "bfg/autograd.hpp"
#include "bfg/prototype.hpp"

namespace bfg {

enum class Measure { L2Norm, InnerProduct };

// literal: D = +xi * (inner products), so similarity falls with alignment.
// aligned: D = -xi * (inner products), so better-aligned prototypes weigh more.
enum class IpSign { Literal, Aligned };

struct SimilarityConfig {
  Measure measure = Measure::L2Norm;
  double lambda = 0.85;
  double xi = 0.5;
  IpSign ip_sign = IpSign::Aligned;
  double max_clamp = 1e-6;  // lower bound on max_i F(n, i) in the L2 scale term

  void validate() const;
};

// Distances for both globalization passes (po2prg uses measure1, pr2pog measure2).
struct GlobalizationConfig {
  Measure measure1 = Measure::L2Norm;
  Measure measure2 = Measure::InnerProduct;
  double lambda = 0.85;
  double xi = 0.5;
  IpSign ip_sign = IpSign::Aligned;
  double max_clamp = 1e-6;

  SimilarityConfig first() const { return {measure1, lambda, xi, ip_sign, max_clamp}; }
  SimilarityConfig second() const { return {measure2, lambda, xi, ip_sign, max_clamp}; }
};

// m x K distances D between point rows and prototype rows.
//   l2norm:        sqrt(lambda / max(max_i F(n,i), clamp) * |F_n - mu_k|^2 + |J_n - muJ_k|^2)
//   inner product: s * xi * (mu_k . F_n + muJ_k . J_n), s = +1 literal, -1 aligned
ag::Tensor distance(const ag::Tensor& features, const ag::Tensor& protos, const ag::Tensor& coords,
                    const ag::Tensor& proto_coords, const SimilarityConfig& cfg);

// exp(-D); strictly positive.
ag::Tensor similarity(const ag::Tensor& features, const ag::Tensor& protos, const ag::Tensor& coords,
                      const ag::Tensor& proto_coords, const SimilarityConfig& cfg);

struct Po2PrGResult {
  PrototypeSet prototypes;  // stage Po2PrG, coordinates unchanged
  ag::Tensor weights;       // m x K, each column sums to 1
};

// Point-to-prototype pass: each prototype becomes the similarity-weighted
// average of all masked point features.
Po2PrGResult po2prg(const MaskedPoints& masked, const PrototypeSet& initial, const SimilarityConfig& cfg);

struct Pr2PoGResult {
  ag::Tensor updated_features;  // m x D, F + sum_k w~(k, n) v_k
  PrototypeSet prototypes;      // stage Pr2PoG
  ag::Tensor point_weights;     // m x K, w~ transposed: each row sums to 1
  ag::Tensor proto_weights;     // m x K, w^: each column sums to 1
};

// Prototype-to-point pass: points absorb a similarity-weighted mixture of
// prototypes, then prototypes are re-aggregated from the updated points.
Pr2PoGResult pr2pog(const MaskedPoints& masked, const PrototypeSet& globalized, const SimilarityConfig& cfg);

}  // namespace bfg
