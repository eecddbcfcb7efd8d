#include "bfg/globalization.hpp"

#include "bfg/errors.hpp"

namespace bfg {

void SimilarityConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("similarity: lambda must be positive");
  if (!(xi > 0.0)) throw ConfigError("similarity: xi must be positive");
  if (!(max_clamp > 0.0)) throw ConfigError("similarity: max_clamp must be positive");
}

ag::Tensor distance(const ag::Tensor& features, const ag::Tensor& protos, const ag::Tensor& coords,
                    const ag::Tensor& proto_coords, const SimilarityConfig& cfg) {
  cfg.validate();
  if (features.cols() != protos.cols() || coords.rows() != features.rows() || proto_coords.rows() != protos.rows() ||
      coords.cols() != 3 || proto_coords.cols() != 3) {
    throw ContractError("distance: inconsistent shapes features " + features.shape().str() + ", prototypes " +
                        protos.shape().str() + ", coords " + coords.shape().str() + ", prototype coords " +
                        proto_coords.shape().str());
  }
  if (cfg.measure == Measure::L2Norm) {
    const ag::Tensor row_max = ag::clamp_min(ag::max_over_axis(features, 1), cfg.max_clamp);
    const ag::Tensor feature_term =
        ag::mul(ag::pairwise_sq_dist(features, protos), ag::div(ag::Tensor::scalar(cfg.lambda), row_max));
    return ag::sqrt(ag::add(feature_term, ag::pairwise_sq_dist(coords, proto_coords)));
  }
  const double s = cfg.ip_sign == IpSign::Literal ? 1.0 : -1.0;
  const ag::Tensor dots =
      ag::add(ag::matmul(features, ag::transpose(protos)), ag::matmul(coords, ag::transpose(proto_coords)));
  return ag::scale(dots, s * cfg.xi);
}

ag::Tensor similarity(const ag::Tensor& features, const ag::Tensor& protos, const ag::Tensor& coords,
                      const ag::Tensor& proto_coords, const SimilarityConfig& cfg) {
  return ag::exp(ag::negate(distance(features, protos, coords, proto_coords, cfg)));
}

// f / sum(f) along an axis equals a softmax of -D; the softmax form cannot
// underflow to 0 / 0 for large distances.
namespace {
ag::Tensor normalized_similarity(const ag::Tensor& dist, int axis) { return ag::softmax_over_axis(ag::negate(dist), axis); }
}  // namespace

Po2PrGResult po2prg(const MaskedPoints& masked, const PrototypeSet& initial, const SimilarityConfig& cfg) {
  const ag::Tensor coords = masked.coord_tensor();
  Po2PrGResult out;
  out.weights = normalized_similarity(distance(masked.features, initial.features, coords, initial.coords, cfg), 0);
  out.prototypes.class_id = initial.class_id;
  out.prototypes.features = ag::matmul(ag::transpose(out.weights), masked.features);
  out.prototypes.coords = initial.coords;
  out.prototypes.stage = PrototypeStage::Po2PrG;
  return out;
}

Pr2PoGResult pr2pog(const MaskedPoints& masked, const PrototypeSet& globalized, const SimilarityConfig& cfg) {
  const ag::Tensor coords = masked.coord_tensor();
  Pr2PoGResult out;
  out.point_weights =
      normalized_similarity(distance(masked.features, globalized.features, coords, globalized.coords, cfg), 1);
  out.updated_features = ag::add(masked.features, ag::matmul(out.point_weights, globalized.features));
  out.proto_weights =
      normalized_similarity(distance(out.updated_features, globalized.features, coords, globalized.coords, cfg), 0);
  out.prototypes.class_id = globalized.class_id;
  out.prototypes.features = ag::matmul(ag::transpose(out.proto_weights), out.updated_features);
  out.prototypes.coords = globalized.coords;
  out.prototypes.stage = PrototypeStage::Pr2PoG;
  return out;
}

}  // namespace bfg
