#include "bfg/fewshot.hpp"

#include <cmath>

#include "bfg/errors.hpp"

namespace bfg {

void ModelConfig::validate() const {
  embedder.validate();
  globalization.first().validate();
  if (prototypes == 0) throw ConfigError("model: prototype count must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("model: temperature must be positive");
}

ag::ParameterSet create_parameters(const ModelConfig& cfg) {
  cfg.validate();
  ag::ParameterSet params;
  add_embedder_parameters(params, cfg.embedder);
  add_spa_parameters(params, cfg.embedder.feature_dim(), cfg.spa_seed);
  return params;
}

namespace {

ClassPrototype class_prototype(const MaskedPoints& mp, const ag::ParameterSet& params, const ModelConfig& cfg,
                               Variant variant) {
  if (variant == Variant::Baseline) return {mp.class_id, mean_prototype(mp).features};
  PrototypeSet protos = generate_prototypes(mp, cfg.prototypes, cfg.seed_space);
  if (variant == Variant::SpGenPo2PrG || variant == Variant::FullBfg) {
    protos = po2prg(mp, protos, cfg.globalization.first()).prototypes;
  }
  if (variant == Variant::FullBfg) protos = pr2pog(mp, protos, cfg.globalization.second()).prototypes;
  return assemble(protos, params);
}

}  // namespace

std::vector<ClassPrototype> support_prototypes_from_features(const Episode& ep,
                                                             std::span<const ag::Tensor> support_features,
                                                             const ag::ParameterSet& params, const ModelConfig& cfg,
                                                             Variant variant) {
  if (support_features.size() != ep.support.size()) {
    throw ContractError("support_prototypes: one feature matrix per support shot required");
  }
  std::vector<ClassPrototype> out;
  for (std::size_t c = 0; c < ep.n_classes(); ++c) {
    std::vector<MaskedPoints> shots;
    for (std::size_t s = 0; s < ep.support.size(); ++s) {
      const auto& shot = ep.support[s];
      if (c > 0 && shot.way + 1 != c) continue;
      const ClassMask mask = make_mask(shot.cloud, static_cast<int>(c));
      if (mask.count() == 0) continue;
      shots.push_back(apply_mask(support_features[s], shot.cloud, mask));
    }
    if (shots.empty()) {
      throw ContractError("support_prototypes: no support points for episode class " + std::to_string(c));
    }
    out.push_back(class_prototype(pool_shots(shots), params, cfg, variant));
  }
  return out;
}

std::vector<ClassPrototype> support_prototypes(const Episode& ep, const ag::ParameterSet& params, const ModelConfig& cfg,
                                               Variant variant) {
  std::vector<ag::Tensor> features;
  for (const auto& shot : ep.support) features.push_back(embed(shot.cloud, cfg.embedder, params));
  return support_prototypes_from_features(ep, features, params, cfg, variant);
}

QueryResult classify_query(const ag::Tensor& query_features, std::span<const ClassPrototype> prototypes,
                           double temperature) {
  if (prototypes.empty()) throw ContractError("classify_query: no prototypes");
  constexpr double kMinNorm = 1e-12;
  std::vector<ag::Tensor> rows;
  for (const auto& p : prototypes) {
    if (p.vector.cols() != query_features.cols()) {
      throw ContractError("classify_query: prototype width " + std::to_string(p.vector.cols()) +
                          " does not match feature width " + std::to_string(query_features.cols()));
    }
    rows.push_back(p.vector);
  }
  const ag::Tensor protos = ag::concat(rows, 0);

  QueryResult result;
  const ag::Tensor feature_norms = ag::l2_row_norms(query_features);
  const ag::Tensor proto_norms = ag::l2_row_norms(protos);
  for (double v : feature_norms.values()) result.clamped_norms += v < kMinNorm;
  for (double v : proto_norms.values()) result.clamped_norms += v < kMinNorm;

  const ag::Tensor fq = ag::div(query_features, ag::clamp_min(feature_norms, kMinNorm));
  const ag::Tensor zp = ag::div(protos, ag::clamp_min(proto_norms, kMinNorm));
  result.logits = ag::scale(ag::matmul(fq, ag::transpose(zp)), temperature);

  const std::size_t n = result.logits.rows(), c = result.logits.cols();
  const auto v = result.logits.values();
  result.predictions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (v[i * c + j] > v[i * c + best]) best = j;
    result.predictions[i] = static_cast<int>(best);
  }
  return result;
}

ag::Tensor episode_loss(const ag::Tensor& logits, std::span<const int> labels) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) throw ContractError("episode_loss: label count does not match logits rows");
  std::vector<double> onehot(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ContractError("episode_loss: label " + std::to_string(labels[i]) + " out of range");
    }
    onehot[i * c + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  const ag::Tensor picked = ag::mul(ag::log_softmax_over_axis(logits, 1), ag::Tensor::constant({n, c}, std::move(onehot)));
  return ag::scale(ag::sum_all(picked), -1.0 / static_cast<double>(n));
}

EpisodeOutput run_episode(const Episode& ep, const ag::ParameterSet& params, const ModelConfig& cfg) {
  EpisodeOutput out;
  out.prototypes = support_prototypes(ep, params, cfg, cfg.variant);
  out.query = classify_query(embed(ep.query, cfg.embedder, params), out.prototypes, cfg.temperature);
  out.loss = episode_loss(out.query.logits, ep.query.labels);
  return out;
}

}  // namespace bfg
