#include <cmath>

#include "bfg/errors.hpp"
#include "bfg/fewshot.hpp"
#include "bfg/seed.hpp"

namespace bfg {

TrainerConfig::TrainerConfig() { episode.augment = true; }

void TrainerConfig::validate() const {
  if (iterations == 0) throw ConfigError("trainer: iterations must be >= 1");
  if (lr_embedder < 0.0 || lr_rest < 0.0) throw ConfigError("trainer: learning rates must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("trainer: beta1 and beta2 must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("trainer: epsilon must be positive");
  episode.validate();
}

void Adam::step(const ag::ParameterSet& params, double lr_embedder, double lr_rest) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(beta1_, t);
  const double correction2 = 1.0 - std::pow(beta2_, t);
  for (const auto& [name, tensor] : params.entries()) {
    const double lr = name.rfind("embedder.", 0) == 0 ? lr_embedder : lr_rest;
    auto& m = m_[name];
    auto& v = v_[name];
    const auto g = tensor.grad();
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    ag::Tensor handle = tensor;
    auto w = handle.mutable_values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + epsilon_);
    }
  }
}

void Adam::save(ag::Checkpoint& ckpt) const {
  for (const auto& [name, m] : m_) {
    ckpt["adam.m." + name] = {{m.size(), 1}, m};
    ckpt["adam.v." + name] = {{m.size(), 1}, v_.at(name)};
  }
  ckpt["adam.steps"] = {{1, 1}, {static_cast<double>(steps_)}};
}

void Adam::load(const ag::Checkpoint& ckpt, const ag::ParameterSet& params) {
  m_.clear();
  v_.clear();
  auto it = ckpt.find("adam.steps");
  steps_ = it == ckpt.end() ? 0 : static_cast<std::size_t>(it->second.values.at(0));
  for (const auto& [name, tensor] : params.entries()) {
    auto m = ckpt.find("adam.m." + name);
    auto v = ckpt.find("adam.v." + name);
    if (m == ckpt.end() || v == ckpt.end()) continue;
    if (m->second.values.size() != tensor.shape().size() || v->second.values.size() != tensor.shape().size()) {
      throw DataError("incompatible checkpoint: optimizer state for " + name + " holds " +
                      std::to_string(m->second.values.size()) + " entries, parameter has shape " + tensor.shape().str());
    }
    m_[name] = m->second.values;
    v_[name] = v->second.values;
  }
}

ag::Checkpoint TrainState::checkpoint() const {
  ag::Checkpoint ckpt = params.snapshot();
  optimizer.save(ckpt);
  ckpt["trainer.iteration"] = {{1, 1}, {static_cast<double>(iteration)}};
  return ckpt;
}

void TrainState::restore(const ag::Checkpoint& ckpt) {
  params.load(ckpt);
  optimizer.load(ckpt, params);
  auto it = ckpt.find("trainer.iteration");
  iteration = it == ckpt.end() ? 0 : static_cast<std::size_t>(it->second.values.at(0));
}

TrainState initial_state(const ModelConfig& model, const TrainerConfig& trainer) {
  return TrainState{create_parameters(model), Adam(trainer.beta1, trainer.beta2, trainer.epsilon), 0};
}

std::vector<double> train(const Dataset& data, const SplitSpec& split, const ModelConfig& model,
                          const TrainerConfig& trainer, TrainState& state, const IterationCallback& on_iteration) {
  trainer.validate();
  model.validate();
  std::vector<double> losses;
  for (std::size_t it = state.iteration; it < trainer.iterations; ++it) {
    const std::uint64_t seed = derive_seed(trainer.episode_seed, {it});
    const Episode ep = sample_episode(data, split, trainer.fold, Side::Train, trainer.episode, seed);
    state.params.zero_grad();
    double loss = 0.0;
    try {
      const EpisodeOutput out = run_episode(ep, state.params, model);
      loss = out.loss.item();
      ag::backward(out.loss);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " [iteration " + std::to_string(it) + ", episode seed " +
                         std::to_string(seed) + "]");
    }
    for (const auto& [name, t] : state.params.entries()) {
      for (double g : t.grad()) {
        if (!std::isfinite(g)) {
          throw NumericError("non-finite gradient for " + name + " [iteration " + std::to_string(it) +
                             ", episode seed " + std::to_string(seed) + "]");
        }
      }
    }
    state.optimizer.step(state.params, trainer.lr_embedder, trainer.lr_rest);
    state.iteration = it + 1;
    losses.push_back(loss);
    if (on_iteration) on_iteration({it, loss, seed, ep.classes}, state);
  }
  return losses;
}

}  // namespace bfg
