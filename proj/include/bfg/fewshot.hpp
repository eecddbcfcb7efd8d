#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bfg/autograd.hpp"
#include "bfg/dataset.hpp"
#include "bfg/embedder.hpp"
#include "bfg/globalization.hpp"
#include "bfg/prototype.hpp"

namespace bfg {

// Which split provides the training classes; the other split is held out.
enum class Fold { S0, S1 };
enum class Side { Train, Test };

std::vector<int> episode_class_pool(const SplitSpec& split, Fold fold, Side side);

struct EpisodeConfig {
  std::size_t way = 2;
  std::size_t shot = 1;
  std::size_t min_points = 100;       // support presence threshold per shot
  std::size_t query_min_points = 20;  // query presence threshold per episode class
  bool augment = false;
  double jitter_sigma = 0.01;
  bool rotate = true;

  void validate() const;
};

// All clouds carry episode labels: 0 background, w + 1 for way w.
struct SupportShot {
  std::size_t way = 0;
  std::size_t block = 0;
  LabeledCloud cloud;
};

struct Episode {
  std::size_t way = 0;
  std::size_t shot = 0;
  std::vector<int> classes;          // dataset label of each way
  std::vector<SupportShot> support;  // way-major, `shot` entries per way
  LabeledCloud query;
  std::size_t query_block = 0;
  std::uint64_t seed = 0;

  std::size_t n_classes() const { return way + 1; }
  // Dataset label for an episode label (0 stays background).
  int dataset_label(int episode_label) const;
};

Episode sample_episode(const Dataset& data, const SplitSpec& split, Fold fold, Side side, const EpisodeConfig& cfg,
                       std::uint64_t seed);

enum class Variant { Baseline, SpGen, SpGenPo2PrG, FullBfg };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
  EmbedderConfig embedder;
  GlobalizationConfig globalization;
  std::size_t prototypes = 5;
  SeedSpace seed_space = SeedSpace::Feature;
  double temperature = 10.0;
  std::uint64_t spa_seed = 2;
  Variant variant = Variant::FullBfg;

  void validate() const;
};

// Embedder and assembly parameters, initialized from the configured seeds.
ag::ParameterSet create_parameters(const ModelConfig& cfg);

// One prototype per episode class (background first), in episode label order.
std::vector<ClassPrototype> support_prototypes(const Episode& ep, const ag::ParameterSet& params, const ModelConfig& cfg,
                                               Variant variant);
std::vector<ClassPrototype> support_prototypes_from_features(const Episode& ep,
                                                             std::span<const ag::Tensor> support_features,
                                                             const ag::ParameterSet& params, const ModelConfig& cfg,
                                                             Variant variant);

struct QueryResult {
  ag::Tensor logits;  // N x C, temperature * cosine
  std::vector<int> predictions;
  std::size_t clamped_norms = 0;  // rows or prototypes with norm below 1e-12
};

// Ties in the argmax go to the lowest class index.
QueryResult classify_query(const ag::Tensor& query_features, std::span<const ClassPrototype> prototypes,
                           double temperature);

// Mean cross-entropy of the logits against episode labels.
ag::Tensor episode_loss(const ag::Tensor& logits, std::span<const int> labels);

struct EpisodeOutput {
  std::vector<ClassPrototype> prototypes;
  QueryResult query;
  ag::Tensor loss;
};

EpisodeOutput run_episode(const Episode& ep, const ag::ParameterSet& params, const ModelConfig& cfg);

struct TrainerConfig {
  std::size_t iterations = 500;
  double lr_embedder = 1e-4;
  double lr_rest = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t episode_seed = 11;
  std::size_t checkpoint_every = 100;
  Fold fold = Fold::S0;
  EpisodeConfig episode;

  TrainerConfig();
  void validate() const;
};

// Adaptive moment estimation with one learning rate for "embedder.*" and
// another for everything else.
class Adam {
 public:
  Adam() = default;
  Adam(double beta1, double beta2, double epsilon) : beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(const ag::ParameterSet& params, double lr_embedder, double lr_rest);
  std::size_t steps() const { return steps_; }

  void save(ag::Checkpoint& ckpt) const;
  void load(const ag::Checkpoint& ckpt, const ag::ParameterSet& params);

 private:
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  std::size_t steps_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

struct TrainState {
  ag::ParameterSet params;
  Adam optimizer;
  std::size_t iteration = 0;  // completed iterations

  ag::Checkpoint checkpoint() const;
  void restore(const ag::Checkpoint& ckpt);
};

TrainState initial_state(const ModelConfig& model, const TrainerConfig& trainer);

struct IterationRecord {
  std::size_t iteration = 0;
  double loss = 0.0;
  std::uint64_t episode_seed = 0;
  std::vector<int> foreground_classes;
};

using IterationCallback = std::function<void(const IterationRecord&, const TrainState&)>;

// Runs iterations state.iteration .. trainer.iterations - 1. Each iteration
// samples a fresh training episode from a seed derived from (episode_seed,
// iteration), so a restored state continues the exact same sequence.
std::vector<double> train(const Dataset& data, const SplitSpec& split, const ModelConfig& model,
                          const TrainerConfig& trainer, TrainState& state, const IterationCallback& on_iteration = {});

}  // namespace bfg
