#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bfg/fewshot.hpp"

namespace bfg {

// Confusion counts per class, accumulated over any number of predictions.
class IouAccumulator {
 public:
  explicit IouAccumulator(std::size_t n_classes);

  void add(std::span<const int> predictions, std::span<const int> labels);
  void add_counts(std::size_t cls, std::size_t tp, std::size_t fp, std::size_t fn);

  std::size_t n_classes() const { return tp_.size(); }
  // Empty when the class never occurs in either predictions or labels.
  std::optional<double> iou(std::size_t cls) const;
  // Mean over foreground classes (1..n-1) with a nonzero union.
  double miou() const;

 private:
  std::vector<std::size_t> tp_, fp_, fn_;
};

struct EvalReport {
  std::vector<std::optional<double>> class_iou;  // indexed by dataset label
  double miou = 0.0;
  std::size_t episodes = 0;
  std::string variant;
  std::string config;
  double wall_seconds = 0.0;
};

EvalReport miou(std::span<const int> predictions, std::span<const int> labels, std::size_t n_classes);

// Fixed held-out episodes drawn from the test side of the fold.
std::vector<Episode> make_eval_episodes(const Dataset& data, const SplitSpec& split, Fold fold, const EpisodeConfig& cfg,
                                        std::size_t count, std::uint64_t seed);

// IoU is accumulated on dataset labels so classes aggregate across episodes.
EvalReport evaluate(const Dataset& data, std::span<const Episode> episodes, const ag::ParameterSet& params,
                    const ModelConfig& cfg);

struct PredictionPair {
  LabeledCloud cloud;  // query cloud with dataset labels
  std::vector<int> predicted;  // dataset labels
};
PredictionPair predict_episode(const Episode& ep, const ag::ParameterSet& params, const ModelConfig& cfg);

struct ExperimentSetup {
  const Dataset* data = nullptr;
  SplitSpec split;
  ModelConfig model;
  TrainerConfig trainer;
  std::size_t eval_episodes = 100;
  std::uint64_t eval_seed = 23;
  std::size_t threads = 1;
};

struct LadderRow {
  Variant variant = Variant::Baseline;
  EvalReport report;
  double delta = 0.0;       // versus the previous row
  double cumulative = 0.0;  // versus the first row
  double final_loss = 0.0;  // mean over the last min(50, n) iterations
};

// Trains every variant from identical seeds and scores all of them on the
// same held-out episodes.
std::vector<LadderRow> run_ablation(const ExperimentSetup& setup, std::span<const Variant> variants);
void write_ladder_csv(std::ostream& out, const std::vector<LadderRow>& rows, const Dataset& data);

enum class SweepParameter { K, Lambda, Xi, MeasureCombo };
SweepParameter parse_sweep_parameter(const std::string& s);
std::string to_string(SweepParameter p);

struct SweepRow {
  std::string value;
  EvalReport report;
  double final_loss = 0.0;
};

// Values are strings: integers for K, reals for lambda/xi, and "N:IP"-style
// pairs (first/second measure) for measure_combo.
std::vector<SweepRow> sweep(const ExperimentSetup& setup, SweepParameter param, const std::vector<std::string>& values);
void write_sweep_csv(std::ostream& out, SweepParameter param, const std::vector<SweepRow>& rows);

// All four pairs of {N, IP} for the two globalization passes.
std::vector<std::string> all_measure_combos();

}  // namespace bfg
