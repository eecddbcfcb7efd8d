#include "bfg/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <atomic>
#include <future>
#include <thread>

#include "bfg/errors.hpp"
#include "bfg/seed.hpp"

namespace bfg {

IouAccumulator::IouAccumulator(std::size_t n_classes) : tp_(n_classes, 0), fp_(n_classes, 0), fn_(n_classes, 0) {
  if (n_classes == 0) throw ContractError("IouAccumulator: zero classes");
}

void IouAccumulator::add(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ContractError("IouAccumulator: prediction/label length mismatch");
  const auto n = static_cast<int>(tp_.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i], l = labels[i];
    if (p < 0 || p >= n || l < 0 || l >= n) throw ContractError("IouAccumulator: class id out of range");
    if (p == l) {
      ++tp_[static_cast<std::size_t>(p)];
    } else {
      ++fp_[static_cast<std::size_t>(p)];
      ++fn_[static_cast<std::size_t>(l)];
    }
  }
}

void IouAccumulator::add_counts(std::size_t cls, std::size_t tp, std::size_t fp, std::size_t fn) {
  tp_.at(cls) += tp;
  fp_.at(cls) += fp;
  fn_.at(cls) += fn;
}

std::optional<double> IouAccumulator::iou(std::size_t cls) const {
  const std::size_t uni = tp_.at(cls) + fp_.at(cls) + fn_.at(cls);
  if (uni == 0) return std::nullopt;
  return static_cast<double>(tp_[cls]) / static_cast<double>(uni);
}

double IouAccumulator::miou() const {
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 1; c < tp_.size(); ++c) {
    if (auto v = iou(c)) {
      total += *v;
      ++counted;
    }
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

namespace {

EvalReport report_from(const IouAccumulator& acc) {
  EvalReport r;
  for (std::size_t c = 0; c < acc.n_classes(); ++c) r.class_iou.push_back(acc.iou(c));
  r.miou = acc.miou();
  return r;
}

int max_label(const Dataset& data) {
  int m = 0;
  for (const auto& c : data.classes) m = std::max(m, c.label);
  return m;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

double tail_mean(const std::vector<double>& losses) {
  if (losses.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(50, losses.size());
  double s = 0.0;
  for (std::size_t i = losses.size() - n; i < losses.size(); ++i) s += losses[i];
  return s / static_cast<double>(n);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; results keep index order.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, std::size_t threads, Fn fn) {
  std::vector<T> out(n);
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::future<void>> workers;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) {
    workers.push_back(std::async(std::launch::async, [&] {
      for (std::size_t i = next++; i < n; i = next++) out[i] = fn(i);
    }));
  }
  for (auto& w : workers) w.get();
  return out;
}

}  // namespace

EvalReport miou(std::span<const int> predictions, std::span<const int> labels, std::size_t n_classes) {
  IouAccumulator acc(n_classes);
  acc.add(predictions, labels);
  EvalReport r = report_from(acc);
  r.episodes = 1;
  return r;
}

std::vector<Episode> make_eval_episodes(const Dataset& data, const SplitSpec& split, Fold fold, const EpisodeConfig& cfg,
                                        std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("evaluation needs at least one episode");
  EpisodeConfig plain = cfg;
  plain.augment = false;
  std::vector<Episode> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(sample_episode(data, split, fold, Side::Test, plain, derive_seed(seed, {i})));
  }
  return out;
}

PredictionPair predict_episode(const Episode& ep, const ag::ParameterSet& params, const ModelConfig& cfg) {
  const auto protos = support_prototypes(ep, params, cfg, cfg.variant);
  const auto query = classify_query(embed(ep.query, cfg.embedder, params), protos, cfg.temperature);
  PredictionPair pair;
  pair.cloud = ep.query;
  for (int& l : pair.cloud.labels) l = ep.dataset_label(l);
  pair.predicted.reserve(query.predictions.size());
  for (int p : query.predictions) pair.predicted.push_back(ep.dataset_label(p));
  return pair;
}

EvalReport evaluate(const Dataset& data, std::span<const Episode> episodes, const ag::ParameterSet& params,
                    const ModelConfig& cfg) {
  if (episodes.empty()) throw ConfigError("evaluation needs at least one episode");
  const auto start = std::chrono::steady_clock::now();
  IouAccumulator acc(static_cast<std::size_t>(max_label(data)) + 1);
  for (const auto& ep : episodes) {
    const PredictionPair p = predict_episode(ep, params, cfg);
    acc.add(p.predicted, p.cloud.labels);
  }
  EvalReport r = report_from(acc);
  r.episodes = episodes.size();
  r.variant = to_string(cfg.variant);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

namespace {

struct CellResult {
  EvalReport report;
  double final_loss = 0.0;
};

CellResult train_and_evaluate(const ExperimentSetup& setup, const ModelConfig& model,
                              const std::vector<Episode>& episodes) {
  TrainState state = initial_state(model, setup.trainer);
  const auto losses = train(*setup.data, setup.split, model, setup.trainer, state);
  return CellResult{evaluate(*setup.data, episodes, state.params, model), tail_mean(losses)};
}

}  // namespace

std::vector<LadderRow> run_ablation(const ExperimentSetup& setup, std::span<const Variant> variants) {
  if (!setup.data) throw ContractError("run_ablation: no dataset");
  if (variants.empty()) throw ConfigError("ablation: no variants");
  const auto episodes = make_eval_episodes(*setup.data, setup.split, setup.trainer.fold, setup.trainer.episode,
                                           setup.eval_episodes, setup.eval_seed);
  const auto cells = parallel_map<CellResult>(variants.size(), setup.threads, [&](std::size_t i) {
    ModelConfig model = setup.model;
    model.variant = variants[i];
    return train_and_evaluate(setup, model, episodes);
  });
  std::vector<LadderRow> rows;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    LadderRow row{variants[i], cells[i].report, 0.0, 0.0, cells[i].final_loss};
    if (i > 0) {
      row.delta = row.report.miou - rows.back().report.miou;
      row.cumulative = row.report.miou - rows.front().report.miou;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

void write_iou_header(std::ostream& out, const Dataset& data, std::size_t n) {
  for (std::size_t c = 1; c < n; ++c) out << ",iou_" << data.class_name(static_cast<int>(c));
}

void write_iou_values(std::ostream& out, const EvalReport& r) {
  for (std::size_t c = 1; c < r.class_iou.size(); ++c) out << ',' << (r.class_iou[c] ? fmt(*r.class_iou[c]) : "");
}

}  // namespace

void write_ladder_csv(std::ostream& out, const std::vector<LadderRow>& rows, const Dataset& data) {
  const std::size_t n = rows.empty() ? 0 : rows.front().report.class_iou.size();
  out << "variant,miou,delta,cumulative_delta,episodes,final_loss";
  write_iou_header(out, data, n);
  out << '\n';
  for (const auto& r : rows) {
    out << to_string(r.variant) << ',' << fmt(r.report.miou) << ',' << fmt(r.delta) << ',' << fmt(r.cumulative) << ','
        << r.report.episodes << ',' << fmt(r.final_loss);
    write_iou_values(out, r.report);
    out << '\n';
  }
}

SweepParameter parse_sweep_parameter(const std::string& s) {
  if (s == "K" || s == "k") return SweepParameter::K;
  if (s == "lambda") return SweepParameter::Lambda;
  if (s == "xi") return SweepParameter::Xi;
  if (s == "measure_combo") return SweepParameter::MeasureCombo;
  throw ConfigError("unknown sweep parameter '" + s + "' (expected K, lambda, xi, measure_combo)");
}

std::string to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::K: return "K";
    case SweepParameter::Lambda: return "lambda";
    case SweepParameter::Xi: return "xi";
    case SweepParameter::MeasureCombo: return "measure_combo";
  }
  return "unknown";
}

std::vector<std::string> all_measure_combos() { return {"N:N", "N:IP", "IP:N", "IP:IP"}; }

namespace {

Measure parse_measure_token(const std::string& s) {
  if (s == "N" || s == "l2norm") return Measure::L2Norm;
  if (s == "IP" || s == "inner_product") return Measure::InnerProduct;
  throw ConfigError("unknown measure '" + s + "' (expected N or IP)");
}

double parse_real(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("sweep: invalid " + what + " value '" + s + "'");
  }
}

ModelConfig apply_sweep_value(ModelConfig model, SweepParameter param, const std::string& value) {
  switch (param) {
    case SweepParameter::K: {
      const double k = parse_real(value, "K");
      if (k < 1 || k != static_cast<double>(static_cast<std::size_t>(k))) {
        throw ConfigError("sweep: K must be a positive integer, got '" + value + "'");
      }
      model.prototypes = static_cast<std::size_t>(k);
      break;
    }
    case SweepParameter::Lambda: model.globalization.lambda = parse_real(value, "lambda"); break;
    case SweepParameter::Xi: model.globalization.xi = parse_real(value, "xi"); break;
    case SweepParameter::MeasureCombo: {
      const auto colon = value.find(':');
      if (colon == std::string::npos) throw ConfigError("sweep: measure combo '" + value + "' must look like N:IP");
      model.globalization.measure1 = parse_measure_token(value.substr(0, colon));
      model.globalization.measure2 = parse_measure_token(value.substr(colon + 1));
      break;
    }
  }
  model.validate();
  model.globalization.second().validate();
  return model;
}

}  // namespace

std::vector<SweepRow> sweep(const ExperimentSetup& setup, SweepParameter param, const std::vector<std::string>& values) {
  if (!setup.data) throw ContractError("sweep: no dataset");
  if (values.empty()) throw ConfigError("sweep: no values");
  std::vector<ModelConfig> models;
  for (const auto& v : values) models.push_back(apply_sweep_value(setup.model, param, v));
  const auto episodes = make_eval_episodes(*setup.data, setup.split, setup.trainer.fold, setup.trainer.episode,
                                           setup.eval_episodes, setup.eval_seed);
  const auto cells = parallel_map<CellResult>(values.size(), setup.threads,
                                              [&](std::size_t i) { return train_and_evaluate(setup, models[i], episodes); });
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) rows.push_back({values[i], cells[i].report, cells[i].final_loss});
  return rows;
}

void write_sweep_csv(std::ostream& out, SweepParameter param, const std::vector<SweepRow>& rows) {
  out << "parameter,value,miou,episodes,final_loss\n";
  for (const auto& r : rows) {
    out << to_string(param) << ',' << r.value << ',' << fmt(r.report.miou) << ',' << r.report.episodes << ','
        << fmt(r.final_loss) << '\n';
  }
}

}  // namespace bfg
