// bfg: command-line front end for data generation, training, evaluation,
// ablation, sweeps and visualization export.

#include <CLI11.hpp>

#include <malloc.h>

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "bfg/config.hpp"
#include "bfg/errors.hpp"
#include "bfg/eval.hpp"

namespace fs = std::filesystem;
using namespace bfg;

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key = value config file");
  cmd->add_option("--set", opts.overrides, "override one config key, key=value (repeatable)");
  cmd->footer(config_help_table());
}

RunConfig resolve_config(const CommonOptions& opts, const std::string& fallback_path = {}) {
  RunConfig cfg;
  if (!opts.config_path.empty()) {
    apply_config_file(cfg, opts.config_path);
  } else if (!fallback_path.empty() && fs::exists(fallback_path)) {
    apply_config_file(cfg, fallback_path);
  }
  for (const auto& o : opts.overrides) apply_override(cfg, o);
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, std::ios::out | mode);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::string seed_line(const RunConfig& cfg) {
  std::ostringstream s;
  s << "# seeds data=" << cfg.data.seed << " embedder=" << cfg.model.embedder.seed << " spa=" << cfg.model.spa_seed
    << " episode=" << cfg.trainer.episode_seed << " eval=" << cfg.eval.seed;
  return s.str();
}

void write_snapshot(const RunConfig& cfg, const fs::path& dir) {
  auto out = open_out(dir / "config.txt");
  out << cfg.snapshot();
}

void save_checkpoint(const TrainState& state, const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  ag::write_checkpoint(tmp.string(), state.checkpoint());
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

// Keeps data rows whose leading integer is below `limit`; comment and header
// lines are dropped (the caller rewrites them).
std::vector<std::string> rows_before(const fs::path& path, std::size_t limit) {
  std::vector<std::string> keep;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || !std::isdigit(static_cast<unsigned char>(line[0]))) continue;
    if (std::stoull(line.substr(0, line.find(','))) < limit) keep.push_back(line);
  }
  return keep;
}

ag::ParameterSet load_parameters(const RunConfig& cfg, const std::string& checkpoint) {
  ag::ParameterSet params = create_parameters(cfg.model);
  params.load(ag::read_checkpoint(checkpoint));
  return params;
}

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> default_sweep_values(SweepParameter p) {
  switch (p) {
    case SweepParameter::K: return {"1", "3", "5", "10"};
    case SweepParameter::Lambda: return {"0.25", "0.5", "0.85", "1.5"};
    case SweepParameter::Xi: return {"0.1", "0.25", "0.5", "1"};
    case SweepParameter::MeasureCombo: return all_measure_combos();
  }
  return {};
}

int cmd_gen_data(const CommonOptions& common, const std::string& out, std::optional<std::uint64_t> seed) {
  RunConfig cfg = resolve_config(common);
  if (!out.empty()) cfg.data_dir = out;
  if (seed) cfg.data.seed = *seed;
  cfg.validate();
  std::vector<LabeledCloud> scenes;
  const Dataset data = build_dataset(cfg.data, &scenes);
  write_dataset(data, scenes, cfg.data_dir, seed_line(cfg).substr(2));
  write_snapshot(cfg, cfg.data_dir);
  const SplitSpec split = SplitSpec::alphabetical(data.classes);
  std::cout << "wrote " << data.blocks.size() << " blocks from " << scenes.size() << " scenes to " << cfg.data_dir
            << " (s0: " << split.s0.size() << " classes, s1: " << split.s1.size() << " classes)\n";
  return 0;
}

struct TrainOptions {
  std::string split, variant, out;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  std::size_t stop_after = 0;
};

int cmd_train(const CommonOptions& common, const TrainOptions& opt) {
  RunConfig cfg = resolve_config(common);
  if (!opt.split.empty()) cfg.set("trainer.split", opt.split);
  if (!opt.variant.empty()) cfg.set("bfg.variant", opt.variant);
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  if (opt.seed) cfg.trainer.episode_seed = *opt.seed;
  cfg.validate();

  const Dataset data = load_dataset(cfg.data_dir);
  const SplitSpec split = SplitSpec::alphabetical(data.classes);
  const fs::path dir = cfg.out_dir;
  ensure_dir(dir.string());
  const fs::path ckpt_path = dir / "checkpoint.bin";

  TrainState state = initial_state(cfg.model, cfg.trainer);
  if (opt.resume && fs::exists(ckpt_path)) {
    state.restore(ag::read_checkpoint(ckpt_path.string()));
    std::cout << "resuming at iteration " << state.iteration << "\n";
  }
  const auto kept_loss = rows_before(dir / "loss.csv", state.iteration);
  const auto kept_log = rows_before(dir / "episodes.csv", state.iteration);
  write_snapshot(cfg, dir);

  auto loss_csv = open_out(dir / "loss.csv");
  loss_csv << seed_line(cfg) << "\niteration,loss\n";
  for (const auto& r : kept_loss) loss_csv << r << '\n';
  auto log_csv = open_out(dir / "episodes.csv");
  log_csv << seed_line(cfg) << "\niteration,episode_seed,foreground_classes\n";
  for (const auto& r : kept_log) log_csv << r << '\n';

  TrainerConfig trainer = cfg.trainer;
  if (opt.stop_after > 0) trainer.iterations = std::min(trainer.iterations, state.iteration + opt.stop_after);
  char buf[64];
  train(data, split, cfg.model, trainer, state, [&](const IterationRecord& rec, const TrainState& st) {
    std::snprintf(buf, sizeof(buf), "%.17g", rec.loss);
    loss_csv << rec.iteration << ',' << buf << '\n';
    log_csv << rec.iteration << ',' << rec.episode_seed << ',';
    for (std::size_t i = 0; i < rec.foreground_classes.size(); ++i) log_csv << (i ? ";" : "") << rec.foreground_classes[i];
    log_csv << '\n';
    loss_csv.flush();
    log_csv.flush();
    if (cfg.trainer.checkpoint_every > 0 && st.iteration % cfg.trainer.checkpoint_every == 0) {
      save_checkpoint(st, ckpt_path);
    }
  });
  save_checkpoint(state, ckpt_path);
  std::cout << "trained " << to_string(cfg.model.variant) << " to iteration " << state.iteration << "; checkpoint "
            << ckpt_path.string() << "\n";
  return 0;
}

struct EvalOptions {
  std::string checkpoint, out, variant;
  std::optional<std::size_t> episodes;
  std::optional<std::uint64_t> seed;
};

int cmd_eval(const CommonOptions& common, const EvalOptions& opt) {
  RunConfig cfg = resolve_config(common, (fs::path(opt.checkpoint).parent_path() / "config.txt").string());
  if (opt.episodes) {
    if (*opt.episodes == 0) throw ConfigError("eval needs at least one episode");
    cfg.eval.episodes = *opt.episodes;
  }
  if (opt.seed) cfg.eval.seed = *opt.seed;
  if (!opt.variant.empty()) cfg.set("bfg.variant", opt.variant);
  if (!opt.out.empty()) cfg.out_dir = opt.out;
  cfg.validate();

  const Dataset data = load_dataset(cfg.data_dir);
  const ExperimentSetup setup = cfg.experiment(data);
  const ag::ParameterSet params = load_parameters(cfg, opt.checkpoint);
  const auto episodes = make_eval_episodes(data, setup.split, cfg.trainer.fold, cfg.trainer.episode, cfg.eval.episodes,
                                           cfg.eval.seed);
  const EvalReport report = evaluate(data, episodes, params, cfg.model);

  const fs::path dir = cfg.out_dir;
  ensure_dir(dir.string());
  auto csv = open_out(dir / "eval.csv");
  csv << seed_line(cfg) << "\nvariant,episodes,miou";
  for (std::size_t c = 1; c < report.class_iou.size(); ++c) csv << ",iou_" << data.class_name(static_cast<int>(c));
  csv << '\n' << report.variant << ',' << report.episodes << ',' << fmt6(report.miou);
  for (std::size_t c = 1; c < report.class_iou.size(); ++c) {
    csv << ',' << (report.class_iou[c] ? fmt6(*report.class_iou[c]) : "");
  }
  csv << '\n';
  std::ostringstream summary;
  summary << "mIoU " << fmt6(report.miou) << " over " << report.episodes << " episodes (" << report.variant << ")\n";
  for (std::size_t c = 1; c < report.class_iou.size(); ++c) {
    if (report.class_iou[c]) summary << "  " << data.class_name(static_cast<int>(c)) << " " << fmt6(*report.class_iou[c]) << "\n";
  }
  auto txt = open_out(dir / "eval_report.txt");
  txt << summary.str() << "checkpoint = " << opt.checkpoint << "\nwall_seconds = " << report.wall_seconds << "\n"
      << cfg.snapshot();
  std::cout << summary.str();
  return 0;
}

int cmd_ablate(const CommonOptions& common, const std::string& out, const std::string& variants_arg) {
  RunConfig cfg = resolve_config(common);
  if (!out.empty()) cfg.out_dir = out;
  cfg.validate();
  std::vector<Variant> variants;
  for (const auto& v : split_list(variants_arg)) variants.push_back(parse_variant(v));

  const Dataset data = load_dataset(cfg.data_dir);
  const auto rows = run_ablation(cfg.experiment(data), variants);
  const fs::path dir = cfg.out_dir;
  ensure_dir(dir.string());
  write_snapshot(cfg, dir);
  auto csv = open_out(dir / "ablation.csv");
  csv << seed_line(cfg) << '\n';
  write_ladder_csv(csv, rows, data);
  for (const auto& r : rows) {
    std::cout << to_string(r.variant) << " mIoU " << fmt6(r.report.miou) << " delta " << fmt6(r.delta) << "\n";
  }
  return 0;
}

int cmd_sweep(const CommonOptions& common, const std::string& out, const std::string& param_arg,
              const std::string& values_arg) {
  RunConfig cfg = resolve_config(common);
  if (!out.empty()) cfg.out_dir = out;
  cfg.validate();
  const SweepParameter param = parse_sweep_parameter(param_arg);
  std::vector<std::string> values = split_list(values_arg);
  if (values_arg.empty()) values = default_sweep_values(param);
  if (values.empty()) throw ConfigError("sweep: no values");

  const Dataset data = load_dataset(cfg.data_dir);
  const auto rows = sweep(cfg.experiment(data), param, values);
  const fs::path dir = cfg.out_dir;
  ensure_dir(dir.string());
  write_snapshot(cfg, dir);
  auto csv = open_out(dir / ("sweep_" + to_string(param) + ".csv"));
  csv << seed_line(cfg) << '\n';
  write_sweep_csv(csv, param, rows);
  for (const auto& r : rows) std::cout << to_string(param) << "=" << r.value << " mIoU " << fmt6(r.report.miou) << "\n";
  return 0;
}

int cmd_export_viz(const CommonOptions& common, const std::string& checkpoint, std::uint64_t episode_seed,
                   const std::string& out) {
  RunConfig cfg = resolve_config(common, (fs::path(checkpoint).parent_path() / "config.txt").string());
  if (!out.empty()) cfg.out_dir = out;
  cfg.validate();
  const Dataset data = load_dataset(cfg.data_dir);
  const SplitSpec split = SplitSpec::alphabetical(data.classes);
  const ag::ParameterSet params = load_parameters(cfg, checkpoint);
  EpisodeConfig ep_cfg = cfg.trainer.episode;
  ep_cfg.augment = false;
  const Episode ep = sample_episode(data, split, cfg.trainer.fold, Side::Test, ep_cfg, episode_seed);
  const PredictionPair pair = predict_episode(ep, params, cfg.model);

  const fs::path dir = cfg.out_dir;
  ensure_dir(dir.string());
  write_ply(pair.cloud, pair.cloud.labels, (dir / "gt.ply").string());
  write_ply(pair.cloud, pair.predicted, (dir / "pred.ply").string());
  std::cout << "episode seed " << episode_seed << ": query block " << ep.query_block << ", " << pair.cloud.size()
            << " points written to gt.ply and pred.ply in " << dir.string() << "\n";
  return 0;
}

void report_error(const std::string& kind, int code, std::string message) {
  for (char& ch : message)
    if (ch == '\n' || ch == '\r') ch = ' ';
  std::cerr << "error kind=" << kind << " exit=" << code << " message=" << message << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  // Every iteration builds and frees a large graph; keep freed memory in the
  // process instead of returning it to the kernel each time.
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  CLI::App app{"Few-shot point cloud segmentation with sparse, globalized prototypes"};
  app.require_subcommand(1);
  app.footer(config_help_table());

  CommonOptions common;

  auto* gen = app.add_subcommand("gen-data", "generate synthetic scenes, blocks and a manifest");
  add_common(gen, common);
  std::string gen_out;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--out", gen_out, "dataset directory (data.dir)");
  gen->add_option("--seed", gen_seed, "scene seed (data.seed)");

  auto* tr = app.add_subcommand("train", "episodic training on the training side of a split");
  add_common(tr, common);
  TrainOptions train_opt;
  tr->add_option("--split", train_opt.split, "split holding the training classes")->check(CLI::IsMember({"s0", "s1"}));
  tr->add_option("--variant", train_opt.variant, "baseline, spgen, spgen+po2prg or full_bfg");
  tr->add_option("--out", train_opt.out, "output directory (output.dir)");
  tr->add_option("--seed", train_opt.seed, "training episode seed (trainer.episode_seed)");
  tr->add_flag("--resume", train_opt.resume, "continue from <out>/checkpoint.bin when present");
  tr->add_option("--stop-after", train_opt.stop_after, "stop after this many iterations in this invocation");

  auto* ev = app.add_subcommand("eval", "score a checkpoint on fixed held-out episodes");
  add_common(ev, common);
  EvalOptions eval_opt;
  ev->add_option("--checkpoint", eval_opt.checkpoint, "checkpoint written by train")->required();
  ev->add_option("--episodes", eval_opt.episodes, "evaluation episodes (eval.episodes)");
  ev->add_option("--seed", eval_opt.seed, "evaluation episode seed (eval.seed)");
  ev->add_option("--variant", eval_opt.variant, "prototype pipeline used at inference");
  ev->add_option("--out", eval_opt.out, "output directory (output.dir)");

  auto* ab = app.add_subcommand("ablate", "train and score each variant on paired episodes");
  add_common(ab, common);
  std::string ab_out, ab_variants = "baseline,spgen,spgen+po2prg,full_bfg";
  ab->add_option("--out", ab_out, "output directory (output.dir)");
  ab->add_option("--variants", ab_variants, "comma-separated variants, in ladder order")->capture_default_str();

  auto* sw = app.add_subcommand("sweep", "train and score one run per hyper-parameter value");
  add_common(sw, common);
  std::string sw_out, sw_param, sw_values;
  sw->add_option("--param", sw_param, "K, lambda, xi or measure_combo")->required();
  sw->add_option("--values", sw_values, "comma-separated values; measure pairs as N:IP");
  sw->add_option("--out", sw_out, "output directory (output.dir)");

  auto* ex = app.add_subcommand("export-viz", "write ground-truth and predicted PLY files for one episode");
  add_common(ex, common);
  std::string ex_ckpt, ex_out;
  std::uint64_t ex_seed = 0;
  ex->add_option("--checkpoint", ex_ckpt, "checkpoint written by train")->required();
  ex->add_option("--episode-seed", ex_seed, "seed of the held-out episode")->required();
  ex->add_option("--out", ex_out, "output directory (output.dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("config_error", 2, e.what());
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(common, gen_out, gen_seed);
    if (*tr) return cmd_train(common, train_opt);
    if (*ev) return cmd_eval(common, eval_opt);
    if (*ab) return cmd_ablate(common, ab_out, ab_variants);
    if (*sw) return cmd_sweep(common, sw_out, sw_param, sw_values);
    if (*ex) return cmd_export_viz(common, ex_ckpt, ex_seed, ex_out);
  } catch (const Error& e) {
    report_error(e.kind(), e.exit_code(), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    report_error("internal_error", 1, e.what());
    return 1;
  }
  return 0;
}
