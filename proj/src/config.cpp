#include "bfg/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "bfg/errors.hpp"

namespace bfg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& v) {
  T out{};
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError("config key " + key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw ConfigError("config key " + key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key " + key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_unsigned<std::size_t>(key, trim(item)));
  if (out.empty()) throw ConfigError("config key " + key + ": expected a comma-separated list");
  return out;
}

std::string fmt_widths(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

Measure parse_measure(const std::string& key, const std::string& v) {
  if (v == "l2norm") return Measure::L2Norm;
  if (v == "inner_product") return Measure::InnerProduct;
  throw ConfigError("config key " + key + ": expected l2norm or inner_product, got '" + v + "'");
}

std::string fmt_measure(Measure m) { return m == Measure::L2Norm ? "l2norm" : "inner_product"; }

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Entry {
  ConfigKey key;
  Setter set;
  Getter get;
};

template <typename T, typename Member>
Entry uint_entry(std::string name, std::string help, Member member) {
  return {{std::move(name), std::move(help)},
          [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_unsigned<T>(k, v); },
          [member](const RunConfig& c) { return std::to_string(member(c)); }};
}

template <typename Member>
Entry real_entry(std::string name, std::string help, Member member) {
  return {{std::move(name), std::move(help)},
          [member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_real(k, v); },
          [member](const RunConfig& c) { return fmt_real(member(c)); }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    using U64 = std::uint64_t;
    using Size = std::size_t;
    t.push_back(uint_entry<U64>("data.seed", "scene generation and block sampling seed",
                                [](auto& c) -> auto& { return c.data.seed; }));
    t.push_back(uint_entry<Size>("data.scenes", "number of synthetic rooms",
                                 [](auto& c) -> auto& { return c.data.scenes; }));
    t.push_back(real_entry("data.block_size", "block edge length in metres",
                           [](auto& c) -> auto& { return c.data.block_size; }));
    t.push_back(uint_entry<Size>("data.points_per_block", "points sampled per block",
                                 [](auto& c) -> auto& { return c.data.points_per_block; }));
    t.push_back(real_entry("data.room_size", "room edge length in metres",
                           [](auto& c) -> auto& { return c.data.scene.room_size; }));
    t.push_back(uint_entry<Size>("data.points_per_scene", "surface points per room",
                                 [](auto& c) -> auto& { return c.data.scene.points_per_scene; }));
    t.push_back(real_entry("data.clutter_fraction", "fraction of unlabeled clutter points",
                           [](auto& c) -> auto& { return c.data.scene.clutter_fraction; }));
    t.push_back(real_entry("data.deformation", "maximum per-instance taper",
                           [](auto& c) -> auto& { return c.data.scene.deformation; }));
    t.push_back(real_entry("data.color_noise", "per-point color noise sigma",
                           [](auto& c) -> auto& { return c.data.scene.color_noise; }));
    t.push_back(uint_entry<Size>("data.min_points", "points a class needs in a support block",
                                 [](auto& c) -> auto& { return c.trainer.episode.min_points; }));
    t.push_back(uint_entry<Size>("data.query_min_points", "points each episode class needs in the query block",
                                 [](auto& c) -> auto& { return c.trainer.episode.query_min_points; }));
    t.push_back({{"data.dir", "dataset directory written by gen-data"},
                 [](RunConfig& c, const std::string&, const std::string& v) { c.data_dir = v; },
                 [](const RunConfig& c) { return c.data_dir; }});

    t.push_back({{"embedder.input_channels", "3 (xyz) or 6 (xyz + rgb)"},
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.model.embedder.input_channels = static_cast<int>(parse_unsigned<unsigned>(k, v));
                 },
                 [](const RunConfig& c) { return std::to_string(c.model.embedder.input_channels); }});
    t.push_back({{"embedder.edge_widths", "output widths of the edge convolutions"},
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.model.embedder.edge_widths = parse_widths(k, v);
                 },
                 [](const RunConfig& c) { return fmt_widths(c.model.embedder.edge_widths); }});
    t.push_back(uint_entry<Size>("embedder.knn_k", "neighbors per point",
                                 [](auto& c) -> auto& { return c.model.embedder.knn_k; }));
    t.push_back({{"embedder.head_widths", "pointwise head widths; the last is the feature size"},
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.model.embedder.head_widths = parse_widths(k, v);
                 },
                 [](const RunConfig& c) { return fmt_widths(c.model.embedder.head_widths); }});
    t.push_back(uint_entry<U64>("embedder.seed", "weight initialization seed",
                                [](auto& c) -> auto& { return c.model.embedder.seed; }));

    t.push_back({{"bfg.measure1", "point-to-prototype distance: l2norm or inner_product"},
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.model.globalization.measure1 = parse_measure(k, v);
                 },
                 [](const RunConfig& c) { return fmt_measure(c.model.globalization.measure1); }});
    t.push_back({{"bfg.measure2", "prototype-to-point distance: l2norm or inner_product"},
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.model.globalization.measure2 = parse_measure(k, v);
                 },
                 [](const RunConfig& c) { return fmt_measure(c.model.globalization.measure2); }});
    t.push_back(real_entry("bfg.lambda", "feature scale in the l2norm distance",
                           [](auto& c) -> auto& { return c.model.globalization.lambda; }));
    t.push_back(real_entry("bfg.xi", "concentration in the inner-product distance",
                           [](auto& c) -> auto& { return c.model.globalization.xi; }));
    t.push_back({{"bfg.ip_sign", "inner-product sign: aligned or literal"},
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   if (v == "aligned") c.model.globalization.ip_sign = IpSign::Aligned;
                   else if (v == "literal") c.model.globalization.ip_sign = IpSign::Literal;
                   else throw ConfigError("config key " + k + ": expected aligned or literal, got '" + v + "'");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.model.globalization.ip_sign == IpSign::Aligned ? "aligned" : "literal");
                 }});
    t.push_back(real_entry("bfg.max_clamp", "lower bound on the per-point feature maximum",
                           [](auto& c) -> auto& { return c.model.globalization.max_clamp; }));
    t.push_back(uint_entry<Size>("bfg.prototypes", "sparse prototypes per class",
                                 [](auto& c) -> auto& { return c.model.prototypes; }));
    t.push_back({{"bfg.seed_space", "space for farthest point seeds: feature or coordinate"},
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   if (v == "feature") c.model.seed_space = SeedSpace::Feature;
                   else if (v == "coordinate") c.model.seed_space = SeedSpace::Coordinate;
                   else throw ConfigError("config key " + k + ": expected feature or coordinate, got '" + v + "'");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.model.seed_space == SeedSpace::Feature ? "feature" : "coordinate");
                 }});
    t.push_back(real_entry("bfg.temperature", "cosine logit scale",
                           [](auto& c) -> auto& { return c.model.temperature; }));
    t.push_back(uint_entry<U64>("bfg.spa_seed", "assembly weight initialization seed",
                                [](auto& c) -> auto& { return c.model.spa_seed; }));
    t.push_back({{"bfg.variant", "baseline, spgen, spgen+po2prg or full_bfg"},
                 [](RunConfig& c, const std::string&, const std::string& v) { c.model.variant = parse_variant(v); },
                 [](const RunConfig& c) { return to_string(c.model.variant); }});

    t.push_back(uint_entry<Size>("trainer.iterations", "training episodes",
                                 [](auto& c) -> auto& { return c.trainer.iterations; }));
    t.push_back(real_entry("trainer.lr_embedder", "Adam learning rate for the embedder",
                           [](auto& c) -> auto& { return c.trainer.lr_embedder; }));
    t.push_back(real_entry("trainer.lr_rest", "Adam learning rate for all other parameters",
                           [](auto& c) -> auto& { return c.trainer.lr_rest; }));
    t.push_back(real_entry("trainer.beta1", "Adam first moment decay",
                           [](auto& c) -> auto& { return c.trainer.beta1; }));
    t.push_back(real_entry("trainer.beta2", "Adam second moment decay",
                           [](auto& c) -> auto& { return c.trainer.beta2; }));
    t.push_back(real_entry("trainer.epsilon", "Adam denominator offset",
                           [](auto& c) -> auto& { return c.trainer.epsilon; }));
    t.push_back(uint_entry<Size>("trainer.way", "foreground classes per episode",
                                 [](auto& c) -> auto& { return c.trainer.episode.way; }));
    t.push_back(uint_entry<Size>("trainer.shot", "support blocks per class",
                                 [](auto& c) -> auto& { return c.trainer.episode.shot; }));
    t.push_back(uint_entry<U64>("trainer.episode_seed", "seed of the training episode stream",
                                [](auto& c) -> auto& { return c.trainer.episode_seed; }));
    t.push_back(real_entry("trainer.jitter", "Gaussian jitter sigma for training augmentation",
                           [](auto& c) -> auto& { return c.trainer.episode.jitter_sigma; }));
    t.push_back({{"trainer.rotate", "random z rotation for training augmentation"},
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.trainer.episode.rotate = parse_bool(k, v);
                 },
                 [](const RunConfig& c) { return std::string(c.trainer.episode.rotate ? "true" : "false"); }});
    t.push_back({{"trainer.augment", "apply jitter and rotation to training episodes"},
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.trainer.episode.augment = parse_bool(k, v);
                 },
                 [](const RunConfig& c) { return std::string(c.trainer.episode.augment ? "true" : "false"); }});
    t.push_back(uint_entry<Size>("trainer.checkpoint_every", "iterations between checkpoints",
                                 [](auto& c) -> auto& { return c.trainer.checkpoint_every; }));
    t.push_back({{"trainer.split", "split holding the training classes: s0 or s1"},
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   if (v == "s0") c.trainer.fold = Fold::S0;
                   else if (v == "s1") c.trainer.fold = Fold::S1;
                   else throw ConfigError("config key " + k + ": expected s0 or s1, got '" + v + "'");
                 },
                 [](const RunConfig& c) { return std::string(c.trainer.fold == Fold::S0 ? "s0" : "s1"); }});

    t.push_back(uint_entry<Size>("eval.episodes", "fixed held-out evaluation episodes",
                                 [](auto& c) -> auto& { return c.eval.episodes; }));
    t.push_back(uint_entry<U64>("eval.seed", "seed of the evaluation episodes",
                                [](auto& c) -> auto& { return c.eval.seed; }));
    t.push_back(uint_entry<Size>("eval.threads", "worker threads for ablation and sweep cells",
                                 [](auto& c) -> auto& { return c.eval.threads; }));
    t.push_back({{"output.dir", "directory for checkpoints, CSVs and PLYs"},
                 [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
                 [](const RunConfig& c) { return c.out_dir; }});
    return t;
  }();
  return table;
}

const Entry& find_entry(const std::string& key) {
  for (const auto& e : entries())
    if (e.key.name == key) return e;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) { find_entry(key).set(*this, key, value); }

std::string RunConfig::get(const std::string& key) const { return find_entry(key).get(*this); }

void RunConfig::validate() const {
  data.validate();
  model.validate();
  model.globalization.second().validate();
  trainer.validate();
  if (eval.episodes == 0) throw ConfigError("eval: episodes must be >= 1");
  if (eval.threads == 0) throw ConfigError("eval: threads must be >= 1");
}

std::string RunConfig::snapshot() const {
  std::string out;
  for (const auto& e : entries()) out += e.key.name + " = " + e.get(*this) + "\n";
  return out;
}

ExperimentSetup RunConfig::experiment(const Dataset& d) const {
  ExperimentSetup s;
  s.data = &d;
  s.split = SplitSpec::alphabetical(d.classes);
  s.model = model;
  s.trainer = trainer;
  s.eval_episodes = eval.episodes;
  s.eval_seed = eval.seed;
  s.threads = eval.threads;
  return s;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source) {
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' must look like key=value");
  cfg.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string config_help_table() {
  const RunConfig defaults;
  std::size_t name_w = 0, value_w = 0;
  for (const auto& e : entries()) {
    name_w = std::max(name_w, e.key.name.size());
    value_w = std::max(value_w, e.get(defaults).size());
  }
  std::string out = "Config keys (key = default  description):\n";
  for (const auto& e : entries()) {
    const std::string v = e.get(defaults);
    out += "  " + e.key.name + std::string(name_w - e.key.name.size(), ' ') + " = " + v +
           std::string(value_w - v.size(), ' ') + "  " + e.key.help + "\n";
  }
  return out;
}

}  // namespace bfg
