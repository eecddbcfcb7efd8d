#include <algorithm>
#include <random>
#include <set>

#include "bfg/errors.hpp"
#include "bfg/fewshot.hpp"
#include "bfg/seed.hpp"

namespace bfg {

std::vector<int> episode_class_pool(const SplitSpec& split, Fold fold, Side side) {
  const bool s0 = (fold == Fold::S0) == (side == Side::Train);
  return s0 ? split.s0 : split.s1;
}

void EpisodeConfig::validate() const {
  if (way == 0) throw ConfigError("episode: way must be >= 1");
  if (shot == 0) throw ConfigError("episode: shot must be >= 1");
  if (min_points == 0) throw ConfigError("episode: min_points must be >= 1");
  if (query_min_points == 0) throw ConfigError("episode: query_min_points must be >= 1");
  if (jitter_sigma < 0.0) throw ConfigError("episode: jitter_sigma must be >= 0");
}

int Episode::dataset_label(int episode_label) const {
  if (episode_label <= 0) return 0;
  return classes.at(static_cast<std::size_t>(episode_label - 1));
}

namespace {

LabeledCloud relabel(const LabeledCloud& cloud, const std::vector<int>& classes) {
  LabeledCloud out = cloud;
  for (int& l : out.labels) {
    auto it = std::find(classes.begin(), classes.end(), l);
    l = it == classes.end() ? 0 : static_cast<int>(it - classes.begin()) + 1;
  }
  return out;
}

constexpr int kMaxAttempts = 64;

}  // namespace

Episode sample_episode(const Dataset& data, const SplitSpec& split, Fold fold, Side side, const EpisodeConfig& cfg,
                       std::uint64_t seed) {
  cfg.validate();
  split.validate();
  const std::vector<int> pool = episode_class_pool(split, fold, side);
  if (pool.size() < cfg.way) {
    throw SamplingError("cannot draw " + std::to_string(cfg.way) + "-way episodes from a split of " +
                        std::to_string(pool.size()) + " classes");
  }
  for (int c : pool) {
    std::size_t eligible = 0;
    for (std::size_t b = 0; b < data.blocks.size(); ++b) eligible += data.count(b, c) >= cfg.min_points;
    if (eligible < cfg.shot) {
      throw SamplingError("class '" + data.class_name(c) + "' has " + std::to_string(eligible) +
                          " eligible support blocks, " + std::to_string(cfg.shot) + " needed");
    }
  }

  std::mt19937_64 rng(seed);
  std::string last_failure;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<int> shuffled = pool;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    Episode ep;
    ep.way = cfg.way;
    ep.shot = cfg.shot;
    ep.seed = seed;
    ep.classes.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(cfg.way));

    std::set<std::size_t> used;
    bool ok = true;
    for (std::size_t w = 0; w < cfg.way && ok; ++w) {
      std::vector<std::size_t> candidates;
      for (std::size_t b = 0; b < data.blocks.size(); ++b) {
        if (!used.count(b) && data.count(b, ep.classes[w]) >= cfg.min_points) candidates.push_back(b);
      }
      if (candidates.size() < cfg.shot) {
        last_failure = "not enough distinct support blocks for class '" + data.class_name(ep.classes[w]) + "'";
        ok = false;
        break;
      }
      std::shuffle(candidates.begin(), candidates.end(), rng);
      for (std::size_t s = 0; s < cfg.shot; ++s) {
        used.insert(candidates[s]);
        ep.support.push_back({w, candidates[s], relabel(data.blocks[candidates[s]], ep.classes)});
      }
    }
    if (!ok) continue;

    std::size_t background = 0;
    for (const auto& s : ep.support) background += s.cloud.count_label(0);
    if (background == 0) {
      last_failure = "support shots contain no background points";
      continue;
    }

    std::vector<std::size_t> query_candidates;
    for (std::size_t b = 0; b < data.blocks.size(); ++b) {
      if (used.count(b)) continue;
      const bool all = std::all_of(ep.classes.begin(), ep.classes.end(),
                                   [&](int c) { return data.count(b, c) >= cfg.query_min_points; });
      if (all) query_candidates.push_back(b);
    }
    if (query_candidates.empty()) {
      last_failure = "no query block contains all of the classes";
      for (int c : ep.classes) last_failure += " '" + data.class_name(c) + "'";
      continue;
    }
    ep.query_block = query_candidates[std::uniform_int_distribution<std::size_t>(0, query_candidates.size() - 1)(rng)];
    ep.query = relabel(data.blocks[ep.query_block], ep.classes);

    if (cfg.augment) {
      for (std::size_t i = 0; i < ep.support.size(); ++i) {
        ep.support[i].cloud = augment(ep.support[i].cloud, cfg.jitter_sigma, cfg.rotate, derive_seed(seed, {3, i}));
      }
      ep.query = augment(ep.query, cfg.jitter_sigma, cfg.rotate, derive_seed(seed, {4}));
    }
    return ep;
  }
  throw SamplingError("episode sampling failed after " + std::to_string(kMaxAttempts) + " attempts: " + last_failure);
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::SpGen: return "spgen";
    case Variant::SpGenPo2PrG: return "spgen+po2prg";
    case Variant::FullBfg: return "full_bfg";
  }
  return "unknown";
}

Variant parse_variant(const std::string& s) {
  if (s == "baseline") return Variant::Baseline;
  if (s == "spgen") return Variant::SpGen;
  if (s == "spgen+po2prg" || s == "po2prg") return Variant::SpGenPo2PrG;
  if (s == "full_bfg" || s == "full") return Variant::FullBfg;
  throw ConfigError("unknown variant '" + s + "' (expected baseline, spgen, spgen+po2prg, full_bfg)");
}

}  // namespace bfg
