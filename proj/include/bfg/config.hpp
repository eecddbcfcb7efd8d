#pragma once

#include <string>
#include <vector>

#include "bfg/dataset.hpp"
#include "bfg/eval.hpp"
#include "bfg/fewshot.hpp"

namespace bfg {

struct EvalSettings {
  std::size_t episodes = 100;
  std::uint64_t seed = 23;
  std::size_t threads = 1;
};

// Everything a command needs. Text form is one "key = value" per line;
// blank lines and lines starting with '#' are ignored.
struct RunConfig {
  DataConfig data;
  std::string data_dir = "data";
  ModelConfig model;
  TrainerConfig trainer;
  EvalSettings eval;
  std::string out_dir = "out";

  // Unknown keys and malformed values raise ConfigError.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  void validate() const;
  // Every key with its current value, in documentation order.
  std::string snapshot() const;

  ExperimentSetup experiment(const Dataset& data) const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

const std::vector<ConfigKey>& config_keys();

// Applies the text on top of `cfg`; `source` names the input in errors.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source);
void apply_config_file(RunConfig& cfg, const std::string& path);
// "key=value" form used by command-line overrides.
void apply_override(RunConfig& cfg, const std::string& assignment);

// Aligned table of every key, its default and a short description.
std::string config_help_table();

}  // namespace bfg
