#pragma once

#include "mmft/adam.hpp"
#include "mmft/model.hpp"
#include "mmft/synthdata.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mmft {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 8;
  AdamConfig adam{.lr = 1e-3, .weight_decay = 1e-5};
  double val_fraction = 0.2;
  /// Vocabulary built from the training split.
  int min_count = 1;
  int max_vocab = 0;
  /// Reshuffle the training split every epoch.
  bool shuffle = true;
  /// Linear warmup over this fraction of all steps, then "constant" or
  /// "linear" decay to zero.
  double warmup_fraction = 0.0;
  std::string lr_schedule = "constant";
  /// Present each training example with its five answers in a fresh random
  /// order (label moved along).
  bool permute_answers = false;

  /// Learning rate for 0-based optimizer step `step` of `total_steps`.
  double lr_at(std::size_t step, std::size_t total_steps) const;

  void validate() const;
};

/// Everything a run depends on. Resolution order: built-in defaults, then a
/// JSON config file, then dotted command-line overrides.
struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  TrainConfig train;
  SynthSpec synth;

  void validate() const;
};

/// Toy-scale model defaults (d=32, H=4, two encoder layers, one fusion layer).
ModelConfig toy_model_config();
RunConfig default_run_config();

nlohmann::json to_json(const EncoderConfig& c);
nlohmann::json to_json(const MmftConfig& c);
nlohmann::json to_json(const ObjectiveConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const AdamConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const SynthSpec& c);
nlohmann::json to_json(const RunConfig& c);

// Strict readers: every key must be known; missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
SynthSpec synth_spec_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Merges `patch` into `base`; a key absent from `base` is a ConfigError.
void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& where = "");

/// Applies "a.b.c=value". The value is read as JSON when it parses, otherwise
/// as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

RunConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

std::vector<Stream> parse_streams(const std::string& list);
std::string format_streams(const std::vector<Stream>& streams);

}  // namespace mmft
