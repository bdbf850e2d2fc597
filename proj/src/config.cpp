#include "mmft/config.hpp"

#include <fstream>
#include <sstream>

namespace mmft {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (val_fraction < 0 || val_fraction >= 1) throw ConfigError("train.val_fraction must lie in [0, 1)");
  if (adam.lr < 0) throw ConfigError("train.adam.lr must be non-negative");
  if (adam.beta1 < 0 || adam.beta1 >= 1 || adam.beta2 < 0 || adam.beta2 >= 1) {
    throw ConfigError("train.adam betas must lie in [0, 1)");
  }
  if (min_count < 1) throw ConfigError("train.min_count must be at least 1");
  if (max_vocab < 0) throw ConfigError("train.max_vocab must be non-negative");
  if (warmup_fraction < 0 || warmup_fraction > 1) throw ConfigError("train.warmup_fraction must lie in [0, 1]");
  if (lr_schedule != "constant" && lr_schedule != "linear") {
    throw ConfigError("train.lr_schedule must be constant or linear, got '" + lr_schedule + "'");
  }
}

double TrainConfig::lr_at(std::size_t step, std::size_t total_steps) const {
  const double total = static_cast<double>(std::max<std::size_t>(total_steps, 1));
  const double t = static_cast<double>(step) + 1.0;
  const double warm = warmup_fraction * total;
  if (t <= warm) return adam.lr * t / warm;
  if (lr_schedule == "linear") return adam.lr * std::max(0.0, (total - t + 1.0) / (total - warm));
  return adam.lr;
}

void RunConfig::validate() const {
  train.validate();
  synth.validate();
  ModelConfig m = model;
  if (m.encoder.vocab_size < token_id::kReserved) m.encoder.vocab_size = token_id::kReserved;
  m.validate();
}

ModelConfig toy_model_config() {
  ModelConfig m;
  m.encoder.d_model = 32;
  m.encoder.n_heads = 4;
  m.encoder.n_layers = 2;
  m.encoder.d_ff = 64;
  m.encoder.max_seq_len = 48;
  m.encoder.aggregate_layer_offset = default_aggregate_offset(m.encoder.n_layers);
  m.mmft = {.n_layers = 1, .n_heads = 4, .d_model = 32, .d_ff = 64};
  return m;
}

RunConfig default_run_config() {
  RunConfig c;
  c.model = toy_model_config();
  return c;
}

std::vector<Stream> parse_streams(const std::string& list) {
  std::vector<Stream> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(stream_from_string(item));
    } catch (const std::exception&) {
      throw ConfigError("unknown stream '" + item + "' (expected q, v, s or single)");
    }
  }
  if (out.empty()) throw ConfigError("empty stream list");
  return out;
}

std::string format_streams(const std::vector<Stream>& streams) {
  std::string out;
  for (Stream s : streams) out += (out.empty() ? "" : ",") + std::string(to_string(s));
  return out;
}

json to_json(const EncoderConfig& c) {
  return {{"d_model", c.d_model},         {"n_heads", c.n_heads},
          {"n_layers", c.n_layers},       {"d_ff", c.d_ff},
          {"max_seq_len", c.max_seq_len}, {"vocab_size", c.vocab_size},
          {"use_positional", c.use_positional}, {"aggregate_layer_offset", c.aggregate_layer_offset},
          {"dropout", c.dropout}};
}

json to_json(const MmftConfig& c) {
  return {{"n_layers", c.n_layers}, {"n_heads", c.n_heads},   {"d_model", c.d_model},
          {"d_ff", c.d_ff},         {"use_skip", c.use_skip}, {"modality_embeddings", c.modality_embeddings}};
}

json to_json(const ObjectiveConfig& c) { return {{"single_loss", c.single_loss}, {"weights", c.weights}}; }

json to_json(const ModelConfig& c) {
  std::vector<std::string> streams;
  for (Stream s : c.streams) streams.emplace_back(to_string(s));
  return {{"encoder", to_json(c.encoder)},
          {"v_use_positional", c.v_use_positional},
          {"streams", streams},
          {"fusion", std::string(to_string(c.fusion))},
          {"mmft", to_json(c.mmft)},
          {"objective", to_json(c.objective)},
          {"localized", c.localized}};
}

json to_json(const AdamConfig& c) {
  return {{"lr", c.lr}, {"weight_decay", c.weight_decay}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps},
          {"decay", "decoupled"}};
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"adam", to_json(c.adam)},
          {"val_fraction", c.val_fraction}, {"min_count", c.min_count}, {"max_vocab", c.max_vocab},
          {"shuffle", c.shuffle},       {"warmup_fraction", c.warmup_fraction}, {"lr_schedule", c.lr_schedule},
          {"permute_answers", c.permute_answers}};
}

json to_json(const SynthSpec& c) {
  return {{"n_examples", c.n_examples},
          {"n_attributes", c.n_attributes},
          {"n_objects", c.n_objects},
          {"n_speakers", c.n_speakers},
          {"n_facts", c.n_facts},
          {"scene_size", c.scene_size},
          {"dialogue_size", c.dialogue_size},
          {"question_families", c.question_families},
          {"modality_mix", c.modality_mix},
          {"distractor_rate", c.distractor_rate},
          {"clean", c.clean},
          {"adequate_rate", c.adequate_rate},
          {"seed", c.seed}};
}

json to_json(const RunConfig& c) {
  return {{"seed", c.seed}, {"model", to_json(c.model)}, {"train", to_json(c.train)}, {"synth", to_json(c.synth)}};
}

namespace {

std::string join(const std::string& where, const std::string& key) { return where.empty() ? key : where + "." + key; }

// Reads `key` into `out` when present, reporting type errors with the full path.
template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + join(where, key) + "' has the wrong type: " + it->dump());
  }
}

void require_known(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ConfigError("unknown config key '" + join(where, k) + "'");
  }
}

EncoderConfig encoder_from_json(const json& j, const std::string& w) {
  require_known(j, {"d_model", "n_heads", "n_layers", "d_ff", "max_seq_len", "vocab_size", "use_positional",
                    "aggregate_layer_offset", "dropout"}, w);
  EncoderConfig c;
  read(j, "d_model", c.d_model, w);
  read(j, "n_heads", c.n_heads, w);
  read(j, "n_layers", c.n_layers, w);
  read(j, "d_ff", c.d_ff, w);
  read(j, "max_seq_len", c.max_seq_len, w);
  read(j, "vocab_size", c.vocab_size, w);
  read(j, "use_positional", c.use_positional, w);
  c.aggregate_layer_offset = default_aggregate_offset(c.n_layers);
  read(j, "aggregate_layer_offset", c.aggregate_layer_offset, w);
  read(j, "dropout", c.dropout, w);
  return c;
}

MmftConfig mmft_from_json(const json& j, const std::string& w) {
  require_known(j, {"n_layers", "n_heads", "d_model", "d_ff", "use_skip", "modality_embeddings"}, w);
  MmftConfig c;
  read(j, "n_layers", c.n_layers, w);
  read(j, "n_heads", c.n_heads, w);
  read(j, "d_model", c.d_model, w);
  read(j, "d_ff", c.d_ff, w);
  read(j, "use_skip", c.use_skip, w);
  read(j, "modality_embeddings", c.modality_embeddings, w);
  return c;
}

ObjectiveConfig objective_from_json(const json& j, const std::string& w) {
  require_known(j, {"single_loss", "weights"}, w);
  ObjectiveConfig c;
  read(j, "single_loss", c.single_loss, w);
  read(j, "weights", c.weights, w);
  return c;
}

AdamConfig adam_from_json(const json& j, const std::string& w) {
  require_known(j, {"lr", "weight_decay", "beta1", "beta2", "eps", "decay"}, w);
  AdamConfig c;
  read(j, "lr", c.lr, w);
  read(j, "weight_decay", c.weight_decay, w);
  read(j, "beta1", c.beta1, w);
  read(j, "beta2", c.beta2, w);
  read(j, "eps", c.eps, w);
  if (j.contains("decay") && j.at("decay") != "decoupled") {
    throw ConfigError("only decoupled weight decay is implemented");
  }
  return c;
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  const std::string w = "model";
  require_known(j, {"encoder", "v_use_positional", "streams", "fusion", "mmft", "objective", "localized"}, w);
  ModelConfig c = toy_model_config();
  if (j.contains("encoder")) {
    json enc = to_json(c.encoder);
    enc.erase("aggregate_layer_offset");
    merge_strict(enc, j.at("encoder"), "model.encoder");
    c.encoder = encoder_from_json(enc, "model.encoder");
  }
  read(j, "v_use_positional", c.v_use_positional, w);
  if (j.contains("streams")) {
    const json& s = j.at("streams");
    std::string list;
    if (s.is_string()) {
      list = s.get<std::string>();
    } else if (s.is_array()) {
      for (const auto& e : s) {
        if (!e.is_string()) throw ConfigError("model.streams entries must be strings");
        list += e.get<std::string>() + ",";
      }
    } else {
      throw ConfigError("model.streams must be a list or a comma-separated string");
    }
    c.streams = parse_streams(list);
  }
  if (j.contains("fusion")) {
    if (!j.at("fusion").is_string()) throw ConfigError("model.fusion must be a string");
    c.fusion = fusion_from_string(j.at("fusion").get<std::string>());
  }
  if (j.contains("mmft")) {
    json m = to_json(c.mmft);
    merge_strict(m, j.at("mmft"), "model.mmft");
    c.mmft = mmft_from_json(m, "model.mmft");
  }
  if (j.contains("objective")) c.objective = objective_from_json(j.at("objective"), "model.objective");
  read(j, "localized", c.localized, w);
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  const std::string w = "train";
  require_known(j, {"epochs", "batch_size", "adam", "val_fraction", "min_count", "max_vocab", "shuffle",
                    "warmup_fraction", "lr_schedule", "permute_answers"},
                w);
  TrainConfig c;
  read(j, "epochs", c.epochs, w);
  read(j, "batch_size", c.batch_size, w);
  if (j.contains("adam")) c.adam = adam_from_json(j.at("adam"), "train.adam");
  read(j, "val_fraction", c.val_fraction, w);
  read(j, "min_count", c.min_count, w);
  read(j, "max_vocab", c.max_vocab, w);
  read(j, "shuffle", c.shuffle, w);
  read(j, "warmup_fraction", c.warmup_fraction, w);
  read(j, "lr_schedule", c.lr_schedule, w);
  read(j, "permute_answers", c.permute_answers, w);
  return c;
}

SynthSpec synth_spec_from_json(const json& j) {
  const std::string w = "synth";
  require_known(j, {"n_examples", "n_attributes", "n_objects", "n_speakers", "n_facts", "scene_size",
                    "dialogue_size", "question_families", "modality_mix", "distractor_rate", "clean",
                    "adequate_rate", "seed"}, w);
  SynthSpec c;
  read(j, "n_examples", c.n_examples, w);
  read(j, "n_attributes", c.n_attributes, w);
  read(j, "n_objects", c.n_objects, w);
  read(j, "n_speakers", c.n_speakers, w);
  read(j, "n_facts", c.n_facts, w);
  read(j, "scene_size", c.scene_size, w);
  read(j, "dialogue_size", c.dialogue_size, w);
  read(j, "question_families", c.question_families, w);
  read(j, "modality_mix", c.modality_mix, w);
  read(j, "distractor_rate", c.distractor_rate, w);
  read(j, "clean", c.clean, w);
  read(j, "adequate_rate", c.adequate_rate, w);
  read(j, "seed", c.seed, w);
  return c;
}

RunConfig run_config_from_json(const json& j) {
  require_known(j, {"seed", "model", "train", "synth"}, "");
  RunConfig c = default_run_config();
  read(j, "seed", c.seed, "");
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("synth")) c.synth = synth_spec_from_json(j.at("synth"));
  return c;
}

void merge_strict(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config section '" + where + "' must be an object");
  for (const auto& [k, v] : patch.items()) {
    const std::string path = join(where, k);
    // The aggregation offset follows n_layers unless set explicitly.
    if (!base.contains(k) && !(k == "aggregate_layer_offset" && where.ends_with("encoder"))) {
      throw ConfigError("unknown config key '" + path + "'");
    }
    if (base.contains(k) && base[k].is_object() && v.is_object()) {
      merge_strict(base[k], v, path);
    } else {
      base[k] = v;
    }
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  json patch = value;
  std::vector<std::string> parts;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  merge_strict(config, patch);
}

RunConfig resolve_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json base = to_json(default_run_config());
  // Left implicit so it tracks model.encoder.n_layers.
  base["model"]["encoder"].erase("aggregate_layer_offset");
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open config file: " + file.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + file.string() + " is not valid JSON: " + e.what());
    }
    merge_strict(base, j);
  }
  for (const auto& o : overrides) apply_override(base, o);
  RunConfig c = run_config_from_json(base);
  c.validate();
  return c;
}

}  // namespace mmft
