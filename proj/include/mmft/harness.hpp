#pragma once

#include "mmft/checkpoint.hpp"
#include "mmft/config.hpp"
#include "mmft/gradcheck.hpp"
#include "mmft/model.hpp"
#include "mmft/synthdata.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace mmft {

// ---------------------------------------------------------------------------
// Provenance

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
std::string hash_file(const std::filesystem::path& path);
std::string hash_examples(const std::vector<QAExample>& examples);
std::string artifact_version();

// ---------------------------------------------------------------------------
// Evaluation

struct Cell {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n); }
  void add(bool hit) {
    ++n;
    correct += hit ? 1 : 0;
  }
};

struct EvalReport {
  Cell overall;
  std::map<std::string, Cell> by_family;
  /// Required modality (V, S, BOTH, untagged): "full" cells hold every
  /// question of that modality, "clean" only those with evidence present.
  std::map<std::string, Cell> by_modality;
  std::map<std::string, Cell> by_modality_clean;
  Cell clean;
  std::size_t untagged = 0;
  /// Standalone accuracy of each stream head (q, v, s).
  std::map<std::string, Cell> stream_heads;
  std::vector<int> predictions;

  double accuracy() const { return overall.accuracy(); }
  /// |sum(n_k * acc_k) / N - overall| over one breakdown.
  double recombination_error(const std::map<std::string, Cell>& axis) const;
  nlohmann::json to_json() const;
  std::string to_table() const;
};

struct Predictions {
  std::vector<int> joint;
  std::map<Stream, std::vector<int>> streams;
};

Predictions predict_all(const MmftBert& model, const std::vector<QAExample>& examples);

/// Tags are matched by qid; questions without a tag land in "untagged".
EvalReport build_report(const std::vector<QAExample>& examples, const Predictions& preds,
                        const std::map<std::string, DiagnosticTag>& tags);

EvalReport evaluate(const MmftBert& model, const std::vector<QAExample>& examples,
                    const std::map<std::string, DiagnosticTag>& tags = {});

// ---------------------------------------------------------------------------
// Training

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0;
  LossBundle train_terms;  // per-example means
  double train_accuracy = 0;
  double val_accuracy = 0;
  std::map<std::string, double> val_stream_accuracy;
  double seconds = 0;
};

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> dataset_hashes;
  std::string artifact_version;
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;
  double best_val_accuracy = 0;
  std::string status = "ok";
  std::string message;
  double wall_clock_seconds = 0;
  nlohmann::json extra = nlohmann::json::object();

  /// Deterministic part only: no timings.
  nlohmann::json metrics_json() const;
  nlohmann::json to_json() const;
};

struct Split {
  std::vector<QAExample> train;
  std::vector<QAExample> val;
};

/// Seeded permutation, then the last round(val_fraction * N) examples
/// become the validation split.
Split split_corpus(const std::vector<QAExample>& corpus, double val_fraction, std::uint64_t seed);

struct TrainOptions {
  /// Called after every epoch; returning false stops training early.
  std::function<bool(const EpochMetrics&)> on_epoch;
  /// Optional stop after this many optimizer steps (0 = no limit).
  std::size_t max_steps = 0;
  /// Evaluate on the validation split after every epoch.
  bool validate = true;
};

struct TrainResult {
  /// Parameters restored to the best validation epoch (ties to the earlier
  /// epoch); the last epoch when there is no validation split.
  std::unique_ptr<MmftBert> model;
  RunManifest manifest;
  Split split;
  std::size_t steps = 0;
  /// Mean training loss of every optimizer step, in order.
  std::vector<double> step_losses;
  bool diverged() const { return manifest.status == "diverged"; }
};

TrainResult train(const RunConfig& cfg, const std::vector<QAExample>& corpus, const TrainOptions& opts = {});

/// Mean loss over examples without updating anything.
LossBundle mean_loss(const MmftBert& model, const std::vector<QAExample>& examples);

// ---------------------------------------------------------------------------
// Ablation

struct AblationCell {
  std::string name;
  std::vector<std::string> overrides;  // dotted key=value deltas over the base
};

/// Design-choice ablation rows at toy scale: loss structure, heads, layers, skip, fusion kind.
std::vector<AblationCell> default_ablation_grid();

struct AblationRow {
  std::string name;
  std::vector<std::string> overrides;
  std::vector<double> accuracies;  // one per seed
  double mean = 0;
  double sd = 0;
  bool failed = false;
  std::string error;
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
  nlohmann::json to_json() const;
  std::string to_table() const;
  const AblationRow* find(const std::string& name) const;
};

struct AblationOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int jobs = 1;
  /// Receives every finished cell run (row name, seed, result).
  std::function<void(const std::string&, std::uint64_t, const TrainResult&)> on_run;
};

AblationTable ablate(const nlohmann::json& base_config, const std::vector<AblationCell>& grid,
                     const std::vector<QAExample>& corpus, const AblationOptions& opts = {});

// ---------------------------------------------------------------------------
// Diagnostics

/// Reorders the visual tokens of an example by a random permutation. Each
/// token becomes its own concept entry so the assembled V context is a
/// token-level permutation of the original.
QAExample permute_visual_tokens(const QAExample& ex, std::mt19937_64& rng);

/// Same question with the five answers in a random order; the label follows
/// the correct answer.
QAExample permute_answers(const QAExample& ex, std::mt19937_64& rng);

struct ShuffleResult {
  double original_accuracy = 0;
  double shuffled_accuracy = 0;
  double gap = 0;  // original - shuffled
  /// Second variant: V positional embeddings zeroed instead of reordering.
  double zeroed_position_accuracy = 0;
  double zeroed_gap = 0;
  std::uint64_t permutation_seed = 0;
  bool v_uses_positional = true;
  std::size_t changed_predictions = 0;
  nlohmann::json to_json() const;
};

ShuffleResult shuffle_experiment(const MmftBert& model, const std::vector<QAExample>& examples,
                                 std::uint64_t permutation_seed);

struct AttentionExport {
  std::string qid;
  int answer_index = 0;
  int layer = 0;
  std::vector<std::string> labels;
  Matrix head_average;
  std::vector<Matrix> per_head;
};

nlohmann::json to_json(const AttentionExport& e);
AttentionExport attention_export_from_json(const nlohmann::json& j);
void write_pgm(const std::filesystem::path& path, const Matrix& weights);
Matrix read_pgm(const std::filesystem::path& path);

struct QuestionAttribution {
  std::string qid;
  RequiredModality required = RequiredModality::V;
  bool clean = true;
  bool correct = false;
  /// [FUSE]-row weights of the correct answer's head-averaged map in the last
  /// fusion layer, keyed by stream label (FUSE self-slot excluded).
  std::map<std::string, double> fuse_row;
  std::string top_modality;
};

struct AttributionReport {
  std::size_t eligible = 0;  // correctly answered clean V or S questions
  std::size_t attributed = 0;
  double fraction() const { return eligible == 0 ? 0.0 : static_cast<double>(attributed) / static_cast<double>(eligible); }
  std::map<std::string, Cell> by_modality;
  std::vector<QuestionAttribution> questions;
  std::size_t exported = 0;
  nlohmann::json to_json() const;
};

struct AttentionReportOptions {
  std::filesystem::path export_dir;  // empty: no files
  std::size_t max_exports = 50;
  bool pgm = true;
};

AttributionReport attention_report(const MmftBert& model, const std::vector<QAExample>& examples,
                                   const std::map<std::string, DiagnosticTag>& tags,
                                   const AttentionReportOptions& opts = {});

struct EnsembleReport {
  EvalReport ensemble;
  std::vector<double> member_accuracies;
  double best_member = 0;
  double mean_member = 0;
  nlohmann::json to_json() const;
};

/// Mean of the members' softmax probabilities, then argmax.
EnsembleReport ensemble_eval(const std::vector<const MmftBert*>& members, const std::vector<QAExample>& examples,
                             const std::map<std::string, DiagnosticTag>& tags = {});

// ---------------------------------------------------------------------------
// Full-model gradient check

struct ModelGradcheckOptions {
  int d_model = 16;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 32;
  int mmft_layers = 1;
  int vocab = 60;
  int max_seq_len = 24;
  std::uint64_t seed = 1;
  FusionKind fusion = FusionKind::Mmft;
  bool single_loss = false;
  GradCheckOptions fd;
};

struct ModelGradcheckResult {
  GradCheckReport report;
  nlohmann::json config;
  std::size_t vocab_size = 0;
  std::string qid;
  double seconds = 0;
  nlohmann::json to_json() const;
};

/// Builds a fresh model on one synthetic example and compares the gradient
/// of the total loss against central differences for every parameter.
ModelGradcheckResult model_gradcheck(const ModelGradcheckOptions& opts);

}  // namespace mmft
