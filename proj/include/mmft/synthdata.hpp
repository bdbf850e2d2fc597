#pragma once

#include "mmft/textpipe.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mmft {

enum class RequiredModality { V, S, Both };

std::string_view to_string(RequiredModality m);
RequiredModality modality_from_string(std::string_view name);

/// Knobs of the synthetic corpus. Each example is a small world: a scene of
/// attribute-object concepts and a short dialogue of speaker utterances.
struct SynthSpec {
  int n_examples = 2000;
  // Word pools per modality.
  int n_attributes = 14;
  int n_objects = 14;
  int n_speakers = 12;
  int n_facts = 10;  // per fact category (food, place, reason)
  int scene_size = 3;
  int dialogue_size = 3;
  std::vector<std::string> question_families{"what", "who", "where", "why", "how", "others"};
  /// Fractions of visual, subtitle and both-modality questions.
  std::array<double, 3> modality_mix{0.4, 0.4, 0.2};
  /// Probability that one wrong answer is planted in the modality the
  /// question does not need.
  double distractor_rate = 0.2;
  /// true: evidence always present. false: evidence kept with probability
  /// adequate_rate and withheld otherwise.
  bool clean = true;
  double adequate_rate = 0.41;
  std::uint64_t seed = 1;

  void validate() const;
};

struct DiagnosticTag {
  std::string qid;
  RequiredModality required = RequiredModality::V;
  bool clean = true;
  friend bool operator==(const DiagnosticTag&, const DiagnosticTag&) = default;
};

struct SynthCorpus {
  std::vector<QAExample> examples;
  std::vector<DiagnosticTag> tags;
};

/// Throws ConfigError when the spec is infeasible (e.g. a word pool too small
/// for five distinct answers).
SynthCorpus generate(const SynthSpec& spec);

/// True when every token of the correct answer occurs in the token stream of
/// the given modality (both modalities for Both).
bool evidence_present(const QAExample& ex, RequiredModality modality);

std::vector<std::string> visual_tokens(const QAExample& ex);

void write_tags(const std::filesystem::path& path, const std::vector<DiagnosticTag>& tags);
std::vector<DiagnosticTag> read_tags(const std::filesystem::path& path);
std::map<std::string, DiagnosticTag> index_tags(const std::vector<DiagnosticTag>& tags);

}  // namespace mmft
