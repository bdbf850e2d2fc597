#pragma once

#include "mmft/errors.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mmft {

inline constexpr int kNumAnswers = 5;

enum class Stream { Q, V, S, Single };

std::string_view to_string(Stream s);
Stream stream_from_string(std::string_view name);

namespace token_id {
inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kCls = 2;
inline constexpr int kSep = 3;
inline constexpr int kDot = 4;
inline constexpr int kReserved = 5;
}  // namespace token_id

/// Token <-> id map. Ids 0..4 are [PAD] [UNK] [CLS] [SEP] "." and are never
/// reassigned; unknown tokens resolve to [UNK].
class Vocabulary {
 public:
  Vocabulary();

  /// Rebuilds a vocabulary from its id-ordered token list (as saved in
  /// checkpoints). The first five entries must be the reserved tokens.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::vector<int> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const int> ids) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  int add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct Utterance {
  std::string speaker;
  std::string text;
  double start = 0;
  double end = 0;
  friend bool operator==(const Utterance&, const Utterance&) = default;
};

/// One multiple-choice sample: visual concepts, optional localization window,
/// subtitles, question, five answers and the correct index.
struct QAExample {
  std::string qid;
  std::vector<std::string> vcpt;
  /// Optional per-concept time in seconds, parallel to vcpt. When empty the
  /// concepts carry no timing and localization keeps all of them.
  std::vector<double> vcpt_ts;
  std::optional<std::pair<double, double>> ts;
  std::vector<Utterance> sub;
  std::string question;
  std::array<std::string, kNumAnswers> answers;
  int label = 0;

  /// Throws FormatError / LabelError when an invariant is broken.
  void validate() const;
  friend bool operator==(const QAExample&, const QAExample&) = default;
};

struct AssembledSequence {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  std::vector<int> position_ids;
  std::vector<int> attention_mask;
  Stream stream = Stream::Q;

  std::size_t size() const { return token_ids.size(); }
  /// Appends [PAD] positions with mask 0 up to `length`.
  void pad_to(std::size_t length);
};

struct AssemblyConfig {
  int max_seq_len = 48;
  bool localized = true;
};

/// Lowercases, splits on whitespace and splits punctuation into separate
/// tokens. An apostrophe between two word characters stays inside the word.
std::vector<std::string> tokenize(std::string_view text);

/// "speaker : utterance" lines joined in temporal order.
std::vector<std::string> subtitle_tokens(std::span<const Utterance> sub);

/// Concepts kept for a localized V stream. Concepts are untimed unless
/// vcpt_ts is present.
std::vector<std::string> localized_concepts(const QAExample& ex);
/// Utterances overlapping [t_start, t_end].
std::vector<Utterance> localized_subtitles(const QAExample& ex);

// [CLS] Q [SEP] A_j
AssembledSequence assemble_q(const QAExample& ex, int j, const Vocabulary& vocab, int max_seq_len);
// localized:   [CLS] V . Q [SEP] A_j
// unlocalized: [CLS] Q [SEP] A_j . V
AssembledSequence assemble_v(const QAExample& ex, int j, bool localized, const Vocabulary& vocab,
                             int max_seq_len);
AssembledSequence assemble_s(const QAExample& ex, int j, bool localized, const Vocabulary& vocab,
                             int max_seq_len);
// [CLS] V . S . Q [SEP] A_j in both timestamp regimes
AssembledSequence assemble_single(const QAExample& ex, int j, bool localized, const Vocabulary& vocab,
                                  int max_seq_len);

AssembledSequence assemble(Stream stream, const QAExample& ex, int j, const Vocabulary& vocab,
                           const AssemblyConfig& cfg);

/// Tokens with count >= min_count get ids after the reserved range, ordered
/// by (count desc, token asc).
/// max_size > 0 caps the vocabulary (reserved ids included); the rarest
/// tokens fall back to [UNK].
Vocabulary build_vocab(std::span<const QAExample> corpus, int min_count = 1, int max_size = 0);

/// Question family used for per-family breakdowns: what, who, where, why,
/// how, others (by the first question word).
std::string question_family(std::string_view question);

}  // namespace mmft
