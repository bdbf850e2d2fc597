#include "mmft/textpipe.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace mmft {

std::string_view to_string(Stream s) {
  switch (s) {
    case Stream::Q: return "q";
    case Stream::V: return "v";
    case Stream::S: return "s";
    case Stream::Single: return "single";
  }
  return "?";
}

Stream stream_from_string(std::string_view name) {
  if (name == "q") return Stream::Q;
  if (name == "v") return Stream::V;
  if (name == "s") return Stream::S;
  if (name == "single") return Stream::Single;
  throw ConfigError("unknown stream '" + std::string(name) + "' (expected q, v, s or single)");
}

// ---------------------------------------------------------------------------
// Vocabulary

namespace {
const std::array<std::string, token_id::kReserved> kReservedTokens = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "."};

bool is_reserved(const std::string& tok) {
  return std::find(kReservedTokens.begin(), kReservedTokens.end(), tok) != kReservedTokens.end();
}
}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& t : kReservedTokens) add(t);
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kReservedTokens.size() ||
      !std::equal(kReservedTokens.begin(), kReservedTokens.end(), tokens.begin())) {
    throw FormatError("vocabulary does not start with the reserved tokens");
  }
  Vocabulary v;
  for (std::size_t i = kReservedTokens.size(); i < tokens.size(); ++i) {
    if (v.ids_.contains(tokens[i])) throw FormatError("duplicate vocabulary token: " + tokens[i]);
    v.add(tokens[i]);
  }
  return v;
}

int Vocabulary::add(std::string token) {
  const int id = static_cast<int>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? token_id::kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const int> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

// ---------------------------------------------------------------------------
// Examples and tokenization

void QAExample::validate() const {
  if (label < 0 || label >= kNumAnswers) {
    throw LabelError("example " + qid + ": answer index " + std::to_string(label) + " outside [0,5)");
  }
  if (ts && ts->first > ts->second) {
    throw FormatError("example " + qid + ": timestamp start exceeds end");
  }
  if (!vcpt_ts.empty() && vcpt_ts.size() != vcpt.size()) {
    throw FormatError("example " + qid + ": vcpt_ts length differs from vcpt");
  }
}

namespace {
bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }
}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
    } else if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'' && !cur.empty() && is_word_char(static_cast<unsigned char>(cur.back())) &&
               i + 1 < text.size() && is_word_char(static_cast<unsigned char>(text[i + 1]))) {
      cur.push_back('\'');
    } else {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return out;
}

std::vector<std::string> subtitle_tokens(std::span<const Utterance> sub) {
  std::vector<const Utterance*> ordered;
  for (const auto& u : sub) ordered.push_back(&u);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Utterance* a, const Utterance* b) { return a->start < b->start; });
  std::vector<std::string> out;
  for (const Utterance* u : ordered) {
    if (!u->speaker.empty()) {
      for (auto& t : tokenize(u->speaker)) out.push_back(std::move(t));
      out.emplace_back(":");
    }
    for (auto& t : tokenize(u->text)) out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::string> localized_concepts(const QAExample& ex) {
  if (!ex.ts) throw ConfigError("example " + ex.qid + ": localized assembly requires a timestamp");
  if (ex.vcpt_ts.empty()) return ex.vcpt;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ex.vcpt.size(); ++i) {
    if (ex.vcpt_ts[i] >= ex.ts->first && ex.vcpt_ts[i] <= ex.ts->second) out.push_back(ex.vcpt[i]);
  }
  return out;
}

std::vector<Utterance> localized_subtitles(const QAExample& ex) {
  if (!ex.ts) throw ConfigError("example " + ex.qid + ": localized assembly requires a timestamp");
  std::vector<Utterance> out;
  for (const auto& u : ex.sub) {
    if (u.start <= ex.ts->second && u.end >= ex.ts->first) out.push_back(u);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assembly

namespace {

void check_answer_index(int j) {
  if (j < 0 || j >= kNumAnswers) throw std::out_of_range("answer index " + std::to_string(j) + " outside [0,5)");
}

std::vector<int> encode_text(const std::string& text, const Vocabulary& vocab) {
  auto toks = tokenize(text);
  return vocab.encode(toks);
}

std::vector<int> encode_concepts(const std::vector<std::string>& concepts, const Vocabulary& vocab) {
  std::vector<int> out;
  for (const auto& c : concepts) {
    for (int id : encode_text(c, vocab)) out.push_back(id);
  }
  return out;
}

// Lays out [CLS] ctx_1 . ... ctx_k . Q [SEP] A      (context_first)
//       or [CLS] Q [SEP] A . ctx_1 . ... . ctx_k    (otherwise)
// Truncation drops context tokens from the end (last block first), then
// question tokens from the end. Answer tokens are never dropped.
AssembledSequence layout(Stream stream, std::vector<std::vector<int>> contexts, std::vector<int> question,
                         const std::vector<int>& answer, bool context_first, int max_seq_len) {
  const std::size_t structural = 2 + contexts.size();  // [CLS], [SEP], one "." per context block
  std::size_t total = structural + question.size() + answer.size();
  for (const auto& c : contexts) total += c.size();
  const auto limit = static_cast<std::size_t>(std::max(max_seq_len, 0));
  if (structural + answer.size() > limit) {
    throw LengthError("answer of " + std::to_string(answer.size()) + " tokens cannot fit in max_seq_len " +
                      std::to_string(max_seq_len));
  }
  std::size_t overflow = total > limit ? total - limit : 0;
  for (auto it = contexts.rbegin(); it != contexts.rend() && overflow > 0; ++it) {
    const std::size_t cut = std::min(overflow, it->size());
    it->resize(it->size() - cut);
    overflow -= cut;
  }
  if (overflow > 0) question.resize(question.size() - overflow);

  AssembledSequence seq;
  seq.stream = stream;
  auto push = [&](int id, int segment) {
    seq.token_ids.push_back(id);
    seq.segment_ids.push_back(segment);
  };
  push(token_id::kCls, 0);
  if (context_first) {
    for (const auto& c : contexts) {
      for (int id : c) push(id, 0);
      push(token_id::kDot, 0);
    }
    for (int id : question) push(id, 0);
    push(token_id::kSep, 0);
    for (int id : answer) push(id, 1);
  } else {
    for (int id : question) push(id, 0);
    push(token_id::kSep, 0);
    for (int id : answer) push(id, 1);
    for (const auto& c : contexts) {
      push(token_id::kDot, 1);
      for (int id : c) push(id, 1);
    }
  }
  for (std::size_t i = 0; i < seq.token_ids.size(); ++i) {
    seq.position_ids.push_back(static_cast<int>(i));
    seq.attention_mask.push_back(1);
  }
  return seq;
}

}  // namespace

void AssembledSequence::pad_to(std::size_t length) {
  while (token_ids.size() < length) {
    position_ids.push_back(static_cast<int>(token_ids.size()));
    token_ids.push_back(token_id::kPad);
    segment_ids.push_back(segment_ids.empty() ? 0 : segment_ids.back());
    attention_mask.push_back(0);
  }
}

AssembledSequence assemble_q(const QAExample& ex, int j, const Vocabulary& vocab, int max_seq_len) {
  check_answer_index(j);
  return layout(Stream::Q, {}, encode_text(ex.question, vocab), encode_text(ex.answers[j], vocab), true,
                max_seq_len);
}

AssembledSequence assemble_v(const QAExample& ex, int j, bool localized, const Vocabulary& vocab,
                             int max_seq_len) {
  check_answer_index(j);
  auto concepts = localized ? localized_concepts(ex) : ex.vcpt;
  return layout(Stream::V, {encode_concepts(concepts, vocab)}, encode_text(ex.question, vocab),
                encode_text(ex.answers[j], vocab), localized, max_seq_len);
}

AssembledSequence assemble_s(const QAExample& ex, int j, bool localized, const Vocabulary& vocab,
                             int max_seq_len) {
  check_answer_index(j);
  auto sub = localized ? localized_subtitles(ex) : ex.sub;
  return layout(Stream::S, {vocab.encode(subtitle_tokens(sub))}, encode_text(ex.question, vocab),
                encode_text(ex.answers[j], vocab), localized, max_seq_len);
}

AssembledSequence assemble_single(const QAExample& ex, int j, bool localized, const Vocabulary& vocab,
                                  int max_seq_len) {
  check_answer_index(j);
  auto concepts = localized ? localized_concepts(ex) : ex.vcpt;
  auto sub = localized ? localized_subtitles(ex) : ex.sub;
  return layout(Stream::Single, {encode_concepts(concepts, vocab), vocab.encode(subtitle_tokens(sub))},
                encode_text(ex.question, vocab), encode_text(ex.answers[j], vocab), true, max_seq_len);
}

AssembledSequence assemble(Stream stream, const QAExample& ex, int j, const Vocabulary& vocab,
                           const AssemblyConfig& cfg) {
  switch (stream) {
    case Stream::Q: return assemble_q(ex, j, vocab, cfg.max_seq_len);
    case Stream::V: return assemble_v(ex, j, cfg.localized, vocab, cfg.max_seq_len);
    case Stream::S: return assemble_s(ex, j, cfg.localized, vocab, cfg.max_seq_len);
    case Stream::Single: return assemble_single(ex, j, cfg.localized, vocab, cfg.max_seq_len);
  }
  throw ConfigError("unknown stream");
}

// ---------------------------------------------------------------------------

Vocabulary build_vocab(std::span<const QAExample> corpus, int min_count, int max_size) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::map<std::string, long> counts;
  auto count = [&](const std::vector<std::string>& toks) {
    for (const auto& t : toks) {
      if (!is_reserved(t)) ++counts[t];
    }
  };
  for (const auto& ex : corpus) {
    for (const auto& c : ex.vcpt) count(tokenize(c));
    count(subtitle_tokens(ex.sub));
    count(tokenize(ex.question));
    for (const auto& a : ex.answers) count(tokenize(a));
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens(kReservedTokens.begin(), kReservedTokens.end());
  for (const auto& [tok, n] : ranked) {
    if (max_size > 0 && tokens.size() >= static_cast<std::size_t>(max_size)) break;
    if (n >= min_count) tokens.push_back(tok);
  }
  return Vocabulary::from_tokens(tokens);
}

std::string question_family(std::string_view question) {
  auto toks = tokenize(question);
  if (toks.empty()) return "others";
  static const std::array<std::string, 5> families = {"what", "who", "where", "why", "how"};
  for (const auto& f : families) {
    if (toks.front() == f) return f;
  }
  return "others";
}

}  // namespace mmft
