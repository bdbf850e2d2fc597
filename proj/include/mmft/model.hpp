#pragma once

#include "mmft/objective.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace mmft {

/// Full architecture: one encoder per active stream, a fusion operator over
/// the per-hypothesis encodings, per-stream heads and the joint head.
struct ModelConfig {
  EncoderConfig encoder;
  /// Positional embeddings in the V stream (combined with encoder.use_positional).
  bool v_use_positional = true;
  /// Any non-empty subset of {q, v, s}, or {single} for the one-encoder
  /// baseline that reads V, S, Q and A as one sequence.
  std::vector<Stream> streams{Stream::Q, Stream::V, Stream::S};
  FusionKind fusion = FusionKind::Mmft;
  MmftConfig mmft;
  ObjectiveConfig objective;
  /// Inputs filtered to the timestamp window ("w/ ts").
  bool localized = true;

  bool single_stream() const { return streams.size() == 1 && streams.front() == Stream::Single; }
  bool has_stream(Stream s) const;
  EncoderConfig encoder_for(Stream s) const;
  void validate() const;
};

struct ExampleForward {
  std::optional<AnswerScores> q, v, s;
  AnswerScores joint;
  /// One record per answer choice when the fusion is MMFT.
  std::vector<FusionAttentionRecord> attention;
  /// Per-stream encodings, [stream][answer].
  std::map<Stream, std::vector<ModalityEncoding>> encodings;
  std::optional<Loss> loss;
};

class MmftBert {
 public:
  MmftBert(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed);

  /// Builds the graph for one example. The loss is attached when `with_loss`.
  ExampleForward forward(Tape& tape, const QAExample& ex, bool with_loss = true,
                         const ForwardContext& ctx = {}) const;

  /// Joint-head logits (1 x 5) without recording gradients.
  Matrix joint_logits(const QAExample& ex) const;

  struct Prediction {
    int joint = 0;
    Matrix joint_logits;
    std::map<Stream, int> stream;  // per-stream head predictions
  };
  Prediction predict_example(const QAExample& ex) const;

  AssembledSequence assemble_for(Stream s, const QAExample& ex, int j) const;

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }

  const AnswerHead& joint_head_params() const { return *joint_head_; }
  const AnswerHead* stream_head_params(Stream s) const;
  const MmftFusion* mmft() const { return mmft_.get(); }
  const GatedFusion* gated() const { return gated_.get(); }
  const Encoder& encoder(Stream s) const;

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  std::uint64_t seed_;
  ParameterStore params_;
  std::map<Stream, Encoder> encoders_;
  std::unique_ptr<MmftFusion> mmft_;
  std::unique_ptr<GatedFusion> gated_;
  std::map<Stream, AnswerHead> stream_heads_;
  std::unique_ptr<AnswerHead> joint_head_;
};

}  // namespace mmft
