#pragma once

#include "mmft/fusion.hpp"

#include <array>
#include <optional>
#include <span>

namespace mmft {

enum class ScoreSource { Q, V, S, Joint };

struct AnswerScores {
  Var logits;  // 1 x 5
  ScoreSource source = ScoreSource::Joint;
};

/// Single linear layer over the concatenation of one d-vector per answer
/// choice (answer order) producing 5 logits.
class AnswerHead {
 public:
  AnswerHead(int d_model, ParameterStore& store, const std::string& prefix, std::mt19937_64& rng);

  Var scores(Tape& tape, const ParameterStore& store, std::span<const Var> per_answer) const;

  ParamRef weight() const { return weight_; }
  ParamRef bias() const { return bias_; }

 private:
  int d_model_;
  ParamRef weight_, bias_;
};

AnswerScores joint_head(Tape& tape, const ParameterStore& store, const AnswerHead& head,
                        std::span<const FusedRepresentation> fused);
AnswerScores stream_head(Tape& tape, const ParameterStore& store, const AnswerHead& head, Stream stream,
                         std::span<const ModalityEncoding> encodings);

struct ObjectiveConfig {
  /// Keep only the joint term (the "single loss" ablation).
  bool single_loss = false;
  /// Per-term weights in the order q, vid, sub, joint.
  std::array<double, 4> weights{1.0, 1.0, 1.0, 1.0};
};

struct LossBundle {
  double q = 0, vid = 0, sub = 0, joint = 0, total = 0;
};

struct Loss {
  Var total;
  LossBundle values;
};

/// L_total = L_q + L_vid + L_sub + L_joint, each a softmax cross-entropy
/// against `label`. Absent streams contribute 0.
Loss total_loss(const std::optional<AnswerScores>& q, const std::optional<AnswerScores>& v,
                const std::optional<AnswerScores>& s, const AnswerScores& joint, int label,
                const ObjectiveConfig& cfg = {});

/// Argmax with ties broken toward the lowest index.
int predict(const Matrix& logits);

}  // namespace mmft
