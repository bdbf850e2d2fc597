#include "mmft/objective.hpp"

namespace mmft {

AnswerHead::AnswerHead(int d_model, ParameterStore& store, const std::string& prefix, std::mt19937_64& rng)
    : d_model_(d_model) {
  weight_ = store.add(prefix + ".w", truncated_normal(static_cast<Index>(kNumAnswers) * d_model, kNumAnswers, 0.02, rng))
                .index();
  bias_ = store.add(prefix + ".b", Matrix::Zero(1, kNumAnswers)).index();
}

Var AnswerHead::scores(Tape& tape, const ParameterStore& store, std::span<const Var> per_answer) const {
  if (per_answer.size() != static_cast<std::size_t>(kNumAnswers)) {
    throw DimensionError("answer head expects " + std::to_string(kNumAnswers) + " vectors, got " +
                         std::to_string(per_answer.size()));
  }
  for (const Var& v : per_answer) {
    if (v.shape() != Shape{1, d_model_}) {
      throw DimensionError("answer head expects [1x" + std::to_string(d_model_) + "] inputs, got " + v.shape().str());
    }
  }
  return linear(concat(per_answer, 1), tape.param(store[weight_]), tape.param(store[bias_]));
}

AnswerScores joint_head(Tape& tape, const ParameterStore& store, const AnswerHead& head,
                        std::span<const FusedRepresentation> fused) {
  if (fused.size() != static_cast<std::size_t>(kNumAnswers)) {
    throw DimensionError("joint head expects 5 fused vectors, got " + std::to_string(fused.size()));
  }
  std::vector<Var> vecs;
  for (std::size_t j = 0; j < fused.size(); ++j) {
    if (fused[j].answer_index != static_cast<int>(j)) throw std::invalid_argument("fused vectors out of answer order");
    vecs.push_back(fused[j].vector);
  }
  return {head.scores(tape, store, vecs), ScoreSource::Joint};
}

AnswerScores stream_head(Tape& tape, const ParameterStore& store, const AnswerHead& head, Stream stream,
                         std::span<const ModalityEncoding> encodings) {
  if (encodings.size() != static_cast<std::size_t>(kNumAnswers)) {
    throw DimensionError("stream head expects 5 encodings, got " + std::to_string(encodings.size()));
  }
  std::vector<Var> vecs;
  for (std::size_t j = 0; j < encodings.size(); ++j) {
    if (encodings[j].stream != stream) throw std::invalid_argument("stream head received encodings of mixed streams");
    if (encodings[j].answer_index != static_cast<int>(j)) throw std::invalid_argument("encodings out of answer order");
    vecs.push_back(encodings[j].vector);
  }
  ScoreSource src = stream == Stream::Q ? ScoreSource::Q : stream == Stream::V ? ScoreSource::V : ScoreSource::S;
  if (stream == Stream::Single) throw std::invalid_argument("the single-stream model has no stream head");
  return {head.scores(tape, store, vecs), src};
}

Loss total_loss(const std::optional<AnswerScores>& q, const std::optional<AnswerScores>& v,
                const std::optional<AnswerScores>& s, const AnswerScores& joint, int label,
                const ObjectiveConfig& cfg) {
  if (label < 0 || label >= kNumAnswers) {
    throw LabelError("label " + std::to_string(label) + " outside [0,5)");
  }
  const int labels[1] = {label};
  Loss out;
  std::vector<Var> terms;
  auto term = [&](const std::optional<AnswerScores>& scores, double weight, double& slot) {
    if (!scores || cfg.single_loss || weight == 0.0) return;
    Var ce = cross_entropy(scores->logits, labels);
    if (weight != 1.0) ce = scale(ce, weight);
    slot = ce.scalar();
    terms.push_back(ce);
  };
  term(q, cfg.weights[0], out.values.q);
  term(v, cfg.weights[1], out.values.vid);
  term(s, cfg.weights[2], out.values.sub);
  {
    Var ce = cross_entropy(joint.logits, labels);
    if (cfg.weights[3] != 1.0) ce = scale(ce, cfg.weights[3]);
    out.values.joint = ce.scalar();
    terms.push_back(ce);
  }
  out.total = terms.size() == 1 ? terms.front() : add_n(terms);
  out.values.total = out.total.scalar();
  return out;
}

int predict(const Matrix& logits) {
  if (logits.size() == 0) throw DimensionError("predict: empty logits");
  int best = 0;
  for (Index i = 1; i < logits.size(); ++i) {
    if (logits.data()[i] > logits.data()[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace mmft
