#include "mmft/model.hpp"

#include <algorithm>

namespace mmft {

bool ModelConfig::has_stream(Stream s) const {
  return std::find(streams.begin(), streams.end(), s) != streams.end();
}

EncoderConfig ModelConfig::encoder_for(Stream s) const {
  EncoderConfig e = encoder;
  if (s == Stream::V) e.use_positional = encoder.use_positional && v_use_positional;
  return e;
}

void ModelConfig::validate() const {
  encoder.validate();
  if (streams.empty()) throw ConfigError("at least one stream is required");
  for (std::size_t i = 0; i < streams.size(); ++i) {
    for (std::size_t k = i + 1; k < streams.size(); ++k) {
      if (streams[i] == streams[k]) throw ConfigError("stream listed twice");
    }
  }
  if (has_stream(Stream::Single) && streams.size() != 1) {
    throw ConfigError("the single stream cannot be combined with q, v or s");
  }
  if (!single_stream()) {
    if (fusion == FusionKind::Mmft) {
      mmft.validate();
      if (mmft.d_model != encoder.d_model) throw ConfigError("fusion d_model must match the encoders' d_model");
    }
  }
}

namespace {
std::vector<Stream> canonical_order(const std::vector<Stream>& streams) {
  std::vector<Stream> out;
  for (Stream s : {Stream::Q, Stream::V, Stream::S, Stream::Single}) {
    if (std::find(streams.begin(), streams.end(), s) != streams.end()) out.push_back(s);
  }
  return out;
}
}  // namespace

MmftBert::MmftBert(ModelConfig cfg, Vocabulary vocab, std::uint64_t seed)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)), seed_(seed) {
  cfg_.encoder.vocab_size = vocab_.size();
  cfg_.streams = canonical_order(cfg_.streams);
  cfg_.validate();
  std::mt19937_64 rng(seed);
  for (Stream s : cfg_.streams) {
    encoders_.emplace(s, Encoder(cfg_.encoder_for(s), params_, "encoder." + std::string(to_string(s)), rng));
  }
  if (!cfg_.single_stream()) {
    if (cfg_.fusion == FusionKind::Mmft) {
      mmft_ = std::make_unique<MmftFusion>(cfg_.mmft, params_, "fusion.mmft", rng);
    } else if (cfg_.fusion != FusionKind::Simple) {
      gated_ = std::make_unique<GatedFusion>(cfg_.fusion, cfg_.encoder.d_model, static_cast<int>(cfg_.streams.size()),
                                             params_, "fusion.gated", rng);
    }
    for (Stream s : cfg_.streams) {
      stream_heads_.emplace(s, AnswerHead(cfg_.encoder.d_model, params_, "head." + std::string(to_string(s)), rng));
    }
  }
  joint_head_ = std::make_unique<AnswerHead>(cfg_.encoder.d_model, params_, "head.joint", rng);
}

const Encoder& MmftBert::encoder(Stream s) const {
  auto it = encoders_.find(s);
  if (it == encoders_.end()) throw ConfigError("model has no " + std::string(to_string(s)) + " stream");
  return it->second;
}

const AnswerHead* MmftBert::stream_head_params(Stream s) const {
  auto it = stream_heads_.find(s);
  return it == stream_heads_.end() ? nullptr : &it->second;
}

AssembledSequence MmftBert::assemble_for(Stream s, const QAExample& ex, int j) const {
  return assemble(s, ex, j, vocab_, AssemblyConfig{cfg_.encoder.max_seq_len, cfg_.localized});
}

ExampleForward MmftBert::forward(Tape& tape, const QAExample& ex, bool with_loss, const ForwardContext& ctx) const {
  ExampleForward out;
  for (const auto& [stream, enc] : encoders_) {
    auto& slot = out.encodings[stream];
    for (int j = 0; j < kNumAnswers; ++j) {
      slot.push_back(enc.encode(tape, params_, assemble_for(stream, ex, j), j, false, ctx).encoding);
    }
  }

  std::vector<FusedRepresentation> fused;
  if (cfg_.single_stream()) {
    for (const auto& e : out.encodings.at(Stream::Single)) fused.push_back({e.vector, e.answer_index, FusionKind::Simple});
  } else {
    for (int j = 0; j < kNumAnswers; ++j) {
      std::vector<ModalityEncoding> sources;
      for (Stream s : cfg_.streams) sources.push_back(out.encodings.at(s)[static_cast<std::size_t>(j)]);
      if (mmft_) {
        MmftOutput m = mmft_->fuse(tape, params_, sources, ctx);
        fused.push_back(m.fused);
        out.attention.push_back(std::move(m.attention));
      } else if (gated_) {
        fused.push_back(gated_->fuse(tape, params_, sources));
      } else {
        fused.push_back(simple_fusion(sources));
      }
    }
    for (const auto& [stream, head] : stream_heads_) {
      AnswerScores sc = stream_head(tape, params_, head, stream, out.encodings.at(stream));
      if (stream == Stream::Q) out.q = sc;
      else if (stream == Stream::V) out.v = sc;
      else out.s = sc;
    }
  }
  out.joint = joint_head(tape, params_, *joint_head_, fused);
  if (with_loss) out.loss = total_loss(out.q, out.v, out.s, out.joint, ex.label, cfg_.objective);
  return out;
}

Matrix MmftBert::joint_logits(const QAExample& ex) const {
  Tape tape;
  tape.set_grad_enabled(false);
  return forward(tape, ex, false).joint.logits.value();
}

MmftBert::Prediction MmftBert::predict_example(const QAExample& ex) const {
  Tape tape;
  tape.set_grad_enabled(false);
  ExampleForward f = forward(tape, ex, false);
  Prediction p;
  p.joint_logits = f.joint.logits.value();
  p.joint = predict(p.joint_logits);
  if (f.q) p.stream[Stream::Q] = predict(f.q->logits.value());
  if (f.v) p.stream[Stream::V] = predict(f.v->logits.value());
  if (f.s) p.stream[Stream::S] = predict(f.s->logits.value());
  return p;
}

}  // namespace mmft
