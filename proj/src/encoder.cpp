#include "mmft/encoder.hpp"

#include <cmath>

namespace mmft {

void EncoderConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || n_layers < 1 || d_ff < 1 || max_seq_len < 1) {
    throw ConfigError("encoder dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (aggregate_layer_offset < 1 || aggregate_layer_offset > n_layers) {
    throw ConfigError("aggregate_layer_offset must lie in [1, n_layers]");
  }
  if (vocab_size < token_id::kReserved) throw ConfigError("vocab_size smaller than the reserved range");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

int default_aggregate_offset(int n_layers) { return n_layers >= 4 ? 4 : 1; }

namespace {

constexpr Scalar kInitStd = 0.02;
constexpr Scalar kMaskedLogit = -1e9;

ParamRef add_weight(ParameterStore& store, const std::string& name, Index rows, Index cols,
                    std::mt19937_64& rng) {
  return store.add(name, truncated_normal(rows, cols, kInitStd, rng)).index();
}

ParamRef add_zeros(ParameterStore& store, const std::string& name, Index cols) {
  return store.add(name, Matrix::Zero(1, cols)).index();
}

ParamRef add_ones(ParameterStore& store, const std::string& name, Index cols) {
  return store.add(name, Matrix::Ones(1, cols)).index();
}

}  // namespace

BlockParams register_block(ParameterStore& store, const std::string& prefix, int d_model, int d_ff,
                           std::mt19937_64& rng) {
  BlockParams p{};
  p.attn.wq = add_weight(store, prefix + ".attn.wq", d_model, d_model, rng);
  p.attn.bq = add_zeros(store, prefix + ".attn.bq", d_model);
  p.attn.wk = add_weight(store, prefix + ".attn.wk", d_model, d_model, rng);
  p.attn.bk = add_zeros(store, prefix + ".attn.bk", d_model);
  p.attn.wv = add_weight(store, prefix + ".attn.wv", d_model, d_model, rng);
  p.attn.bv = add_zeros(store, prefix + ".attn.bv", d_model);
  p.attn.wo = add_weight(store, prefix + ".attn.wo", d_model, d_model, rng);
  p.attn.bo = add_zeros(store, prefix + ".attn.bo", d_model);
  p.ln1_gain = add_ones(store, prefix + ".ln1.gain", d_model);
  p.ln1_bias = add_zeros(store, prefix + ".ln1.bias", d_model);
  p.ff1_w = add_weight(store, prefix + ".ff1.w", d_model, d_ff, rng);
  p.ff1_b = add_zeros(store, prefix + ".ff1.b", d_ff);
  p.ff2_w = add_weight(store, prefix + ".ff2.w", d_ff, d_model, rng);
  p.ff2_b = add_zeros(store, prefix + ".ff2.b", d_model);
  p.ln2_gain = add_ones(store, prefix + ".ln2.gain", d_model);
  p.ln2_bias = add_zeros(store, prefix + ".ln2.bias", d_model);
  return p;
}

AttentionOutput multi_head_attention(Tape& tape, const ParameterStore& store, Var x, const Matrix& key_bias,
                                     int n_heads, const AttentionParams& p) {
  const Index d = x.cols();
  if (n_heads < 1 || d % n_heads != 0) {
    throw ConfigError("attention width " + std::to_string(d) + " is not divisible by " + std::to_string(n_heads) +
                      " heads");
  }
  if (key_bias.rows() != 1 || key_bias.cols() != x.rows()) {
    throw DimensionError("attention key bias " + shape_of(key_bias).str() + " does not match sequence " +
                         x.shape().str());
  }
  auto w = [&](ParamRef r) { return tape.param(store[r]); };
  Var q = linear(x, w(p.wq), w(p.bq));
  Var k = linear(x, w(p.wk), w(p.bk));
  Var v = linear(x, w(p.wv), w(p.bv));

  const Index head_dim = d / n_heads;
  const Scalar inv_scale = 1.0 / std::sqrt(static_cast<Scalar>(head_dim));
  AttentionOutput out;
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    Var qh = slice_cols(q, h * head_dim, head_dim);
    Var kh = slice_cols(k, h * head_dim, head_dim);
    Var vh = slice_cols(v, h * head_dim, head_dim);
    Var scores = add_constant(scale(matmul_nt(qh, kh), inv_scale), key_bias);
    Var probs = softmax(scores);
    out.weights.push_back(probs.value());
    heads.push_back(matmul(probs, vh));
  }
  Var merged = n_heads == 1 ? heads.front() : concat(heads, 1);
  out.output = linear(merged, w(p.wo), w(p.bo));
  return out;
}

Var dropout(Var x, double rate, const ForwardContext& ctx) {
  if (!ctx.training || rate <= 0.0 || ctx.rng == nullptr) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*ctx.rng) ? 1.0 / (1.0 - rate) : 0.0;
  return hadamard(x, x.tape()->constant(std::move(mask)));
}

BlockOutput transformer_block(Tape& tape, const ParameterStore& store, Var x, const Matrix& key_bias,
                              int n_heads, const BlockParams& p, double dropout_rate, const ForwardContext& ctx) {
  auto w = [&](ParamRef r) { return tape.param(store[r]); };
  AttentionOutput attn = multi_head_attention(tape, store, x, key_bias, n_heads, p.attn);
  Var h1 = layernorm(add(x, dropout(attn.output, dropout_rate, ctx)), w(p.ln1_gain), w(p.ln1_bias));
  Var ff = linear(gelu(linear(h1, w(p.ff1_w), w(p.ff1_b))), w(p.ff2_w), w(p.ff2_b));
  Var h2 = layernorm(add(h1, dropout(ff, dropout_rate, ctx)), w(p.ln2_gain), w(p.ln2_bias));
  return {h2, std::move(attn.weights)};
}

Encoder::Encoder(const EncoderConfig& cfg, ParameterStore& store, const std::string& prefix,
                 std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg_.validate();
  token_emb_ = add_weight(store, prefix + ".emb.token", cfg_.vocab_size, cfg_.d_model, rng);
  segment_emb_ = add_weight(store, prefix + ".emb.segment", 2, cfg_.d_model, rng);
  position_emb_ = add_weight(store, prefix + ".emb.position", cfg_.max_seq_len, cfg_.d_model, rng);
  emb_ln_gain_ = add_ones(store, prefix + ".emb.ln.gain", cfg_.d_model);
  emb_ln_bias_ = add_zeros(store, prefix + ".emb.ln.bias", cfg_.d_model);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    blocks_.push_back(register_block(store, prefix + ".layer" + std::to_string(l), cfg_.d_model, cfg_.d_ff, rng));
  }
}

EncoderOutput Encoder::encode(Tape& tape, const ParameterStore& store, const AssembledSequence& seq,
                              int answer_index, bool full_depth, const ForwardContext& ctx) const {
  const auto n = seq.size();
  if (n == 0) throw LengthError("cannot encode an empty sequence");
  if (n > static_cast<std::size_t>(cfg_.max_seq_len)) {
    throw LengthError("sequence of " + std::to_string(n) + " tokens exceeds max_seq_len " +
                      std::to_string(cfg_.max_seq_len));
  }
  if (seq.segment_ids.size() != n || seq.position_ids.size() != n || seq.attention_mask.size() != n) {
    throw DimensionError("assembled sequence fields differ in length");
  }
  auto w = [&](ParamRef r) { return tape.param(store[r]); };

  Var emb = add(embedding_lookup(w(token_emb_), seq.token_ids), embedding_lookup(w(segment_emb_), seq.segment_ids));
  if (cfg_.use_positional) emb = add(emb, embedding_lookup(w(position_emb_), seq.position_ids));
  Var h = dropout(layernorm(emb, w(emb_ln_gain_), w(emb_ln_bias_)), cfg_.dropout, ctx);

  Matrix key_bias(1, static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) key_bias(0, static_cast<Index>(i)) = seq.attention_mask[i] ? 0.0 : kMaskedLogit;

  EncoderOutput out;
  out.hidden.push_back(h);
  const int depth = full_depth ? cfg_.n_layers : aggregate_layer();
  for (int l = 0; l < depth; ++l) {
    BlockOutput b = transformer_block(tape, store, h, key_bias, cfg_.n_heads, blocks_[static_cast<std::size_t>(l)],
                                      cfg_.dropout, ctx);
    h = b.output;
    out.hidden.push_back(h);
    out.attention.push_back(std::move(b.attention));
  }
  out.encoding = {slice_rows(out.hidden[static_cast<std::size_t>(aggregate_layer())], 0, 1), seq.stream,
                  answer_index};
  return out;
}

ParameterStore init_params(const EncoderConfig& cfg, std::uint64_t seed) {
  ParameterStore store;
  std::mt19937_64 rng(seed);
  Encoder enc(cfg, store, "encoder", rng);
  return store;
}

}  // namespace mmft
