#pragma once

#include "mmft/diffcore.hpp"
#include "mmft/parameters.hpp"
#include "mmft/textpipe.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mmft {

struct EncoderConfig {
  int d_model = 32;
  int n_heads = 4;
  int n_layers = 2;
  int d_ff = 64;
  int max_seq_len = 48;
  int vocab_size = 0;
  bool use_positional = true;
  /// k selects the k-th layer from the top (1 = last layer).
  int aggregate_layer_offset = 1;
  double dropout = 0.0;

  void validate() const;
};

/// 4 ("4th last layer") when the encoder is deep enough, otherwise 1.
int default_aggregate_offset(int n_layers);

/// Per-forward switches. Dropout only runs with training=true and an rng.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

using ParamRef = std::size_t;

struct AttentionParams {
  ParamRef wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Post-layernorm encoder block: attention, add & norm, GELU feed-forward,
/// add & norm.
struct BlockParams {
  AttentionParams attn;
  ParamRef ln1_gain, ln1_bias;
  ParamRef ff1_w, ff1_b, ff2_w, ff2_b;
  ParamRef ln2_gain, ln2_bias;
};

BlockParams register_block(ParameterStore& store, const std::string& prefix, int d_model, int d_ff,
                           std::mt19937_64& rng);

struct AttentionOutput {
  Var output;
  /// Softmax weights, one n x n matrix per head (rows: queries).
  std::vector<Matrix> weights;
};

/// Scaled dot-product attention over H heads of width d/H. `key_bias` is a
/// 1 x n row added to every score row (0 for real tokens, -1e9 for padding).
AttentionOutput multi_head_attention(Tape& tape, const ParameterStore& store, Var x, const Matrix& key_bias,
                                     int n_heads, const AttentionParams& p);

struct BlockOutput {
  Var output;
  std::vector<Matrix> attention;
};

BlockOutput transformer_block(Tape& tape, const ParameterStore& store, Var x, const Matrix& key_bias,
                              int n_heads, const BlockParams& p, double dropout = 0.0,
                              const ForwardContext& ctx = {});

/// Inverted dropout; identity outside training.
Var dropout(Var x, double rate, const ForwardContext& ctx);

/// Aggregated position-0 vector of one stream for one hypothesis.
struct ModalityEncoding {
  Var vector;  // 1 x d_model
  Stream stream = Stream::Q;
  int answer_index = 0;
};

struct EncoderOutput {
  ModalityEncoding encoding;
  /// hidden[0] is the embedding output, hidden[i] the output of block i.
  std::vector<Var> hidden;
  /// attention[i][h] is the n x n weight matrix of head h in block i+1.
  std::vector<std::vector<Matrix>> attention;
};

/// BERT-style encoder: token + segment (+ learned position) embeddings,
/// embedding layernorm, then n_layers blocks.
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, ParameterStore& store, const std::string& prefix, std::mt19937_64& rng);

  /// With full_depth=false, blocks above the aggregation layer are skipped.
  EncoderOutput encode(Tape& tape, const ParameterStore& store, const AssembledSequence& seq,
                       int answer_index = 0, bool full_depth = true, const ForwardContext& ctx = {}) const;

  const EncoderConfig& config() const { return cfg_; }
  /// 1-based index of the block whose position-0 state is aggregated.
  int aggregate_layer() const { return cfg_.n_layers - cfg_.aggregate_layer_offset + 1; }

 private:
  EncoderConfig cfg_;
  ParamRef token_emb_, segment_emb_, position_emb_, emb_ln_gain_, emb_ln_bias_;
  std::vector<BlockParams> blocks_;
};

/// Fresh encoder parameters under the prefix "encoder", deterministic per seed.
ParameterStore init_params(const EncoderConfig& cfg, std::uint64_t seed);

}  // namespace mmft
