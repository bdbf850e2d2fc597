#pragma once

#include "mmft/encoder.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmft {

enum class FusionKind { Simple, Mmft, GatedConcat, GatedProduct, GatedMixed };

std::string_view to_string(FusionKind kind);
/// Accepts sf, mmft, gated-i, gated-ii, gated-iii.
FusionKind fusion_from_string(std::string_view name);

struct FusedRepresentation {
  Var vector;  // 1 x d_model
  int answer_index = 0;
  FusionKind kind = FusionKind::Simple;
};

/// Elementwise product of all source encodings.
Var simple_fusion(std::span<const Var> sources);
FusedRepresentation simple_fusion(std::span<const ModalityEncoding> sources);

struct MmftConfig {
  int n_layers = 1;
  int n_heads = 4;
  int d_model = 32;
  int d_ff = 64;
  /// Adds the previous layer's output to the output of every layer after
  /// the first ("w/ skip").
  bool use_skip = false;
  /// Learned per-modality embeddings added to the fusion sequence. Off by
  /// default, in which case the fusion is invariant to source order.
  bool modality_embeddings = false;

  void validate() const;
};

/// Attention inside the fusion transformer for one answer choice. Rows and
/// columns follow `labels`, e.g. [FUSE, Q, V, S].
struct FusionAttentionRecord {
  std::vector<std::string> labels;
  std::vector<std::vector<Matrix>> per_head;  // [layer][head]
  std::vector<Matrix> head_average;           // [layer]
  int answer_index = 0;
};

Matrix average_heads(const std::vector<Matrix>& heads);

struct MmftOutput {
  FusedRepresentation fused;
  FusionAttentionRecord attention;
};

/// Transformer fusion over the sequence [FUSE, h_1, ..., h_n]. The [FUSE]
/// slot is a trainable vector initialized to zero; its final hidden state is
/// the fused representation.
class MmftFusion {
 public:
  MmftFusion(const MmftConfig& cfg, ParameterStore& store, const std::string& prefix, std::mt19937_64& rng);

  MmftOutput fuse(Tape& tape, const ParameterStore& store, std::span<const ModalityEncoding> sources,
                  const ForwardContext& ctx = {}) const;

  const MmftConfig& config() const { return cfg_; }
  ParamRef fuse_vector() const { return fuse_vector_; }

 private:
  MmftConfig cfg_;
  ParamRef fuse_vector_;
  ParamRef modality_emb_ = 0;
  std::vector<BlockParams> blocks_;
};

/// Gated fusion: every source is scaled by g_i = sigmoid(W_i [h_1;...;h_n] + b_i)
/// and the gated vectors are merged by concatenation + linear (GatedConcat),
/// product (GatedProduct) or linear over [product; simple fusion] (GatedMixed).
class GatedFusion {
 public:
  GatedFusion(FusionKind variant, int d_model, int n_sources, ParameterStore& store, const std::string& prefix,
              std::mt19937_64& rng);

  FusedRepresentation fuse(Tape& tape, const ParameterStore& store,
                           std::span<const ModalityEncoding> sources) const;

  FusionKind variant() const { return variant_; }
  const std::vector<ParamRef>& gate_weights() const { return gate_w_; }
  const std::vector<ParamRef>& gate_biases() const { return gate_b_; }
  ParamRef merge_weight() const { return merge_w_; }
  ParamRef merge_bias() const { return merge_b_; }

 private:
  FusionKind variant_;
  int d_model_;
  int n_sources_;
  std::vector<ParamRef> gate_w_, gate_b_;
  ParamRef merge_w_ = 0, merge_b_ = 0;
};

}  // namespace mmft
