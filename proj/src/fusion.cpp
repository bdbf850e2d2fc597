#include "mmft/fusion.hpp"

namespace mmft {

std::string_view to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::Simple: return "sf";
    case FusionKind::Mmft: return "mmft";
    case FusionKind::GatedConcat: return "gated-i";
    case FusionKind::GatedProduct: return "gated-ii";
    case FusionKind::GatedMixed: return "gated-iii";
  }
  return "?";
}

FusionKind fusion_from_string(std::string_view name) {
  if (name == "sf") return FusionKind::Simple;
  if (name == "mmft") return FusionKind::Mmft;
  if (name == "gated-i") return FusionKind::GatedConcat;
  if (name == "gated-ii") return FusionKind::GatedProduct;
  if (name == "gated-iii") return FusionKind::GatedMixed;
  throw ConfigError("unknown fusion kind '" + std::string(name) + "'");
}

namespace {

void check_sources(std::span<const ModalityEncoding> sources) {
  if (sources.empty()) throw DimensionError("fusion needs at least one source");
  for (const auto& s : sources) {
    if (s.vector.shape() != sources.front().vector.shape()) {
      throw DimensionError("fusion sources differ in shape: " + sources.front().vector.shape().str() + " and " +
                           s.vector.shape().str());
    }
    if (s.answer_index != sources.front().answer_index) {
      throw std::invalid_argument("fusion sources belong to different answer choices");
    }
  }
}

std::vector<Var> vectors_of(std::span<const ModalityEncoding> sources) {
  std::vector<Var> out;
  for (const auto& s : sources) out.push_back(s.vector);
  return out;
}

std::string label_of(Stream s) {
  switch (s) {
    case Stream::Q: return "Q";
    case Stream::V: return "V";
    case Stream::S: return "S";
    case Stream::Single: return "SINGLE";
  }
  return "?";
}

}  // namespace

Var simple_fusion(std::span<const Var> sources) {
  if (sources.empty()) throw DimensionError("fusion needs at least one source");
  Var out = sources.front();
  for (std::size_t i = 1; i < sources.size(); ++i) out = hadamard(out, sources[i]);
  return out;
}

FusedRepresentation simple_fusion(std::span<const ModalityEncoding> sources) {
  check_sources(sources);
  auto vecs = vectors_of(sources);
  return {simple_fusion(vecs), sources.front().answer_index, FusionKind::Simple};
}

// ---------------------------------------------------------------------------

void MmftConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1) throw ConfigError("fusion dimensions must be positive");
  if (d_model % n_heads != 0) {
    throw ConfigError("fusion d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
}

Matrix average_heads(const std::vector<Matrix>& heads) {
  if (heads.empty()) return {};
  Matrix avg = Matrix::Zero(heads.front().rows(), heads.front().cols());
  for (const auto& h : heads) avg += h;
  return avg / static_cast<Scalar>(heads.size());
}

MmftFusion::MmftFusion(const MmftConfig& cfg, ParameterStore& store, const std::string& prefix,
                       std::mt19937_64& rng)
    : cfg_(cfg) {
  cfg_.validate();
  fuse_vector_ = store.add(prefix + ".fuse", Matrix::Zero(1, cfg_.d_model)).index();
  if (cfg_.modality_embeddings) {
    modality_emb_ = store.add(prefix + ".modality_emb", truncated_normal(4, cfg_.d_model, 0.02, rng)).index();
  }
  for (int l = 0; l < cfg_.n_layers; ++l) {
    blocks_.push_back(register_block(store, prefix + ".layer" + std::to_string(l), cfg_.d_model, cfg_.d_ff, rng));
  }
}

MmftOutput MmftFusion::fuse(Tape& tape, const ParameterStore& store, std::span<const ModalityEncoding> sources,
                            const ForwardContext& ctx) const {
  check_sources(sources);
  if (sources.front().vector.cols() != cfg_.d_model) {
    throw DimensionError("fusion expects width " + std::to_string(cfg_.d_model) + ", got " +
                         sources.front().vector.shape().str());
  }
  std::vector<Var> rows{tape.param(store[fuse_vector_])};
  MmftOutput out;
  out.attention.labels.push_back("FUSE");
  for (const auto& s : sources) {
    rows.push_back(s.vector);
    out.attention.labels.push_back(label_of(s.stream));
  }
  Var x = concat(rows, 0);
  if (cfg_.modality_embeddings) {
    std::vector<int> ids{0};
    for (const auto& s : sources) ids.push_back(1 + static_cast<int>(s.stream == Stream::Single ? Stream::Q : s.stream));
    x = add(x, embedding_lookup(tape.param(store[modality_emb_]), ids));
  }
  const Matrix key_bias = Matrix::Zero(1, x.rows());
  Var prev = x;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    BlockOutput b = transformer_block(tape, store, prev, key_bias, cfg_.n_heads, blocks_[l], 0.0, ctx);
    Var h = b.output;
    if (cfg_.use_skip && l > 0) h = add(h, prev);
    out.attention.head_average.push_back(average_heads(b.attention));
    out.attention.per_head.push_back(std::move(b.attention));
    prev = h;
  }
  out.attention.answer_index = sources.front().answer_index;
  out.fused = {slice_rows(prev, 0, 1), sources.front().answer_index, FusionKind::Mmft};
  return out;
}

// ---------------------------------------------------------------------------

GatedFusion::GatedFusion(FusionKind variant, int d_model, int n_sources, ParameterStore& store,
                         const std::string& prefix, std::mt19937_64& rng)
    : variant_(variant), d_model_(d_model), n_sources_(n_sources) {
  if (variant != FusionKind::GatedConcat && variant != FusionKind::GatedProduct &&
      variant != FusionKind::GatedMixed) {
    throw ConfigError("GatedFusion: variant must be gated-i, gated-ii or gated-iii");
  }
  if (n_sources < 1 || d_model < 1) throw ConfigError("GatedFusion: invalid dimensions");
  const Index in = static_cast<Index>(n_sources) * d_model;
  for (int i = 0; i < n_sources; ++i) {
    const std::string p = prefix + ".gate" + std::to_string(i);
    gate_w_.push_back(store.add(p + ".w", truncated_normal(in, d_model, 0.02, rng)).index());
    gate_b_.push_back(store.add(p + ".b", Matrix::Zero(1, d_model)).index());
  }
  if (variant == FusionKind::GatedConcat) {
    merge_w_ = store.add(prefix + ".merge.w", truncated_normal(in, d_model, 0.02, rng)).index();
    merge_b_ = store.add(prefix + ".merge.b", Matrix::Zero(1, d_model)).index();
  } else if (variant == FusionKind::GatedMixed) {
    merge_w_ = store.add(prefix + ".merge.w", truncated_normal(2 * d_model, d_model, 0.02, rng)).index();
    merge_b_ = store.add(prefix + ".merge.b", Matrix::Zero(1, d_model)).index();
  }
}

FusedRepresentation GatedFusion::fuse(Tape& tape, const ParameterStore& store,
                                      std::span<const ModalityEncoding> sources) const {
  check_sources(sources);
  if (static_cast<int>(sources.size()) != n_sources_) {
    throw DimensionError("gated fusion built for " + std::to_string(n_sources_) + " sources, got " +
                         std::to_string(sources.size()));
  }
  if (sources.front().vector.cols() != d_model_) throw DimensionError("gated fusion width mismatch");
  auto vecs = vectors_of(sources);
  Var joined = concat(vecs, 1);
  std::vector<Var> gated;
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    Var gate = sigmoid(linear(joined, tape.param(store[gate_w_[i]]), tape.param(store[gate_b_[i]])));
    gated.push_back(hadamard(gate, vecs[i]));
  }
  Var out;
  switch (variant_) {
    case FusionKind::GatedConcat:
      out = linear(concat(gated, 1), tape.param(store[merge_w_]), tape.param(store[merge_b_]));
      break;
    case FusionKind::GatedProduct:
      out = simple_fusion(gated);
      break;
    default:
      out = linear(concat({simple_fusion(gated), simple_fusion(vecs)}, 1), tape.param(store[merge_w_]),
                   tape.param(store[merge_b_]));
      break;
  }
  return {out, sources.front().answer_index, variant_};
}

}  // namespace mmft
