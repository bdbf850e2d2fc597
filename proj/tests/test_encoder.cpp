#include "mmft/encoder.hpp"
#include "mmft/gradcheck.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mmft;
using mmft::testing::random_matrix;

namespace {

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 4;
  cfg.n_layers = 2;
  cfg.d_ff = 32;
  cfg.vocab_size = 50;
  cfg.max_seq_len = 32;
  return cfg;
}

AssembledSequence sequence(std::vector<int> tokens, int first_answer_segment = 3) {
  AssembledSequence s;
  s.token_ids = std::move(tokens);
  for (std::size_t i = 0; i < s.token_ids.size(); ++i) {
    s.segment_ids.push_back(static_cast<int>(i) >= first_answer_segment ? 1 : 0);
    s.position_ids.push_back(static_cast<int>(i));
    s.attention_mask.push_back(1);
  }
  return s;
}

// Straight loops over the formula, no shared code with the library.
Matrix reference_attention(const Matrix& x, const Matrix& key_bias, int heads, const ParameterStore& store,
                           const AttentionParams& p) {
  const Index n = x.rows(), d = x.cols(), hd = d / heads;
  auto proj = [&](ParamRef w, ParamRef b) {
    Matrix out(n, d);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < d; ++j) {
        double acc = store[b].value(0, j);
        for (Index k = 0; k < d; ++k) acc += x(i, k) * store[w].value(k, j);
        out(i, j) = acc;
      }
    return out;
  };
  Matrix q = proj(p.wq, p.bq), k = proj(p.wk, p.bk), v = proj(p.wv, p.bv);
  Matrix merged = Matrix::Zero(n, d);
  for (int h = 0; h < heads; ++h) {
    for (Index i = 0; i < n; ++i) {
      std::vector<double> s(static_cast<std::size_t>(n));
      double mx = -1e300;
      for (Index j = 0; j < n; ++j) {
        double acc = 0;
        for (Index c = 0; c < hd; ++c) acc += q(i, h * hd + c) * k(j, h * hd + c);
        s[static_cast<std::size_t>(j)] = acc / std::sqrt(static_cast<double>(hd)) + key_bias(0, j);
        mx = std::max(mx, s[static_cast<std::size_t>(j)]);
      }
      double z = 0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (Index c = 0; c < hd; ++c) {
        double acc = 0;
        for (Index j = 0; j < n; ++j) acc += s[static_cast<std::size_t>(j)] / z * v(j, h * hd + c);
        merged(i, h * hd + c) = acc;
      }
    }
  }
  Matrix out(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) {
      double acc = store[p.bo].value(0, j);
      for (Index k = 0; k < d; ++k) acc += merged(i, k) * store[p.wo].value(k, j);
      out(i, j) = acc;
    }
  return out;
}

}  // namespace

TEST(Encoder, ParameterCountMatchesClosedForm) {
  const EncoderConfig cfg = small_config();
  const ParameterStore store = init_params(cfg, 1);
  const std::size_t d = 16, f = 32, L = 2, V = 50, P = 32;
  const std::size_t embeddings = V * d + 2 * d + P * d + 2 * d;
  const std::size_t block = 4 * (d * d + d) + 2 * d + (d * f + f) + (f * d + d) + 2 * d;
  EXPECT_EQ(store.scalar_count(), embeddings + L * block);
  EXPECT_EQ(store.scalar_count(), 5824u);
}

TEST(Encoder, SeedsAreDeterministic) {
  const auto cfg = small_config();
  const ParameterStore a = init_params(cfg, 3), b = init_params(cfg, 3), c = init_params(cfg, 4);
  bool any_diff = false;
  for (const auto& p : a) {
    EXPECT_EQ(p->value, b.at(p->name()).value) << p->name();
    if (p->value != c.at(p->name()).value) any_diff = true;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Encoder, InitialisationStatistics) {
  auto cfg = small_config();
  cfg.vocab_size = 400;
  const ParameterStore store = init_params(cfg, 9);
  const Matrix& tok = store.at("encoder.emb.token").value;
  const double mean = tok.mean();
  const double sd = std::sqrt((tok.array() - mean).square().mean());
  EXPECT_NEAR(mean, 0.0, 0.002);
  EXPECT_NEAR(sd, 0.02 * 0.88, 0.002);  // a normal truncated at 2 sigma keeps ~0.88 of its sd
  EXPECT_LE(tok.cwiseAbs().maxCoeff(), 0.04 + 1e-15);
  EXPECT_EQ(store.at("encoder.layer0.ln1.gain").value, Matrix::Ones(1, 16));
  EXPECT_EQ(store.at("encoder.layer1.attn.bq").value, Matrix::Zero(1, 16));
}

TEST(Encoder, ConfigValidation) {
  auto cfg = small_config();
  cfg.n_heads = 5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.aggregate_layer_offset = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(default_aggregate_offset(12), 4);
  EXPECT_EQ(default_aggregate_offset(2), 1);
}

TEST(Attention, MatchesBruteForceReference) {
  std::mt19937_64 rng(5);
  ParameterStore store;
  BlockParams p = register_block(store, "b", 16, 32, rng);
  for (auto& param : store) param->value = random_matrix(param->value.rows(), param->value.cols(), rng, 0.3);
  const Matrix x = random_matrix(7, 16, rng);
  Matrix bias = Matrix::Zero(1, 7);
  bias(0, 5) = -1e9;
  Tape tape;
  AttentionOutput out = multi_head_attention(tape, store, tape.constant(x), bias, 4, p.attn);
  const Matrix ref = reference_attention(x, bias, 4, store, p.attn);
  EXPECT_LT((out.output.value() - ref).cwiseAbs().maxCoeff(), 1e-10);
  ASSERT_EQ(out.weights.size(), 4u);
  for (const auto& w : out.weights) {
    EXPECT_LT((w.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_LT(w.col(5).cwiseAbs().maxCoeff(), 1e-300);
  }
}

TEST(Attention, RejectsIndivisibleHeads) {
  std::mt19937_64 rng(5);
  ParameterStore store;
  BlockParams p = register_block(store, "b", 6, 8, rng);
  Tape tape;
  EXPECT_THROW(multi_head_attention(tape, store, tape.constant(Matrix::Zero(2, 6)), Matrix::Zero(1, 2), 4, p.attn),
               ConfigError);
}

TEST(Encoder, PermutationEquivariantWithoutPositions) {
  auto cfg = small_config();
  cfg.use_positional = false;
  ParameterStore store;
  std::mt19937_64 rng(11);
  Encoder enc(cfg, store, "e", rng);
  const std::vector<int> tokens{2, 7, 9, 3, 12, 13};
  const std::vector<std::size_t> perm{0, 2, 1, 3, 5, 4};  // keeps segments aligned
  AssembledSequence a = sequence(tokens), b = sequence(tokens);
  for (std::size_t i = 0; i < perm.size(); ++i) b.token_ids[i] = tokens[perm[i]];
  Tape tape;
  const Matrix ha = enc.encode(tape, store, a).hidden.back().value();
  const Matrix hb = enc.encode(tape, store, b).hidden.back().value();
  for (std::size_t i = 0; i < perm.size(); ++i) {
    EXPECT_LT((hb.row(static_cast<Index>(i)) - ha.row(static_cast<Index>(perm[i]))).cwiseAbs().maxCoeff(), 1e-10);
  }

  cfg.use_positional = true;
  ParameterStore pstore;
  std::mt19937_64 rng2(11);
  Encoder penc(cfg, pstore, "e", rng2);
  const Matrix pa = penc.encode(tape, pstore, a).hidden.back().value();
  const Matrix pb = penc.encode(tape, pstore, b).hidden.back().value();
  EXPECT_GT((pb.row(1) - pa.row(2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Encoder, PaddingDoesNotChangeRealPositions) {
  const auto cfg = small_config();
  ParameterStore store;
  std::mt19937_64 rng(12);
  Encoder enc(cfg, store, "e", rng);
  AssembledSequence a = sequence({2, 8, 9, 3, 10});
  AssembledSequence padded = a;
  for (int i = 0; i < 4; ++i) {
    padded.token_ids.push_back(token_id::kPad);
    padded.segment_ids.push_back(1);
    padded.position_ids.push_back(static_cast<int>(padded.position_ids.size()));
    padded.attention_mask.push_back(0);
  }
  Tape tape;
  const Matrix h = enc.encode(tape, store, a).hidden.back().value();
  const Matrix hp = enc.encode(tape, store, padded).hidden.back().value();
  EXPECT_LT((hp.topRows(5) - h).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encoder, AggregateLayerSelection) {
  auto cfg = small_config();
  cfg.n_layers = 3;
  cfg.aggregate_layer_offset = 2;
  ParameterStore store;
  std::mt19937_64 rng(13);
  Encoder enc(cfg, store, "e", rng);
  EXPECT_EQ(enc.aggregate_layer(), 2);
  AssembledSequence s = sequence({2, 5, 6, 3, 7});
  s.stream = Stream::V;
  Tape tape;
  EncoderOutput full = enc.encode(tape, store, s, 3, true);
  EncoderOutput cut = enc.encode(tape, store, s, 3, false);
  ASSERT_EQ(full.hidden.size(), 4u);
  ASSERT_EQ(cut.hidden.size(), 3u);
  EXPECT_EQ(full.encoding.vector.value(), full.hidden[2].value().row(0));
  EXPECT_EQ(cut.encoding.vector.value(), full.encoding.vector.value());
  EXPECT_EQ(full.encoding.stream, Stream::V);
  EXPECT_EQ(full.encoding.answer_index, 3);
  EXPECT_EQ(full.attention.size(), 3u);
  EXPECT_EQ(full.attention[0].size(), 4u);
}

TEST(Encoder, RejectsOverlongSequence) {
  auto cfg = small_config();
  cfg.max_seq_len = 4;
  ParameterStore store;
  std::mt19937_64 rng(1);
  Encoder enc(cfg, store, "e", rng);
  Tape tape;
  EXPECT_THROW(enc.encode(tape, store, sequence({2, 5, 6, 3, 7})), LengthError);
}

TEST(Encoder, GradientsMatchFiniteDifferences) {
  EncoderConfig cfg;
  cfg.d_model = 4;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.d_ff = 6;
  cfg.vocab_size = 8;
  cfg.max_seq_len = 5;
  ParameterStore store;
  std::mt19937_64 rng(21);
  Encoder enc(cfg, store, "e", rng);
  for (auto& p : store) p->value += random_matrix(p->value.rows(), p->value.cols(), rng, 0.3);
  const AssembledSequence s = sequence({2, 5, 6, 3, 7});
  const Matrix w = random_matrix(1, 4, rng);
  auto report = check_parameter_gradients(store, [&](Tape& t) {
    Var e = enc.encode(t, store, s).encoding.vector;
    return sum(hadamard(e, t.constant(w)));
  });
  EXPECT_TRUE(report.passed(1e-4)) << report.worst_parameter << " " << report.max_rel_error;
}

TEST(Dropout, IdentityAtEvalAndScaledInTraining) {
  Tape tape;
  Var x = tape.constant(Matrix::Ones(10, 100));
  EXPECT_EQ(dropout(x, 0.5, {}).value(), x.value());
  std::mt19937_64 rng(3);
  Var y = dropout(x, 0.5, {true, &rng});
  for (Index i = 0; i < y.value().size(); ++i) {
    const double v = y.value().data()[i];
    EXPECT_TRUE(v == 0.0 || v == 2.0);
  }
  EXPECT_NEAR(y.value().mean(), 1.0, 0.1);
}
