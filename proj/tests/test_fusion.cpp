#include "mmft/fusion.hpp"
#include "mmft/gradcheck.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mmft;
using mmft::testing::random_matrix;

namespace {

std::vector<ModalityEncoding> encodings(Tape& tape, const std::vector<Matrix>& values, int answer = 0) {
  const Stream order[] = {Stream::Q, Stream::V, Stream::S};
  std::vector<ModalityEncoding> out;
  for (std::size_t i = 0; i < values.size(); ++i) out.push_back({tape.constant(values[i]), order[i % 3], answer});
  return out;
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(FusionKind, RoundTripsNames) {
  for (auto k : {FusionKind::Simple, FusionKind::Mmft, FusionKind::GatedConcat, FusionKind::GatedProduct,
                 FusionKind::GatedMixed}) {
    EXPECT_EQ(fusion_from_string(to_string(k)), k);
  }
  EXPECT_THROW(fusion_from_string("concat"), ConfigError);
}

TEST(SimpleFusion, MatchesLoopProduct) {
  std::mt19937_64 rng(1);
  std::vector<Matrix> h{random_matrix(1, 8, rng), random_matrix(1, 8, rng), random_matrix(1, 8, rng)};
  Tape tape;
  FusedRepresentation f = simple_fusion(encodings(tape, h, 2));
  for (Index k = 0; k < 8; ++k) EXPECT_EQ(f.vector.value()(0, k), h[0](0, k) * h[1](0, k) * h[2](0, k));
  EXPECT_EQ(f.answer_index, 2);
  EXPECT_EQ(f.kind, FusionKind::Simple);

  auto one = encodings(tape, {h[0]});
  EXPECT_EQ(simple_fusion(one).vector.value(), h[0]);
}

TEST(SimpleFusion, RejectsMismatchedSources) {
  std::mt19937_64 rng(1);
  Tape tape;
  auto bad = encodings(tape, {random_matrix(1, 8, rng), random_matrix(1, 6, rng)});
  EXPECT_THROW(simple_fusion(bad), DimensionError);
  EXPECT_THROW(simple_fusion(std::span<const ModalityEncoding>{}), DimensionError);
  auto mixed = encodings(tape, {random_matrix(1, 8, rng), random_matrix(1, 8, rng)});
  mixed[1].answer_index = 1;
  EXPECT_THROW(simple_fusion(mixed), std::invalid_argument);
}

TEST(Mmft, FuseVectorStartsAtZeroAndRecordsAttention) {
  MmftConfig cfg{.n_layers = 2, .n_heads = 4, .d_model = 8, .d_ff = 16};
  ParameterStore store;
  std::mt19937_64 rng(2);
  MmftFusion fusion(cfg, store, "f", rng);
  EXPECT_EQ(store[fusion.fuse_vector()].value, Matrix::Zero(1, 8));
  Tape tape;
  auto src = encodings(tape, {random_matrix(1, 8, rng), random_matrix(1, 8, rng), random_matrix(1, 8, rng)}, 4);
  MmftOutput out = fusion.fuse(tape, store, src);
  EXPECT_EQ(out.attention.labels, (std::vector<std::string>{"FUSE", "Q", "V", "S"}));
  ASSERT_EQ(out.attention.per_head.size(), 2u);
  ASSERT_EQ(out.attention.per_head[0].size(), 4u);
  EXPECT_EQ(out.attention.answer_index, 4);
  EXPECT_EQ(out.fused.answer_index, 4);
  for (std::size_t l = 0; l < 2; ++l) {
    Matrix mean = Matrix::Zero(4, 4);
    for (const auto& h : out.attention.per_head[l]) mean += h / 4.0;
    EXPECT_LT((out.attention.head_average[l] - mean).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((out.attention.head_average[l].rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  }
}

TEST(Mmft, InvariantToSourceOrder) {
  std::mt19937_64 rng(3);
  for (bool modality : {false, true}) {
    MmftConfig cfg{.n_layers = 2, .n_heads = 2, .d_model = 8, .d_ff = 16, .use_skip = true,
                   .modality_embeddings = modality};
    ParameterStore store;
    MmftFusion fusion(cfg, store, "f", rng);
    store[fusion.fuse_vector()].value = random_matrix(1, 8, rng);
    Tape tape;
    auto src = encodings(tape, {random_matrix(1, 8, rng), random_matrix(1, 8, rng), random_matrix(1, 8, rng)});
    std::vector<ModalityEncoding> rev(src.rbegin(), src.rend());
    const Matrix a = fusion.fuse(tape, store, src).fused.vector.value();
    const Matrix b = fusion.fuse(tape, store, rev).fused.vector.value();
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12) << modality;

    // swapping which stream a vector claims to be only matters with modality embeddings
    auto relabeled = src;
    std::swap(relabeled[0].stream, relabeled[1].stream);
    const Matrix c = fusion.fuse(tape, store, relabeled).fused.vector.value();
    if (modality) {
      EXPECT_GT((a - c).cwiseAbs().maxCoeff(), 1e-8);
    } else {
      EXPECT_LT((a - c).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Mmft, SkipConnectionAddsPreviousLayer) {
  MmftConfig plain{.n_layers = 2, .n_heads = 2, .d_model = 8, .d_ff = 16};
  MmftConfig skip = plain;
  skip.use_skip = true;
  ParameterStore s1, s2;
  std::mt19937_64 r1(4), r2(4), rng(5);
  MmftFusion f1(plain, s1, "f", r1), f2(skip, s2, "f", r2);
  Tape tape;
  auto src = encodings(tape, {random_matrix(1, 8, rng), random_matrix(1, 8, rng)});
  const Matrix a = f1.fuse(tape, s1, src).fused.vector.value();
  const Matrix b = f2.fuse(tape, s2, src).fused.vector.value();
  // single-layer output for the previous-layer term
  MmftConfig one = plain;
  one.n_layers = 1;
  ParameterStore s3;
  std::mt19937_64 r3(4);
  MmftFusion f3(one, s3, "f", r3);
  const Matrix first = f3.fuse(tape, s3, src).fused.vector.value();
  EXPECT_LT((b - a - first).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mmft, GradientsMatchFiniteDifferences) {
  MmftConfig cfg{.n_layers = 2, .n_heads = 2, .d_model = 4, .d_ff = 6, .use_skip = true, .modality_embeddings = true};
  ParameterStore store;
  std::mt19937_64 rng(6);
  MmftFusion fusion(cfg, store, "f", rng);
  for (auto& p : store) p->value += random_matrix(p->value.rows(), p->value.cols(), rng, 0.3);
  const std::vector<Matrix> h{random_matrix(1, 4, rng), random_matrix(1, 4, rng), random_matrix(1, 4, rng)};
  const Matrix w = random_matrix(1, 4, rng);
  auto report = check_parameter_gradients(store, [&](Tape& t) {
    auto src = encodings(t, h);
    return sum(hadamard(fusion.fuse(t, store, src).fused.vector, t.constant(w)));
  });
  EXPECT_TRUE(report.passed(1e-4)) << report.worst_parameter << " " << report.max_rel_error;
  EXPECT_GT(report.elements_checked, 0u);
}

TEST(Mmft, GradientReachesEverySource) {
  MmftConfig cfg{.n_layers = 1, .n_heads = 2, .d_model = 8, .d_ff = 16};
  ParameterStore store;
  std::mt19937_64 rng(7);
  MmftFusion fusion(cfg, store, "f", rng);
  Tape tape;
  std::vector<ModalityEncoding> src;
  const Stream streams[] = {Stream::Q, Stream::V, Stream::S};
  for (Stream s : streams) src.push_back({tape.variable(random_matrix(1, 8, rng)), s, 0});
  Var out = sum(fusion.fuse(tape, store, src).fused.vector);
  tape.backward(out);
  for (const auto& s : src) EXPECT_GT(s.vector.grad().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gated, CompositionalOracle) {
  std::mt19937_64 rng(8);
  const int d = 4;
  const std::vector<Matrix> h{random_matrix(1, d, rng), random_matrix(1, d, rng), random_matrix(1, d, rng)};
  Matrix joined(1, 3 * d);
  joined << h[0], h[1], h[2];
  for (auto kind : {FusionKind::GatedConcat, FusionKind::GatedProduct, FusionKind::GatedMixed}) {
    ParameterStore store;
    GatedFusion g(kind, d, 3, store, "g", rng);
    for (auto& p : store) p->value = random_matrix(p->value.rows(), p->value.cols(), rng, 0.5);
    std::vector<Matrix> gated;
    for (std::size_t i = 0; i < 3; ++i) {
      const Matrix& W = store[g.gate_weights()[i]].value;
      const Matrix& b = store[g.gate_biases()[i]].value;
      Matrix gi(1, d);
      for (int k = 0; k < d; ++k) {
        double z = b(0, k);
        for (int m = 0; m < 3 * d; ++m) z += joined(0, m) * W(m, k);
        gi(0, k) = sigmoid_ref(z) * h[i](0, k);
      }
      gated.push_back(gi);
    }
    Matrix expected(1, d);
    auto affine = [&](const Matrix& in) {
      Matrix out(1, d);
      for (int k = 0; k < d; ++k) {
        double z = store[g.merge_bias()].value(0, k);
        for (Index m = 0; m < in.cols(); ++m) z += in(0, m) * store[g.merge_weight()].value(m, k);
        out(0, k) = z;
      }
      return out;
    };
    Matrix prod = gated[0].cwiseProduct(gated[1]).cwiseProduct(gated[2]);
    if (kind == FusionKind::GatedConcat) {
      Matrix cat(1, 3 * d);
      cat << gated[0], gated[1], gated[2];
      expected = affine(cat);
    } else if (kind == FusionKind::GatedProduct) {
      expected = prod;
    } else {
      Matrix cat(1, 2 * d);
      cat << prod, h[0].cwiseProduct(h[1]).cwiseProduct(h[2]);
      expected = affine(cat);
    }
    Tape tape;
    auto out = g.fuse(tape, store, encodings(tape, h));
    EXPECT_LT((out.vector.value() - expected).cwiseAbs().maxCoeff(), 1e-12) << to_string(kind);
    EXPECT_EQ(out.kind, kind);
  }
}

TEST(Gated, SaturatedGatesRecoverLimits) {
  std::mt19937_64 rng(9);
  const std::vector<Matrix> h{random_matrix(1, 6, rng), random_matrix(1, 6, rng)};
  ParameterStore store;
  GatedFusion g(FusionKind::GatedProduct, 6, 2, store, "g", rng);
  auto run = [&] {
    Tape tape;
    return g.fuse(tape, store, encodings(tape, h)).vector.value();
  };
  const Matrix sf = h[0].cwiseProduct(h[1]);
  for (auto b : g.gate_biases()) store[b].value.setConstant(60.0);
  EXPECT_LT((run() - sf).cwiseAbs().maxCoeff(), 1e-12);
  for (auto b : g.gate_biases()) store[b].value.setConstant(-60.0);
  EXPECT_LT(run().cwiseAbs().maxCoeff(), 1e-20);
}

TEST(Gated, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(10);
  const std::vector<Matrix> h{random_matrix(1, 3, rng), random_matrix(1, 3, rng), random_matrix(1, 3, rng)};
  for (auto kind : {FusionKind::GatedConcat, FusionKind::GatedProduct, FusionKind::GatedMixed}) {
    ParameterStore store;
    GatedFusion g(kind, 3, 3, store, "g", rng);
    for (auto& p : store) p->value = random_matrix(p->value.rows(), p->value.cols(), rng, 0.5);
    const Matrix w = random_matrix(1, 3, rng);
    auto report = check_parameter_gradients(store, [&](Tape& t) {
      return sum(hadamard(g.fuse(t, store, encodings(t, h)).vector, t.constant(w)));
    });
    EXPECT_TRUE(report.passed(1e-5)) << to_string(kind) << " " << report.worst_parameter;
  }
}

TEST(Gated, RejectsWrongSourceCountAndVariant) {
  std::mt19937_64 rng(11);
  ParameterStore store;
  GatedFusion g(FusionKind::GatedConcat, 4, 3, store, "g", rng);
  Tape tape;
  auto two = encodings(tape, {random_matrix(1, 4, rng), random_matrix(1, 4, rng)});
  EXPECT_THROW(g.fuse(tape, store, two), DimensionError);
  ParameterStore other;
  EXPECT_THROW(GatedFusion(FusionKind::Mmft, 4, 3, other, "x", rng), ConfigError);
}
