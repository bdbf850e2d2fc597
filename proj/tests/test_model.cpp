#include "mmft/gradcheck.hpp"
#include "mmft/model.hpp"
#include "mmft/synthdata.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mmft;

namespace {

struct Fixture {
  SynthCorpus corpus;
  Vocabulary vocab;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    SynthSpec spec;
    spec.n_examples = 20;
    Fixture out{generate(spec), {}};
    out.vocab = build_vocab(out.corpus.examples);
    return out;
  }();
  return f;
}

ModelConfig tiny(int d = 8) {
  ModelConfig cfg;
  cfg.encoder.d_model = d;
  cfg.encoder.n_heads = 2;
  cfg.encoder.n_layers = 2;
  cfg.encoder.d_ff = 2 * d;
  cfg.encoder.max_seq_len = 48;
  cfg.mmft.d_model = d;
  cfg.mmft.n_heads = 2;
  cfg.mmft.d_ff = 2 * d;
  return cfg;
}

void zero_classifiers(MmftBert& m) {
  for (auto& p : m.params()) {
    if (p->name().starts_with("head.")) p->value.setZero();
  }
}

}  // namespace

TEST(Model, RegistersIndependentStreams) {
  MmftBert m(tiny(), fixture().vocab, 1);
  const auto& ps = m.params();
  EXPECT_NE(ps.find("encoder.q.emb.token"), nullptr);
  EXPECT_NE(ps.find("encoder.v.emb.token"), nullptr);
  EXPECT_NE(ps.find("encoder.s.emb.token"), nullptr);
  EXPECT_NE(ps.find("fusion.mmft.fuse"), nullptr);
  EXPECT_NE(ps.find("head.joint.w"), nullptr);
  EXPECT_NE(ps.at("encoder.q.emb.token").value, ps.at("encoder.v.emb.token").value);
  EXPECT_EQ(m.config().encoder.vocab_size, fixture().vocab.size());
}

TEST(Model, UniformHeadsGiveAnalyticLoss) {
  const auto& ex = fixture().corpus.examples.front();
  for (bool single : {false, true}) {
    ModelConfig cfg = tiny();
    cfg.objective.single_loss = single;
    MmftBert m(cfg, fixture().vocab, 2);
    zero_classifiers(m);
    Tape tape;
    auto f = m.forward(tape, ex);
    EXPECT_NEAR(f.loss->values.total, (single ? 1 : 4) * std::log(5.0), 1e-12);
  }
}

TEST(Model, ForwardExposesStreamsAndAttention) {
  MmftBert m(tiny(), fixture().vocab, 3);
  Tape tape;
  auto f = m.forward(tape, fixture().corpus.examples[1]);
  ASSERT_TRUE(f.q && f.v && f.s);
  EXPECT_EQ(f.attention.size(), 5u);
  EXPECT_EQ(f.attention[2].answer_index, 2);
  EXPECT_EQ(f.encodings.at(Stream::V).size(), 5u);
  EXPECT_EQ(f.joint.logits.shape(), (Shape{1, 5}));
  const auto& lb = f.loss->values;
  EXPECT_EQ(lb.total, ((lb.q + lb.vid) + lb.sub) + lb.joint);
}

TEST(Model, SingleLossLeavesStreamHeadsWithoutGradient) {
  ModelConfig cfg = tiny();
  cfg.objective.single_loss = true;
  MmftBert m(cfg, fixture().vocab, 4);
  Tape tape;
  auto f = m.forward(tape, fixture().corpus.examples[0]);
  tape.backward(f.loss->total);
  tape.accumulate_parameter_grads(m.params());
  for (const auto& p : m.params()) {
    const double g = p->grad.cwiseAbs().maxCoeff();
    if (p->name().starts_with("head.q") || p->name().starts_with("head.v") || p->name().starts_with("head.s")) {
      EXPECT_EQ(g, 0.0) << p->name();
    }
  }
  EXPECT_GT(m.params().at("encoder.v.layer0.attn.wq").grad.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(m.params().at("head.joint.w").grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Model, PredictionIgnoresStreamHeads) {
  MmftBert m(tiny(), fixture().vocab, 5);
  const auto& ex = fixture().corpus.examples[3];
  const Matrix before = m.joint_logits(ex);
  for (auto& p : m.params()) {
    if (p->name().starts_with("head.") && !p->name().starts_with("head.joint")) p->value.setRandom();
  }
  EXPECT_EQ(m.joint_logits(ex), before);
}

TEST(Model, VariantsBuildAndRun) {
  const auto& ex = fixture().corpus.examples[4];
  for (auto fusion : {FusionKind::Simple, FusionKind::Mmft, FusionKind::GatedConcat, FusionKind::GatedProduct,
                      FusionKind::GatedMixed}) {
    ModelConfig cfg = tiny();
    cfg.fusion = fusion;
    MmftBert m(cfg, fixture().vocab, 6);
    Tape tape;
    auto f = m.forward(tape, ex);
    EXPECT_TRUE(std::isfinite(f.loss->values.total)) << to_string(fusion);
    EXPECT_EQ(f.attention.empty(), fusion != FusionKind::Mmft);
  }
  ModelConfig sub = tiny();
  sub.streams = {Stream::V, Stream::Q};
  MmftBert mv(sub, fixture().vocab, 7);
  Tape t1;
  auto fv = mv.forward(t1, ex);
  EXPECT_FALSE(fv.s.has_value());
  EXPECT_EQ(fv.attention[0].labels, (std::vector<std::string>{"FUSE", "Q", "V"}));

  ModelConfig single = tiny();
  single.streams = {Stream::Single};
  MmftBert ms(single, fixture().vocab, 8);
  Tape t2;
  auto fs = ms.forward(t2, ex);
  EXPECT_FALSE(fs.q || fs.v || fs.s);
  EXPECT_EQ(fs.loss->values.total, fs.loss->values.joint);

  ModelConfig bad = tiny();
  bad.streams = {Stream::Single, Stream::Q};
  EXPECT_THROW(MmftBert(bad, fixture().vocab, 9), ConfigError);
}

TEST(Model, SameSeedSameParameters) {
  MmftBert a(tiny(), fixture().vocab, 10), b(tiny(), fixture().vocab, 10), c(tiny(), fixture().vocab, 11);
  bool differs = false;
  for (const auto& p : a.params()) {
    EXPECT_EQ(p->value, b.params().at(p->name()).value);
    differs = differs || p->value != c.params().at(p->name()).value;
  }
  EXPECT_TRUE(differs);
}

TEST(Model, FullObjectiveGradientsMatchFiniteDifferences) {
  ModelConfig cfg = tiny(4);
  cfg.encoder.n_layers = 1;
  cfg.encoder.max_seq_len = 32;
  MmftBert m(cfg, fixture().vocab, 12);
  // away from the zero [FUSE] start, where layernorm curvature swamps the finite differences
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (Index i = 0; i < 4; ++i) m.params().at("fusion.mmft.fuse").value(0, i) = n(rng);
  const auto& ex = fixture().corpus.examples[5];
  auto report = check_parameter_gradients(m.params(), [&](Tape& t) { return m.forward(t, ex).loss->total; });
  EXPECT_TRUE(report.passed(1e-4)) << report.worst_parameter << " " << report.max_rel_error;
  EXPECT_EQ(report.elements_checked, m.params().scalar_count());
}
