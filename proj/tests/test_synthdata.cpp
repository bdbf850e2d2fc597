#include "mmft/dataset.hpp"
#include "mmft/synthdata.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

using namespace mmft;

namespace {

// Picks the lowest-index answer whose tokens all occur in the stream; falls
// back to answer 0 when none does.
int string_match_oracle(const QAExample& ex, const std::vector<std::string>& stream_tokens) {
  std::set<std::string> s(stream_tokens.begin(), stream_tokens.end());
  for (int j = 0; j < kNumAnswers; ++j) {
    auto toks = tokenize(ex.answers[static_cast<std::size_t>(j)]);
    bool all = !toks.empty();
    for (const auto& t : toks) all = all && s.contains(t);
    if (all) return j;
  }
  return 0;
}

double oracle_accuracy(const std::vector<QAExample>& xs, bool visual) {
  int hits = 0;
  for (const auto& ex : xs) {
    hits += string_match_oracle(ex, visual ? visual_tokens(ex) : subtitle_tokens(ex.sub)) == ex.label;
  }
  return static_cast<double>(hits) / static_cast<double>(xs.size());
}

}  // namespace

TEST(Synth, VisualOnlyCleanCorpusIsSolvedByVisualOracle) {
  SynthSpec spec;
  spec.modality_mix = {1, 0, 0};
  auto corpus = generate(spec);
  ASSERT_EQ(corpus.examples.size(), 2000u);
  EXPECT_EQ(oracle_accuracy(corpus.examples, true), 1.0);
  for (const auto& t : corpus.tags) {
    EXPECT_EQ(t.required, RequiredModality::V);
    EXPECT_TRUE(t.clean);
  }
}

TEST(Synth, SubtitleOnlyCorpusIsSolvedBySubtitleOracle) {
  SynthSpec spec;
  spec.modality_mix = {0, 1, 0};
  auto corpus = generate(spec);
  EXPECT_EQ(oracle_accuracy(corpus.examples, false), 1.0);
}

TEST(Synth, VisualOracleIsAtChanceOnSubtitleQuestions) {
  SynthSpec spec;
  spec.modality_mix = {0, 1, 0};
  spec.distractor_rate = 0.0;
  EXPECT_NEAR(oracle_accuracy(generate(spec).examples, true), 0.20, 0.03);
  // planted wrong answers in V pull the oracle below chance by the planting rate
  spec.distractor_rate = 0.2;
  EXPECT_NEAR(oracle_accuracy(generate(spec).examples, true), 0.8 * 0.20, 0.03);
}

TEST(Synth, BothQuestionsDefeatSingleModalityOracles) {
  SynthSpec spec;
  spec.modality_mix = {0, 0, 1};
  auto corpus = generate(spec);
  const double v = oracle_accuracy(corpus.examples, true);
  const double s = oracle_accuracy(corpus.examples, false);
  EXPECT_LT(v, 0.35);
  EXPECT_LT(s, 0.35);
  for (const auto& ex : corpus.examples) {
    EXPECT_TRUE(evidence_present(ex, RequiredModality::Both));
  }
}

TEST(Synth, LabelBlindPredictorIsAtChance) {
  SynthSpec spec;
  auto corpus = generate(spec);
  for (int fixed = 0; fixed < kNumAnswers; ++fixed) {
    int hits = 0;
    for (const auto& ex : corpus.examples) hits += ex.label == fixed;
    EXPECT_NEAR(hits / 2000.0, 0.2, 0.03);
  }
}

TEST(Synth, MixAndFamiliesFollowSpec) {
  SynthSpec spec;
  auto corpus = generate(spec);
  std::map<RequiredModality, int> counts;
  std::set<std::string> families;
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    counts[corpus.tags[i].required]++;
    families.insert(question_family(corpus.examples[i].question));
    EXPECT_EQ(corpus.tags[i].qid, corpus.examples[i].qid);
    EXPECT_NO_THROW(corpus.examples[i].validate());
    EXPECT_TRUE(evidence_present(corpus.examples[i], corpus.tags[i].required));
  }
  EXPECT_NEAR(counts[RequiredModality::V] / 2000.0, 0.4, 0.04);
  EXPECT_NEAR(counts[RequiredModality::S] / 2000.0, 0.4, 0.04);
  EXPECT_NEAR(counts[RequiredModality::Both] / 2000.0, 0.2, 0.04);
  EXPECT_EQ(families, (std::set<std::string>{"what", "who", "where", "why", "how", "others"}));

  spec.question_families = {"what"};
  for (const auto& ex : generate(spec).examples) EXPECT_EQ(question_family(ex.question), "what");
}

TEST(Synth, SeedDeterminism) {
  SynthSpec spec;
  spec.n_examples = 300;
  auto a = generate(spec), b = generate(spec);
  EXPECT_EQ(a.examples, b.examples);
  EXPECT_EQ(a.tags, b.tags);
  spec.seed = 2;
  EXPECT_NE(generate(spec).examples, a.examples);
}

TEST(Synth, NoisyRegimeWithholdsEvidence) {
  SynthSpec spec;
  spec.clean = false;
  auto corpus = generate(spec);
  int clean = 0;
  for (std::size_t i = 0; i < corpus.examples.size(); ++i) {
    const bool present = evidence_present(corpus.examples[i], corpus.tags[i].required);
    EXPECT_EQ(present, corpus.tags[i].clean);
    clean += present;
  }
  EXPECT_NEAR(clean / 2000.0, 0.41, 0.04);
}

TEST(Synth, InfeasibleSpecsAreRejected) {
  SynthSpec spec;
  spec.n_attributes = 5;
  EXPECT_THROW(generate(spec), ConfigError);
  spec = {};
  spec.modality_mix = {0.5, 0.6, 0};
  EXPECT_THROW(generate(spec), ConfigError);
  spec = {};
  spec.question_families = {"where"};
  EXPECT_THROW(generate(spec), ConfigError);  // no visual template in that family
  spec = {};
  spec.question_families = {"bogus"};
  EXPECT_THROW(generate(spec), ConfigError);
}

TEST(Synth, CorpusRoundTripsThroughJsonLines) {
  SynthSpec spec;
  spec.n_examples = 200;
  auto corpus = generate(spec);
  const auto dir = std::filesystem::temp_directory_path() / "mmft_synth_test";
  std::filesystem::create_directories(dir);
  write_jsonl(dir / "c.jsonl", corpus.examples);
  write_tags(dir / "t.jsonl", corpus.tags);
  auto back = ingest_tvqa(dir / "c.jsonl");
  EXPECT_TRUE(back.diagnostics.empty());
  EXPECT_EQ(back.examples, corpus.examples);
  EXPECT_EQ(read_tags(dir / "t.jsonl"), corpus.tags);
  std::filesystem::remove_all(dir);
}
