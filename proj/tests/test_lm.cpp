#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace nce;

namespace {

std::string small_corpus() {
  std::string s;
  const char* words[] = {"the", "cat", "sat", "on", "a", "mat", "dog", "ran"};
  Stream rng(3, 0);
  for (int i = 0; i < 3000; ++i) {
    s += words[rng.below(8)];
    s += (i % 13 == 12) ? '\n' : ' ';
  }
  return s;
}

// Next word mostly fixed by the previous one.
std::string markov_corpus() {
  std::string s;
  const char* words[] = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"};
  Stream rng(4, 0);
  uint64_t w = 0;
  for (int i = 0; i < 6000; ++i) {
    w = rng.uniform() < 0.85 ? (w * 5 + 1) % 12 : rng.below(12);
    s += words[w];
    s += (i % 17 == 16) ? '\n' : ' ';
  }
  return s;
}

}  // namespace

TEST(Tokenize, WhitespaceAndLowercase) {
  const auto t = tokenize("The  Cat\tsat\nON the mat ");
  const std::vector<std::string> want = {"the", "cat", "sat", "on", "the", "mat"};
  EXPECT_EQ(t, want);
}

TEST(Vocabulary, SortedIdsUnknownFirst) {
  const auto v = Vocabulary::build({"b", "a", "b", "c"});
  ASSERT_EQ(v.size(), 4);
  EXPECT_EQ(v.words[0], "<unk>");
  EXPECT_EQ(v.id("a"), 1);
  EXPECT_EQ(v.id("b"), 2);
  EXPECT_EQ(v.counts[2], 2);
  EXPECT_EQ(v.id("zzz"), 0);
  EXPECT_THROW(Vocabulary::build({}), DomainError);
}

TEST(HistoryIndex, SharedAcrossStreams) {
  HistoryIndex h(2);
  std::vector<Input> xs;
  std::vector<Label> ys;
  h.add_stream({1, 2, 3, 1, 2, 4}, xs, ys);
  EXPECT_EQ(xs, (std::vector<Input>{0, 1, 2, 0}));
  EXPECT_EQ(ys, (std::vector<Label>{3, 1, 2, 4}));
  h.add_stream({2, 3, 5}, xs, ys);
  EXPECT_EQ(xs, (std::vector<Input>{1}));
  EXPECT_EQ(h.size(), 3);
}

TEST(MakeNoise, Specs) {
  const std::vector<long long> counts = {0, 8, 1};
  EXPECT_NEAR(make_noise("uniform", counts).prob(0), 1.0 / 3, 1e-15);
  const auto u = make_noise("unigram", counts);
  EXPECT_NEAR(u.prob(1), 0.8, 1e-15);
  EXPECT_GT(make_noise("unigram-pow:0.75", counts).prob(2), make_noise("unigram", counts).prob(2));
  EXPECT_THROW(make_noise("zipf", counts), ConfigError);
}

TEST(LogPartitionStats, ConstantModel) {
  std::vector<int> h = {0, 1, 2};
  auto sf = ScoringFunction::log_bilinear(3, 2, 1, h);
  const auto [mean, var] = log_partition_stats(sf, Vector::Zero(sf.num_params()), std::vector<Input>{0, 1, 2, 2});
  EXPECT_NEAR(mean, std::log(3.0), 1e-15);
  EXPECT_NEAR(var, 0.0, 1e-28);
}

TEST(Train, RankingRunIsDeterministicAndLearns) {
  LmConfig cfg;
  cfg.dim = 4;
  cfg.objective = ObjectiveKind::kRanking;
  cfg.K = 10;
  cfg.sgd.epochs = 3;
  cfg.sgd.learning_rate = 0.5;
  const std::string text = small_corpus();
  const auto a = train_language_model(text, cfg);
  const auto b = train_language_model(text, cfg);
  EXPECT_EQ((a.params - b.params).norm(), 0.0);
  ASSERT_EQ(a.epochs.size(), 3u);
  EXPECT_EQ(a.vocab, 9);
  // uniform guessing over the vocabulary is the baseline
  EXPECT_LT(a.epochs.back().valid_ppl, 9.0);
  EXPECT_TRUE(std::isfinite(a.var_log_z));
}

TEST(Train, RegularizerShrinksLogPartitionVariance) {
  LmConfig cfg;
  cfg.dim = 4;
  cfg.objective = ObjectiveKind::kRanking;
  cfg.K = 10;
  cfg.sgd.epochs = 3;
  cfg.sgd.learning_rate = 0.5;
  const std::string text = markov_corpus();
  const auto plain = train_language_model(text, cfg);
  cfg.regularizer = RegularizerConfig{0.1, 2};
  const auto reg = train_language_model(text, cfg);
  EXPECT_LT(reg.var_log_z, plain.var_log_z);
  EXPECT_LT(reg.reg_estimate, plain.reg_estimate);
}

TEST(Train, RejectsBadConfig) {
  LmConfig cfg;
  cfg.order = 1;
  EXPECT_THROW(train_language_model("a b c d e f g h i j", cfg), ConfigError);
  cfg = LmConfig{};
  EXPECT_THROW(train_language_model("a b", cfg), DomainError);
}
