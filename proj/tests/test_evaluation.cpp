#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace nce;

TEST(Kl, ZeroAtTruth) {
  const auto p = make_random_linear_problem(4, 5, 2, 3);
  EXPECT_NEAR(kl_divergence(p, p.model, p.truth->theta), 0.0, 1e-12);
  EXPECT_NEAR(d_metric(p, p.model, p.truth->theta), 0.0, 1e-24);
  EXPECT_NEAR(worst_total_variation(p, p.model, p.truth->theta), 0.0, 1e-12);
}

TEST(Kl, MatchesDoubleLoopOracle) {
  Stream rng(40, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const auto p = make_random_linear_problem(3, 4, 3, 60 + rep);
    const Vector theta = oracle::random_vector(rng, 3);
    double kl = 0, d = 0;
    for (int x = 0; x < 3; ++x) {
      std::vector<double> s;
      for (int y = 0; y < 4; ++y) s.push_back(score(p.model, theta, x, y));
      const double lz = oracle::naive_lse(s);
      for (int y = 0; y < 4; ++y) {
        const double q = std::exp(s[static_cast<size_t>(y)] - lz);
        const double t = p.p_y_given_x(x, y);
        kl += p.p_x(x) * t * std::log(t / q);
        d += p.joint(x, y) * (q - t) * (q - t);
      }
    }
    EXPECT_NEAR(kl_divergence(p, p.model, theta), kl, 1e-12);
    EXPECT_NEAR(d_metric(p, p.model, theta), d, 1e-12);
    EXPECT_GT(kl, 0.0);
  }
}

TEST(DMetric, CounterexampleBinaryMaximizer) {
  const auto p = counterexample_problem();
  // binary stationary point: theta_1 / theta_2 = 3/7
  Vector eta(2);
  eta << std::log(3.0), std::log(7.0);
  const double direct = (1.0 / 8) * std::pow(0.3 - 0.25, 2) + (3.0 / 8) * std::pow(0.7 - 0.75, 2);
  EXPECT_NEAR(d_metric(p, p.model, eta), direct, 1e-15);
  EXPECT_GT(d_metric(p, p.model, eta), 0.0);
}

TEST(DMetric, BoundedByWorstCellGap) {
  Stream rng(41, 0);
  const auto p = make_random_linear_problem(4, 3, 2, 5);
  for (int rep = 0; rep < 10; ++rep) {
    const Vector theta = oracle::random_vector(rng, 2, 2.0);
    const Matrix q = cond_prob_table(p.model, theta);
    const double worst = (q - p.p_y_given_x).cwiseAbs2().maxCoeff();
    EXPECT_LE(d_metric(p, p.model, theta), worst + 1e-15);
  }
}

TEST(Perplexity, UniformModelEqualsVocabulary) {
  std::vector<int> h(50);
  for (int i = 0; i < 50; ++i) h[static_cast<size_t>(i)] = i;
  auto sf = ScoringFunction::log_bilinear(50, 2, 1, h);
  const Vector theta = Vector::Zero(sf.num_params());
  const std::vector<Input> xs = {0, 3, 7, 3};
  const std::vector<Label> ys = {1, 2, 49, 0};
  EXPECT_NEAR(perplexity(sf, theta, xs, ys), 50.0, 1e-10);
}

TEST(Perplexity, PeakedModelApproachesOne) {
  auto sf = ScoringFunction::linear_features(2, 2, 1, {1, 0, 0, 1});
  const std::vector<Input> xs = {0, 1, 0, 1};
  const std::vector<Label> ys = {0, 1, 0, 1};
  double prev = 1e300;
  for (double gap : {1.0, 5.0, 20.0}) {
    const double ppl = perplexity(sf, Vector::Constant(1, gap), xs, ys);
    EXPECT_LT(ppl, prev);
    prev = ppl;
  }
  EXPECT_NEAR(prev, 1.0, 1e-8);
}

TEST(Perplexity, AlternatingBigram) {
  // corpus "a b a b ...": the bigram MLE puts all mass on the other token
  const std::string text = "a b a b a b a b a b a b";
  const auto toks = tokenize(text);
  Vocabulary v = Vocabulary::build(toks);
  HistoryIndex hist(1);
  std::vector<Input> xs;
  std::vector<Label> ys;
  hist.add_stream(v.encode(toks), xs, ys);
  // one indicator feature per observed transition; a large weight is the MLE limit
  std::vector<double> table(static_cast<size_t>(hist.size()) * v.size(), 0.0);
  for (size_t t = 0; t < xs.size(); ++t) table[static_cast<size_t>(xs[t]) * v.size() + ys[t]] = 1.0;
  auto bigram = ScoringFunction::linear_features(hist.size(), v.size(), 1, table);
  EXPECT_NEAR(perplexity(bigram, Vector::Constant(1, 40.0), xs, ys), 1.0, 1e-6);
}

TEST(Perplexity, RejectsEmpty) {
  auto sf = ScoringFunction::linear_features(1, 2, 1, {0, 1});
  EXPECT_THROW(perplexity(sf, Vector::Zero(1), {}, {}), DomainError);
}
