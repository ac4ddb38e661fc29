#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace nce;

TEST(Rng, StreamsAreReplayable) {
  Stream a(42, 7), b(42, 7), c(42, 8);
  for (int i = 0; i < 10; ++i) {
    const uint64_t va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    EXPECT_NE(va, c.next_u64());
  }
  EXPECT_EQ(Stream(1, 2).substream(3).at(5), Stream(1, 2).substream(3).at(5));
}

TEST(Rng, NormalMoments) {
  Stream rng(9, 0);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 4 / std::sqrt(n));
  EXPECT_NEAR(s2 / n, 1.0, 4 * std::sqrt(2.0 / n));
}

TEST(Negatives, NearPointMass) {
  const double eps = 1e-9;
  const NoiseDistribution noise({1 - 3 * eps, eps, eps, eps});
  const auto negs = sample_negatives(SamplingConfig{5, 3, 0}, noise, 1000);
  for (Label y : negs) EXPECT_EQ(y, 0);
}

TEST(Negatives, UniformFrequenciesWithinThreeSigma) {
  const auto noise = NoiseDistribution::uniform(4);
  const auto negs = sample_negatives(SamplingConfig{4, 11, 0}, noise, 10000);
  ASSERT_EQ(negs.size(), 40000u);
  std::vector<double> count(4, 0.0);
  for (Label y : negs) count[static_cast<size_t>(y)] += 1;
  const double sigma = std::sqrt(0.25 * 0.75 / 40000);
  for (double c : count) EXPECT_NEAR(c / 40000, 0.25, 3 * sigma);
}

TEST(Negatives, DeterministicAndEpochDependent) {
  const auto noise = NoiseDistribution::uniform(7);
  const SamplingConfig cfg{3, 5, 1};
  EXPECT_EQ(sample_negatives(cfg, noise, 50), sample_negatives(cfg, noise, 50));
  EXPECT_NE(sample_negatives(cfg, noise, 50, 0), sample_negatives(cfg, noise, 50, 1));
}

TEST(Negatives, RejectsBadK) {
  EXPECT_THROW(sample_negatives(SamplingConfig{0, 0, 0}, NoiseDistribution::uniform(3), 4), ConfigError);
}

TEST(Noise, RejectsZeroMass) {
  EXPECT_THROW(NoiseDistribution({0.5, 0.5, 0.0}), DomainError);
  EXPECT_THROW(NoiseDistribution({0.5, 0.6}), ConfigError);
}

TEST(UnigramPower, Examples) {
  const std::vector<long long> a = {3, 1};
  const auto n1 = unigram_power(a, 1.0);
  EXPECT_NEAR(n1.prob(0), 0.75, 1e-15);
  EXPECT_NEAR(n1.prob(1), 0.25, 1e-15);
  const std::vector<long long> b = {8, 1, 5};
  const auto n0 = unigram_power(b, 0.0);
  for (int y = 0; y < 3; ++y) EXPECT_NEAR(n0.prob(y), 1.0 / 3, 1e-15);
  const std::vector<long long> c = {8, 1};
  const auto n34 = unigram_power(c, 0.75);
  EXPECT_NEAR(n34.prob(0), 0.8263, 1e-4);
  EXPECT_NEAR(n34.prob(1), 0.1737, 1e-4);
  const std::vector<long long> zeros = {0, 0};
  EXPECT_THROW(unigram_power(zeros, 1.0), DomainError);
}

TEST(Synthetic, DefaultDimensionsAndDeterminism) {
  const auto p = make_synthetic_problem(4, 200, 100, 3);
  EXPECT_EQ(p.m_x(), 200);
  EXPECT_EQ(p.m_y(), 100);
  EXPECT_EQ(p.truth->theta.size(), 400);
  const auto q = make_synthetic_problem(4, 200, 100, 3);
  EXPECT_EQ((p.p_y_given_x - q.p_y_given_x).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(make_synthetic_problem(4, 10, 1, 3), ConfigError);
}

TEST(Synthetic, ZeroThetaGivesUniformRows) {
  const auto p = make_synthetic_problem(3, 5, 2, 1);
  const Matrix t = cond_prob_table(p.model, Vector::Zero(p.model.num_params()));
  for (int x = 0; x < 5; ++x) EXPECT_NEAR(t(x, 0), 0.5, 1e-15);
}

TEST(Synthetic, SelfNormalizedProblemHasConstantPartition) {
  const auto p = make_self_normalized_problem(6, 4, 3, 2);
  EXPECT_LE(p.self_normalization_gap(), 1e-12);
  ASSERT_TRUE(p.truth->gamma.has_value());
}

TEST(Dataset, EmptyHasZeroByKNegatives) {
  const auto p = counterexample_problem();
  const auto d = generate_dataset(p, 0, SamplingConfig{3, 0, 0}, NoiseDistribution::uniform(2));
  EXPECT_EQ(d.size(), 0u);
  EXPECT_EQ(d.negatives.size(), 0u);
  EXPECT_EQ(d.K, 3);
}

TEST(Dataset, PointMassRowsDetermineLabels) {
  // a near-deterministic conditional: labels follow the input
  auto sf = ScoringFunction::linear_features(2, 2, 1, {60, 0, 0, 60});
  const auto p = problem_from_model(sf, Vector::Ones(1), Vector::Constant(2, 0.5));
  const auto d = generate_dataset(p, 2000, SamplingConfig{1, 4, 0}, NoiseDistribution::uniform(2));
  for (size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.y[i], d.x[i]);
}

TEST(Dataset, EmpiricalJointWithinThreeSigma) {
  const auto p = counterexample_problem();
  const size_t n = 50000;
  const auto d = generate_dataset(p, n, SamplingConfig{1, 21, 0}, NoiseDistribution::uniform(2));
  Matrix count = Matrix::Zero(2, 2);
  for (size_t i = 0; i < n; ++i) count(d.x[i], d.y[i]) += 1;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) {
      const double pr = p.joint(x, y);
      EXPECT_NEAR(count(x, y) / n, pr, 3 * std::sqrt(pr * (1 - pr) / n));
    }
}

TEST(Dataset, SameSeedSameData) {
  const auto p = make_random_linear_problem(4, 3, 2, 5);
  const auto noise = NoiseDistribution::uniform(3);
  const auto a = generate_dataset(p, 300, SamplingConfig{2, 8, 0}, noise);
  const auto b = generate_dataset(p, 300, SamplingConfig{2, 8, 0}, noise);
  EXPECT_EQ(a.hash(), b.hash());
  const auto c = generate_dataset(p, 300, SamplingConfig{2, 9, 0}, noise);
  EXPECT_NE(a.hash(), c.hash());
}

TEST(Counterexample, TruthValues) {
  const auto p = counterexample_problem();
  EXPECT_NEAR(p.p_y_given_x(0, 0) / p.p_y_given_x(0, 1), 1.0 / 3, 1e-14);
  EXPECT_NEAR(p.p_y_given_x(1, 0), 0.5, 1e-14);
}

TEST(NoiseForProblem, UnigramIsLabelMarginal) {
  const auto p = counterexample_problem();
  const auto n = noise_for_problem("unigram", p);
  EXPECT_NEAR(n.prob(0), 0.5 * 0.25 + 0.5 * 0.5, 1e-15);
  EXPECT_THROW(noise_for_problem("zipf", p), ConfigError);
  EXPECT_THROW(noise_for_problem("unigram-pow:x", p), ConfigError);
}
