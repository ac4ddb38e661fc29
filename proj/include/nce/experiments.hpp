#pragma once

// Experiment drivers shared by the command-line tool and the acceptance run.

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "nce/asymptotics.hpp"
#include "nce/evaluation.hpp"
#include "nce/model.hpp"
#include "nce/optimize.hpp"
#include "nce/sampling.hpp"

namespace nce {

// ---------------------------------------------------------------------------
// Two-input counterexample

struct CounterexampleRow {
  int K = 0;
  double binary_ratio = 0.0;       // theta_1 / theta_2 at the binary maximizer
  double binary_cond_ratio = 0.0;  // p(y1|x1) / p(y2|x1) under the binary maximizer
  double binary_gamma = 0.0;
  double ranking_ratio = 0.0;      // p(y1|x1) / p(y2|x1) under the ranking maximizer
  double d_binary = 0.0;
  double d_ranking = 0.0;
  bool binary_converged = false;
  bool ranking_converged = false;

  static std::string csv_header() {
    return "K,binary_ratio,binary_cond_ratio,binary_gamma,ranking_ratio,true_ratio,d_binary,d_ranking";
  }
  std::string csv_row() const {
    std::ostringstream os;
    os.precision(12);
    os << K << ',' << binary_ratio << ',' << binary_cond_ratio << ',' << binary_gamma << ',' << ranking_ratio << ','
       << 1.0 / 3.0 << ',' << d_binary << ',' << d_ranking;
    return os.str();
  }
};

inline CounterexampleRow counterexample_run(int K, double tol = 1e-11) {
  const ConditionalProblem problem = counterexample_problem();
  const ScoringFunction& sf = problem.model;
  const NoiseDistribution noise = NoiseDistribution::uniform(problem.m_y());
  FitConfig cfg;
  cfg.K = K;
  cfg.tol = tol;
  cfg.max_iters = 200000;
  const FitInputs in{nullptr, &problem};

  CounterexampleRow row;
  row.K = K;
  cfg.objective = ObjectiveKind::kPopulationBinary;
  const EstimationReport b = fit(sf, in, noise, cfg);
  // parameters are eta = log theta
  row.binary_ratio = std::exp(b.theta(0) - b.theta(1));
  const Vector pb = cond_prob(sf, b.theta, 0);
  row.binary_cond_ratio = pb(0) / pb(1);
  row.binary_gamma = b.gamma.value_or(0.0);
  row.d_binary = d_metric(problem, sf, b.theta);
  row.binary_converged = b.converged;

  cfg.objective = ObjectiveKind::kPopulationRanking;
  const EstimationReport r = fit(sf, in, noise, cfg);
  const Vector pr = cond_prob(sf, r.theta, 0);
  row.ranking_ratio = pr(0) / pr(1);
  row.d_ranking = d_metric(problem, sf, r.theta);
  row.ranking_converged = r.converged;
  return row;
}

// Throws NumericError when a row misses the expected ratios.
inline void check_counterexample(const CounterexampleRow& row, double tol = 1e-4) {
  std::ostringstream os;
  if (std::abs(row.binary_ratio - 3.0 / 7.0) > tol) os << "binary ratio " << row.binary_ratio << " != 3/7; ";
  if (std::abs(row.ranking_ratio - 1.0 / 3.0) > tol) os << "ranking ratio " << row.ranking_ratio << " != 1/3; ";
  if (!(row.d_binary > row.d_ranking + 1e-3)) os << "d(binary) not above d(ranking); ";
  const std::string msg = os.str();
  if (!msg.empty()) throw NumericError("counterexample K=" + std::to_string(row.K) + ": " + msg);
}

// ---------------------------------------------------------------------------
// KL of fitted conditionals against the truth

struct ConsistencyRow {
  std::string estimator;
  size_t n = 0;
  double kl = 0.0;
  double d = 0.0;
  int iterations = 0;
  bool converged = false;

  static std::string csv_header() { return "estimator,n,kl,d_metric,iterations,converged"; }
  std::string csv_row() const {
    std::ostringstream os;
    os.precision(10);
    os << estimator << ',' << n << ',' << kl << ',' << d << ',' << iterations << ',' << (converged ? 1 : 0);
    return os.str();
  }
};

// estimator: mle | ranking | binary | binary+bias
inline ConsistencyRow consistency_run(const ConditionalProblem& problem, const std::string& estimator, size_t n,
                                      int K, const NoiseDistribution& noise, uint64_t seed, FitConfig cfg) {
  ScoringFunction sf = problem.model.without_context_bias();
  if (estimator == "mle") cfg.objective = ObjectiveKind::kMle;
  else if (estimator == "ranking") cfg.objective = ObjectiveKind::kRanking;
  else if (estimator == "binary") cfg.objective = ObjectiveKind::kBinary;
  else if (estimator == "binary+bias") {
    cfg.objective = ObjectiveKind::kBinary;
    sf = sf.with_context_bias();
  } else {
    throw ConfigError("unknown estimator '" + estimator + "'");
  }
  const Dataset data = generate_dataset(problem, n, SamplingConfig{K, seed, 0}, noise);
  const EstimationReport rep = fit(sf, FitInputs{&data, nullptr}, noise, cfg);
  ConsistencyRow row;
  row.estimator = estimator;
  row.n = n;
  row.kl = kl_divergence(problem, sf, rep.theta);
  row.d = d_metric(problem, sf, rep.theta);
  row.iterations = rep.iterations;
  row.converged = rep.converged;
  return row;
}

// ---------------------------------------------------------------------------
// Efficiency-rate curves

inline std::vector<RatePoint> efficiency_curve(const ConditionalProblem& problem, const NoiseDistribution& noise,
                                               const std::string& estimator, const std::vector<int>& Ks,
                                               const PopulationMode& mode = PopulationMode::exact()) {
  if (!problem.truth) throw PreconditionError("rate curve needs a problem with theta_star");
  const auto& truth = *problem.truth;
  const CovarianceReport mle = mle_asymptotic_cov(problem, truth.sf, truth.theta);
  std::vector<RatePoint> out;
  for (int K : Ks) {
    CovarianceReport r;
    if (estimator == "mle") {
      r = mle;
      r.K = K;
    } else if (estimator == "ranking") {
      r = ranking_asymptotic_cov(problem, truth.sf, truth.theta, noise, K, mode);
    } else if (estimator == "binary") {
      if (!truth.gamma) throw PreconditionError("binary rate curve needs gamma_star (a self-normalized problem)");
      r = binary_asymptotic_cov(problem, truth.sf, truth.theta, *truth.gamma, noise, K);
    } else {
      throw ConfigError("unknown estimator '" + estimator + "'");
    }
    RatePoint p = rate_point(r, mle);
    if (estimator == "mle") p.norm_diff = 0.0;
    out.push_back(p);
  }
  return out;
}

inline std::string rate_csv_row(const std::string& estimator, const RatePoint& p) {
  std::ostringstream os;
  os.precision(12);
  os << estimator << ',' << p.K << ',' << p.norm_diff << ',' << p.mse_gap << ',' << p.mode << ',' << p.std_error;
  return os.str();
}

}  // namespace nce
