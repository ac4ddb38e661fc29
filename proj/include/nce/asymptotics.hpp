#pragma once

// Fisher information, asymptotic covariances of the two NCE estimators,
// efficiency-rate curves and replication experiments.

#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "nce/error.hpp"
#include "nce/model.hpp"
#include "nce/numeric.hpp"
#include "nce/objectives.hpp"
#include "nce/optimize.hpp"
#include "nce/parallel.hpp"
#include "nce/sampling.hpp"

namespace nce {

struct CovarianceReport {
  std::string estimator;  // mle | ranking | binary
  int K = 0;
  Matrix information;     // I (for binary: inverse of the theta block of V_B)
  Matrix inverse;         // I^{-1}, d x d
  Matrix std_error;       // entrywise standard error of `information` (Monte Carlo only)
  PopulationMode mode;
  double mse_infinity = 0.0;
  std::optional<Matrix> sandwich;  // binary: full (d+1)x(d+1) V_B
  std::optional<double> factor_gap;  // ranking: max |E[-Hessian] - Var[grad]|
};

inline double mse_infinity(const Matrix& inverse) {
  if (inverse.rows() == 0) throw ConfigError("mse_infinity: empty matrix");
  return inverse.trace() / static_cast<double>(inverse.rows());
}

inline double mse_infinity(const CovarianceReport& r) { return mse_infinity(r.inverse); }

namespace detail {

// Per-input score gradients as columns (d x m_y).
inline Matrix gradient_table(const ScoringFunction& sf, const ParamVector& theta, Input x) {
  Matrix g(sf.num_params(), sf.num_labels());
  for (Label y = 0; y < sf.num_labels(); ++y) g.col(y) = score_grad(sf, theta, x, y);
  return g;
}

// The conditional used for population expectations: the model's own when the
// problem carries a ground truth in this parametrization, else the stored table.
inline Vector conditional_row(const ConditionalProblem& problem, const ScoringFunction& sf, const ParamVector& theta,
                              Input x) {
  if (problem.truth) return cond_prob(sf, theta, x);
  return problem.p_y_given_x.row(x).transpose();
}

inline Matrix sum_matrices(std::vector<Matrix>& parts, Eigen::Index d) {
  // pairwise in index order
  while (parts.size() > 1) {
    std::vector<Matrix> next;
    for (size_t i = 0; i + 1 < parts.size(); i += 2) next.push_back(parts[i] + parts[i + 1]);
    if (parts.size() % 2) next.push_back(parts.back());
    parts.swap(next);
  }
  return parts.empty() ? Matrix::Zero(d, d) : parts.front();
}

}  // namespace detail

// E_X[Var_{Y|X}[grad s(x, y; theta)]].
inline Matrix fisher_information(const ConditionalProblem& problem, const ScoringFunction& sf,
                                 const ParamVector& theta) {
  const Eigen::Index d = sf.num_params();
  std::vector<Matrix> parts(static_cast<size_t>(problem.m_x()));
  parallel_for(parts.size(), [&](size_t xi) {
    const Input x = static_cast<Input>(xi);
    const Matrix g = detail::gradient_table(sf, theta, x);
    const Vector p = detail::conditional_row(problem, sf, theta, x);
    const Vector mean = g * p;
    const Matrix c = g.colwise() - mean;
    parts[xi] = problem.p_x(x) * (c * p.asDiagonal() * c.transpose());
  });
  return symmetrize(detail::sum_matrices(parts, d));
}

inline CovarianceReport mle_asymptotic_cov(const ConditionalProblem& problem, const ScoringFunction& sf,
                                           const ParamVector& theta) {
  CovarianceReport r;
  r.estimator = "mle";
  r.information = fisher_information(problem, sf, theta);
  r.inverse = inverse_spd(r.information, "Fisher information");
  r.mse_infinity = mse_infinity(r.inverse);
  return r;
}

// ---------------------------------------------------------------------------
// Ranking

struct RankingTerms {
  Matrix outer;        // E[grad s_0 grad s_0^T]
  Matrix w;            // E[(sum_j q_j grad s_j)(...)^T]
  Matrix w_cross;      // E[sum_j q_j grad s_0 grad s_j^T]
  Matrix hessian;      // E[-Hessian of the per-example ranking loss] (linear scores only)
  Matrix grad_second;  // E[g g^T], g = grad s_0 - sum_j q_j grad s_j
  Vector grad_mean;    // E[g]
  Matrix w_std_error;  // Monte Carlo only
  bool has_hessian = false;

  Matrix information() const { return outer - w; }
};

namespace detail {

struct RankingAccum {
  Matrix w, w_cross, grad_second;
  Vector grad_mean;
  Vector label_weight;  // sum over tuples of w * (posterior mass on label y)
  explicit RankingAccum(Eigen::Index d = 0, int m_y = 0)
      : w(Matrix::Zero(d, d)), w_cross(Matrix::Zero(d, d)), grad_second(Matrix::Zero(d, d)),
        grad_mean(Vector::Zero(d)), label_weight(Vector::Zero(m_y)) {}
};

// Adds one (x, y_0, negatives) tuple with probability weight `weight`.
inline void add_ranking_tuple(RankingAccum& acc, const Matrix& g, std::span<const double> shifted, Label y0,
                              std::span<const Label> negs, double weight, std::vector<double>& s, Vector& qbar,
                              Vector& tuple_sum) {
  const size_t K = negs.size();
  s[0] = shifted[static_cast<size_t>(y0)];
  for (size_t k = 0; k < K; ++k) s[k + 1] = shifted[static_cast<size_t>(negs[k])];
  const double lse = log_sum_exp(std::span<const double>(s.data(), K + 1));
  const double q0 = std::exp(s[0] - lse);
  qbar = q0 * g.col(y0);
  acc.label_weight(y0) += weight * q0;
  for (size_t k = 0; k < K; ++k) {
    const double q = std::exp(s[k + 1] - lse);
    qbar += q * g.col(negs[k]);
    acc.label_weight(negs[k]) += weight * q;
  }
  acc.w.noalias() += weight * qbar * qbar.transpose();
  tuple_sum += weight * qbar;
}

}  // namespace detail

// Exact mode enumerates Y^K negatives for every (x, y_0); Monte Carlo mode
// keeps (x, y_0) exact and samples `mode.samples` negative tuples per pair in
// 32 batches.
inline RankingTerms ranking_information_terms(const ConditionalProblem& problem, const ScoringFunction& sf,
                                              const ParamVector& theta, const NoiseDistribution& noise, int K,
                                              const PopulationMode& mode = PopulationMode::exact()) {
  if (K < 1) throw ConfigError("K: must be >= 1");
  if (noise.size() != sf.num_labels()) throw ConfigError("noise distribution size does not match the label space");
  const int m_x = problem.m_x(), m_y = problem.m_y();
  const Eigen::Index d = sf.num_params();
  const bool exact = mode.kind == PopulationMode::Kind::kExact;
  if (exact) check_enumeration_budget(m_x * std::pow(static_cast<double>(m_y), K), "ranking asymptotic covariance");
  else if (mode.samples < 32) throw ConfigError("Monte Carlo mode needs at least 32 samples");
  constexpr size_t kBatches = 32;
  const size_t batches = exact ? 1 : kBatches;
  const size_t per_batch = exact ? 0 : mode.samples / kBatches;

  // acc[x][b]
  std::vector<std::vector<detail::RankingAccum>> acc(static_cast<size_t>(m_x));
  std::vector<Matrix> outer_parts(static_cast<size_t>(m_x));
  const Stream base(mode.seed, 0x72616e6bULL);
  parallel_for(static_cast<size_t>(m_x), [&](size_t xi) {
    const Input x = static_cast<Input>(xi);
    const Matrix g = detail::gradient_table(sf, theta, x);
    const Vector p = detail::conditional_row(problem, sf, theta, x);
    std::vector<double> shifted(static_cast<size_t>(m_y));
    {
      auto ctx = sf.context(theta, x);
      for (Label y = 0; y < m_y; ++y) shifted[static_cast<size_t>(y)] = ctx.score(y) - noise.log_prob(y);
    }
    outer_parts[xi] = problem.p_x(x) * (g * p.asDiagonal() * g.transpose());
    auto& mine = acc[xi];
    mine.assign(batches, detail::RankingAccum(d, m_y));
    std::vector<double> s(static_cast<size_t>(K) + 1);
    std::vector<Label> negs(static_cast<size_t>(K));
    Vector qbar(d), tuple_sum(d);
    for (size_t b = 0; b < batches; ++b) {
      auto& a = mine[b];
      for (Label y0 = 0; y0 < m_y; ++y0) {
        const double pxy = problem.p_x(x) * p(y0);
        tuple_sum.setZero();
        double mass = 0.0;
        if (exact) {
          detail::for_each_tuple(m_y, K, [&](std::span<const Label> t) {
            double w = pxy;
            for (Label y : t) w *= noise.prob(y);
            detail::add_ranking_tuple(a, g, shifted, y0, t, w, s, qbar, tuple_sum);
            mass += w;
          });
        } else {
          const double w = pxy / static_cast<double>(per_batch);
          Stream pair_rng = base.substream(b).substream(static_cast<uint64_t>(x) * m_y + y0);
          for (size_t j = 0; j < per_batch; ++j) {
            Stream rng = pair_rng.substream(j);
            for (auto& y : negs) y = noise.sample(rng);
            detail::add_ranking_tuple(a, g, shifted, y0, negs, w, s, qbar, tuple_sum);
          }
          mass = pxy;
        }
        // g = grad s_0 - qbar; second moment expands into terms already summed
        const Vector g0 = g.col(y0);
        a.w_cross.noalias() += g0 * tuple_sum.transpose();
        a.grad_mean += mass * g0 - tuple_sum;
        a.grad_second.noalias() += mass * g0 * g0.transpose() - g0 * tuple_sum.transpose() -
                                   tuple_sum * g0.transpose();
      }
      a.grad_second += a.w;
    }
  });

  RankingTerms t;
  t.outer = symmetrize(detail::sum_matrices(outer_parts, d));
  auto reduce = [&](size_t b, auto member) {
    std::vector<Matrix> parts;
    for (auto& per_x : acc) parts.push_back(per_x[b].*member);
    return detail::sum_matrices(parts, d);
  };
  std::vector<Matrix> w_batches(batches), cross_batches(batches), second_batches(batches);
  std::vector<Matrix> hess_batches(batches);
  std::vector<Vector> mean_batches(batches);
  t.has_hessian = !std::holds_alternative<LogBilinear>(sf.inner());
  for (size_t b = 0; b < batches; ++b) {
    w_batches[b] = reduce(b, &detail::RankingAccum::w);
    cross_batches[b] = reduce(b, &detail::RankingAccum::w_cross);
    second_batches[b] = reduce(b, &detail::RankingAccum::grad_second);
    Vector m = Vector::Zero(d);
    Matrix h = Matrix::Zero(d, d);
    for (Input x = 0; x < m_x; ++x) {
      const auto& a = acc[static_cast<size_t>(x)][b];
      m += a.grad_mean;
      if (t.has_hessian) {
        // sum_j q_j g_j g_j^T collapses onto per-label weights
        const Matrix g = detail::gradient_table(sf, theta, x);
        h.noalias() += g * a.label_weight.asDiagonal() * g.transpose();
      }
    }
    mean_batches[b] = m;
    hess_batches[b] = h - w_batches[b];
  }
  auto average = [&](std::vector<Matrix>& v) {
    Matrix total = detail::sum_matrices(v, d);
    return Matrix(total / static_cast<double>(batches));
  };
  if (!exact) {
    // entrywise batch-means standard error of W
    t.w_std_error = Matrix::Zero(d, d);
    std::vector<double> vals(batches);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) {
        for (size_t b = 0; b < batches; ++b) vals[b] = w_batches[b](i, j);
        t.w_std_error(i, j) = detail::batch_means_stderr(vals);
      }
  }
  t.w = symmetrize(average(w_batches));
  t.w_cross = average(cross_batches);
  t.grad_second = symmetrize(average(second_batches));
  t.hessian = symmetrize(average(hess_batches));
  Vector mean_total = Vector::Zero(d);
  for (const auto& m : mean_batches) mean_total += m;
  t.grad_mean = mean_total / static_cast<double>(batches);
  return t;
}

inline constexpr double kFactorTolerance = 1e-8;

inline CovarianceReport ranking_asymptotic_cov(const ConditionalProblem& problem, const ScoringFunction& sf,
                                               const ParamVector& theta, const NoiseDistribution& noise, int K,
                                               const PopulationMode& mode = PopulationMode::exact()) {
  const RankingTerms t = ranking_information_terms(problem, sf, theta, noise, K, mode);
  CovarianceReport r;
  r.estimator = "ranking";
  r.K = K;
  r.mode = mode;
  r.information = symmetrize(t.information());
  if (mode.kind == PopulationMode::Kind::kExact) {
    // the two sandwich factors: E[grad grad^T] (score mean is zero at the truth) and E[-Hessian]
    const Matrix var = t.grad_second - t.grad_mean * t.grad_mean.transpose();
    double gap = (var - r.information).cwiseAbs().maxCoeff();
    if (t.has_hessian) gap = std::max(gap, (t.hessian - r.information).cwiseAbs().maxCoeff());
    r.factor_gap = gap;
    if (gap > kFactorTolerance) {
      std::ostringstream os;
      os << "ranking covariance: sandwich factors disagree by " << gap << " (is theta the truth?)";
      throw NumericError(os.str());
    }
  } else {
    r.std_error = t.w_std_error;
  }
  r.inverse = inverse_spd(r.information, "ranking information I_R");
  r.mse_infinity = mse_infinity(r.inverse);
  return r;
}

// ---------------------------------------------------------------------------
// Binary

inline constexpr double kSelfNormalizationTolerance = 1e-8;

// max over cells of |exp(s - gamma) - p(y|x)|
inline double self_normalization_error(const ConditionalProblem& problem, const ScoringFunction& sf,
                                       const ParamVector& theta, double gamma) {
  double worst = 0.0;
  for (Input x = 0; x < problem.m_x(); ++x) {
    auto ctx = sf.context(theta, x);
    for (Label y = 0; y < problem.m_y(); ++y)
      worst = std::max(worst, std::abs(std::exp(ctx.score(y) - gamma) - problem.p_y_given_x(x, y)));
  }
  return worst;
}

inline CovarianceReport binary_asymptotic_cov(const ConditionalProblem& problem, const ScoringFunction& sf,
                                              const ParamVector& theta, double gamma,
                                              const NoiseDistribution& noise, int K) {
  if (K < 1) throw ConfigError("K: must be >= 1");
  if (noise.size() != sf.num_labels()) throw ConfigError("noise distribution size does not match the label space");
  const double err = self_normalization_error(problem, sf, theta, gamma);
  if (!(err <= kSelfNormalizationTolerance)) {
    std::ostringstream os;
    os << "binary covariance needs a self-normalized truth; max |exp(s - gamma) - p(y|x)| = " << err;
    throw PreconditionError(os.str());
  }
  const Eigen::Index d = sf.num_params();
  const double offset = gamma + std::log(static_cast<double>(K));
  std::vector<Matrix> w_parts(static_cast<size_t>(problem.m_x())), mu_parts(w_parts.size());
  parallel_for(w_parts.size(), [&](size_t xi) {
    const Input x = static_cast<Input>(xi);
    auto ctx = sf.context(theta, x);
    Matrix w = Matrix::Zero(d + 1, d + 1);
    Vector mu = Vector::Zero(d + 1);
    Vector grad(d + 1);
    for (Label y = 0; y < problem.m_y(); ++y) {
      const double t = ctx.score(y) - noise.log_prob(y) - offset;
      const double one_minus = sigmoid(-t);
      grad.head(d) = score_grad(sf, theta, x, y);
      grad(d) = -1.0;
      const double pyx = problem.p_y_given_x(x, y);
      w.noalias() += problem.p_x(x) * pyx * one_minus * grad * grad.transpose();
      mu += pyx * one_minus * grad;
    }
    w_parts[xi] = w;
    mu_parts[xi] = problem.p_x(x) * mu * mu.transpose();
  });
  const Matrix w_tilde = symmetrize(detail::sum_matrices(w_parts, d + 1));
  const Matrix mu_outer = symmetrize(detail::sum_matrices(mu_parts, d + 1));
  const Matrix var = w_tilde - (static_cast<double>(K + 1) / K) * mu_outer;
  const Matrix w_inv = inverse_spd(w_tilde, "binary curvature W~_K");
  const Matrix v_b = symmetrize(w_inv * var * w_inv);
  CovarianceReport r;
  r.estimator = "binary";
  r.K = K;
  r.sandwich = v_b;
  r.inverse = v_b.topLeftCorner(d, d);
  r.information = inverse_spd(r.inverse, "binary covariance block");
  r.mse_infinity = mse_infinity(r.inverse);
  return r;
}

// ---------------------------------------------------------------------------
// Rate curves

struct RatePoint {
  int K = 0;
  double norm_diff = 0.0;  // spectral norm of I_K^{-1} - I^{-1}
  double mse_gap = 0.0;    // mse_inf(estimator) - mse_inf(mle)
  std::string mode;
  double std_error = 0.0;  // first-order error of norm_diff (Monte Carlo only)
};

inline RatePoint rate_point(const CovarianceReport& est, const CovarianceReport& mle) {
  RatePoint p;
  p.K = est.K;
  p.norm_diff = spectral_norm_sym(symmetrize(est.inverse - mle.inverse));
  p.mse_gap = est.mse_infinity - mle.mse_infinity;
  p.mode = est.mode.str();
  if (est.std_error.size() > 0) {
    const double scale = spectral_norm_sym(est.inverse);
    p.std_error = scale * scale * est.std_error.norm();
  }
  return p;
}

inline std::string rate_csv_header() { return "estimator,K,norm_diff,mse_gap,mode,stderr"; }

// ---------------------------------------------------------------------------
// Replication experiments

struct ReplicationSummary {
  std::string estimator;
  int K = 0;
  size_t n = 0;
  size_t replications = 0;
  Matrix empirical_cov;  // of sqrt(n) (theta_hat - theta*)
  Vector mean_bias;      // mean of theta_hat - theta*
  std::optional<Matrix> theory;
  double rel_frobenius = 0.0;  // ||emp - theory||_F / ||theory||_F
  double empirical_mse = 0.0;  // mean ||sqrt(n)(theta_hat - theta*)||^2 / d
  double theory_mse = 0.0;
  double mse_rel_error = 0.0;
  std::vector<int> iterations;
};

// One fit per seed on a fresh dataset of size n. Replications run in parallel
// and are reduced in seed order.
inline ReplicationSummary replicate(const ConditionalProblem& problem, const ScoringFunction& sf,
                                    const ParamVector& theta_star, const NoiseDistribution& noise,
                                    const FitConfig& cfg, int K, size_t n, std::span<const uint64_t> seeds,
                                    const std::optional<Matrix>& theory = std::nullopt) {
  if (seeds.size() < 2) throw ConfigError("replications: need R >= 2");
  if (n < 1) throw ConfigError("n: must be >= 1");
  if (theta_star.size() != sf.num_params()) throw ConfigError("theta_star: length does not match the model");
  const Eigen::Index d = sf.num_params();
  const size_t R = seeds.size();
  std::vector<Vector> dev(R);
  std::vector<int> iters(R);
  std::vector<std::string> failures(R);
  parallel_for(R, [&](size_t r) {
    try {
      const SamplingConfig sc{K, seeds[r], 0};
      const Dataset data = generate_dataset(problem, n, sc, noise);
      FitConfig c = cfg;
      c.K = K;
      const EstimationReport rep = fit(sf, FitInputs{&data, nullptr}, noise, c);
      dev[r] = rep.theta - theta_star;
      iters[r] = rep.iterations;
    } catch (const std::exception& e) {
      failures[r] = e.what();
    }
  });
  for (size_t r = 0; r < R; ++r)
    if (!failures[r].empty()) {
      // keep the original category where possible
      throw NumericError("replication " + std::to_string(r) + " failed: " + failures[r]);
    }

  ReplicationSummary s;
  s.estimator = to_string(cfg.objective);
  s.K = K;
  s.n = n;
  s.replications = R;
  s.iterations = iters;
  s.mean_bias = pairwise_sum(std::span<const Vector>(dev), d) / static_cast<double>(R);
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  std::vector<Matrix> outer(R);
  std::vector<double> sq(R);
  for (size_t r = 0; r < R; ++r) {
    const Vector z = sqrt_n * dev[r];
    const Vector c = sqrt_n * (dev[r] - s.mean_bias);
    outer[r] = c * c.transpose();
    sq[r] = z.squaredNorm() / static_cast<double>(d);
  }
  s.empirical_cov = symmetrize(detail::sum_matrices(outer, d) / static_cast<double>(R - 1));
  s.empirical_mse = pairwise_sum(sq) / static_cast<double>(R);
  if (theory) {
    s.theory = *theory;
    s.rel_frobenius = (s.empirical_cov - *theory).norm() / theory->norm();
    s.theory_mse = mse_infinity(*theory);
    s.mse_rel_error = std::abs(s.empirical_mse - s.theory_mse) / s.theory_mse;
  }
  return s;
}

// Seeds r = 0..R-1 derived from a master seed.
inline std::vector<uint64_t> replication_seeds(uint64_t master, size_t R) {
  std::vector<uint64_t> out(R);
  for (size_t r = 0; r < R; ++r) out[r] = derive_key(master, 0x7265706cULL + r);
  return out;
}

}  // namespace nce
