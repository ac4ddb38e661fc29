#pragma once

// Distances between the true and an estimated conditional distribution, and
// perplexity of a fitted model on a token stream.

#include <cmath>
#include <span>
#include <vector>

#include "nce/error.hpp"
#include "nce/model.hpp"

namespace nce {

struct EvalResult {
  double kl = 0.0;
  double d_metric = 0.0;
  double worst_tv = 0.0;  // max over x of the total-variation distance
};

// KL(true || estimated), averaged over inputs under p_X.
inline double kl_divergence(const ConditionalProblem& problem, const ScoringFunction& sf,
                            const ParamVector& theta_hat) {
  double total = 0.0;
  for (Input x = 0; x < problem.m_x(); ++x) {
    const auto s = sf.context(theta_hat, x).all_scores();
    const double lse = log_sum_exp(std::span<const double>(s));
    if (!std::isfinite(lse)) throw NumericError("kl_divergence: estimated conditional is not finite");
    double row = 0.0;
    for (Label y = 0; y < problem.m_y(); ++y) {
      const double p = problem.p_y_given_x(x, y);
      const double log_q = s[static_cast<size_t>(y)] - lse;
      if (std::exp(log_q) == 0.0 && p > 0.0)
        throw NumericError("kl_divergence: estimated probability is exactly zero");
      row += p * (std::log(p) - log_q);
    }
    total += problem.p_x(x) * row;
  }
  return std::max(0.0, total);
}

inline double d_metric(const ConditionalProblem& problem, const ScoringFunction& sf, const ParamVector& theta_hat) {
  double total = 0.0;
  for (Input x = 0; x < problem.m_x(); ++x) {
    const Vector q = cond_prob(sf, theta_hat, x);
    for (Label y = 0; y < problem.m_y(); ++y) {
      const double diff = q(y) - problem.p_y_given_x(x, y);
      total += problem.joint(x, y) * diff * diff;
    }
  }
  return total;
}

inline double worst_total_variation(const ConditionalProblem& problem, const ScoringFunction& sf,
                                    const ParamVector& theta_hat) {
  double worst = 0.0;
  for (Input x = 0; x < problem.m_x(); ++x) {
    const Vector q = cond_prob(sf, theta_hat, x);
    double tv = 0.0;
    for (Label y = 0; y < problem.m_y(); ++y) tv += std::abs(q(y) - problem.p_y_given_x(x, y));
    worst = std::max(worst, 0.5 * tv);
  }
  return worst;
}

inline EvalResult evaluate(const ConditionalProblem& problem, const ScoringFunction& sf, const ParamVector& theta_hat) {
  return {kl_divergence(problem, sf, theta_hat), d_metric(problem, sf, theta_hat),
          worst_total_variation(problem, sf, theta_hat)};
}

// exp(-mean log p(y_t | x_t)) over a stream of (history id, next token) pairs.
inline double perplexity(const ScoringFunction& sf, const ParamVector& theta, std::span<const Input> histories,
                         std::span<const Label> targets) {
  if (histories.empty()) throw DomainError("perplexity: empty token stream");
  if (histories.size() != targets.size()) throw ConfigError("perplexity: histories and targets differ in length");
  std::vector<double> s(static_cast<size_t>(sf.num_labels()));
  double nll = 0.0;
  Input cached = -1;
  double lse = 0.0;
  for (size_t t = 0; t < histories.size(); ++t) {
    if (histories[t] != cached) {
      cached = histories[t];
      sf.context(theta, cached).scores(s);
      lse = log_sum_exp(std::span<const double>(s));
    }
    nll += lse - s[static_cast<size_t>(targets[t])];
  }
  return std::exp(nll / static_cast<double>(histories.size()));
}

}  // namespace nce
