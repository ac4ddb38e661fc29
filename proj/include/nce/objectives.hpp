#pragma once

// Sampled and population objectives for ranking NCE, binary NCE and maximum
// likelihood, their gradients, the label posteriors of the ranking task and the
// partition-function regularizer.

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nce/error.hpp"
#include "nce/model.hpp"
#include "nce/numeric.hpp"
#include "nce/parallel.hpp"
#include "nce/rng.hpp"
#include "nce/sampling.hpp"

namespace nce {

// Non-owning view of a dataset (or a minibatch of one).
struct DatasetView {
  std::span<const Input> x;
  std::span<const Label> y;
  std::span<const Label> negatives;
  int K = 0;

  DatasetView() = default;
  DatasetView(const Dataset& d) : x(d.x), y(d.y), negatives(d.negatives), K(d.K) {}  // NOLINT
  DatasetView(std::span<const Input> xs, std::span<const Label> ys, std::span<const Label> negs, int k)
      : x(xs), y(ys), negatives(negs), K(k) {}

  size_t size() const { return x.size(); }
  std::span<const Label> negatives_of(size_t i) const {
    return negatives.subspan(i * static_cast<size_t>(K), static_cast<size_t>(K));
  }
  DatasetView slice(size_t begin, size_t end) const {
    return DatasetView(x.subspan(begin, end - begin), y.subspan(begin, end - begin),
                       K ? negatives.subspan(begin * K, (end - begin) * K) : negatives, K);
  }
};

struct BinaryParams {
  ParamVector theta;
  double gamma = 0.0;

  // Flat (theta, gamma) layout used by the optimizer.
  Vector packed() const {
    Vector v(theta.size() + 1);
    v << theta, gamma;
    return v;
  }
  static BinaryParams unpack(const Vector& v) {
    return {v.head(v.size() - 1), v(v.size() - 1)};
  }
};

struct ValueAndGradient {
  double value = 0.0;
  Vector grad;
};

inline double shifted_score(const ScoringFunction& sf, const ParamVector& theta,
                            const NoiseDistribution& noise, Input x, Label y) {
  if (y < 0 || y >= noise.size()) throw ConfigError("label out of noise-distribution range");
  if (!(noise.prob(y) > 0.0)) throw DomainError("shifted score: zero noise mass");
  return score(sf, theta, x, y) - noise.log_prob(y);
}

namespace detail {

inline constexpr size_t kBlock = 256;

inline void require_nonempty(const DatasetView& data, const char* what) {
  if (data.size() == 0) throw DomainError(std::string(what) + ": empty dataset");
}

inline void require_negatives(const DatasetView& data, const char* what) {
  if (data.K < 1 || data.negatives.size() != data.size() * static_cast<size_t>(data.K))
    throw ConfigError(std::string(what) + ": dataset has no n x K negatives matrix");
}

// Evaluates per-example terms in fixed blocks and reduces pairwise, so the
// result is bit-identical for any thread count. `term(i, ctx_grad)` returns the
// value of example i and adds its gradient into the supplied vector.
template <class Term>
ValueAndGradient reduce_examples(size_t n, Eigen::Index dim, bool want_grad, Term&& term) {
  const size_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> values(n);
  std::vector<Vector> grads(want_grad ? blocks : 0);
  parallel_for(blocks, [&](size_t b) {
    Vector g;
    if (want_grad) g = Vector::Zero(dim);
    const size_t end = std::min(n, (b + 1) * kBlock);
    for (size_t i = b * kBlock; i < end; ++i) values[i] = term(i, want_grad ? &g : nullptr);
    if (want_grad) grads[b] = std::move(g);
  });
  ValueAndGradient out;
  const double inv_n = 1.0 / static_cast<double>(n);
  out.value = pairwise_sum(values) * inv_n;
  if (want_grad) out.grad = pairwise_sum(std::span<const Vector>(grads), dim) * inv_n;
  return out;
}

// Dense per-cell tallies of positives (and negatives) when the table is small
// relative to the data; the binary and likelihood objectives depend on the
// sample only through these counts.
struct CellCounts {
  int m_y = 0;
  std::vector<double> pos, neg;
  double pos_at(Input x, Label y) const { return pos[static_cast<size_t>(x) * m_y + y]; }
  double neg_at(Input x, Label y) const { return neg.empty() ? 0.0 : neg[static_cast<size_t>(x) * m_y + y]; }
};

inline bool use_cell_counts(const ScoringFunction& sf, size_t terms) {
  const double cells = static_cast<double>(sf.num_inputs()) * sf.num_labels();
  return cells * 2.0 <= static_cast<double>(terms);
}

inline CellCounts cell_counts(const ScoringFunction& sf, const DatasetView& data, bool with_negatives) {
  CellCounts c;
  c.m_y = sf.num_labels();
  const size_t cells = static_cast<size_t>(sf.num_inputs()) * c.m_y;
  c.pos.assign(cells, 0.0);
  if (with_negatives) c.neg.assign(cells, 0.0);
  for (size_t i = 0; i < data.size(); ++i) {
    if (data.x[i] < 0 || data.x[i] >= sf.num_inputs())
      throw ConfigError("input index " + std::to_string(data.x[i]) + " out of range");
    sf.check_label(data.y[i]);
    const size_t row = static_cast<size_t>(data.x[i]) * c.m_y;
    c.pos[row + data.y[i]] += 1.0;
    if (with_negatives)
      for (Label yk : data.negatives_of(i)) {
        sf.check_label(yk);
        c.neg[row + yk] += 1.0;
      }
  }
  return c;
}

// Sums term(x, g) over inputs in fixed order, scaled by 1/n.
template <class Term>
ValueAndGradient reduce_inputs(int m_x, size_t n, Eigen::Index dim, bool want_grad, Term&& term) {
  std::vector<double> values(static_cast<size_t>(m_x));
  std::vector<Vector> grads(want_grad ? static_cast<size_t>(m_x) : 0);
  parallel_for(static_cast<size_t>(m_x), [&](size_t x) {
    Vector g;
    if (want_grad) g = Vector::Zero(dim);
    values[x] = term(static_cast<Input>(x), want_grad ? &g : nullptr);
    if (want_grad) grads[x] = std::move(g);
  });
  ValueAndGradient out;
  const double inv_n = 1.0 / static_cast<double>(n);
  out.value = pairwise_sum(values) * inv_n;
  if (want_grad) out.grad = pairwise_sum(std::span<const Vector>(grads), dim) * inv_n;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ranking objective

inline ValueAndGradient ranking_value_and_gradient(const ScoringFunction& sf, const ParamVector& theta,
                                                   const DatasetView& data, const NoiseDistribution& noise,
                                                   bool want_grad = true) {
  detail::require_nonempty(data, "ranking objective");
  detail::require_negatives(data, "ranking objective");
  const int K = data.K;
  return detail::reduce_examples(data.size(), sf.num_params(), want_grad, [&](size_t i, Vector* g) {
    auto ctx = sf.context(theta, data.x[i]);
    thread_local std::vector<double> buffer;
    buffer.resize(static_cast<size_t>(K) + 1);
    double* s = buffer.data();
    const auto negs = data.negatives_of(i);
    s[0] = ctx.score(data.y[i]) - noise.log_prob(data.y[i]);
    for (int k = 0; k < K; ++k) s[k + 1] = ctx.score(negs[static_cast<size_t>(k)]) - noise.log_prob(negs[static_cast<size_t>(k)]);
    const double s0 = s[0];
    const double lse = softmax_inplace(std::span<double>(s, static_cast<size_t>(K) + 1));  // s now holds q
    if (g) {
      ctx.add_grad(data.y[i], 1.0 - s[0], *g);
      for (int k = 0; k < K; ++k) ctx.add_grad(negs[static_cast<size_t>(k)], -s[k + 1], *g);
      ctx.flush(*g);
    }
    return s0 - lse;
  });
}

inline double ranking_objective(const ScoringFunction& sf, const ParamVector& theta, const DatasetView& data,
                                const NoiseDistribution& noise) {
  return ranking_value_and_gradient(sf, theta, data, noise, false).value;
}

inline Vector ranking_gradient(const ScoringFunction& sf, const ParamVector& theta, const DatasetView& data,
                               const NoiseDistribution& noise) {
  return ranking_value_and_gradient(sf, theta, data, noise, true).grad;
}

// ---------------------------------------------------------------------------
// Binary objective; gradient has length d + 1 with d/d gamma last.

// Binary objective from per-cell tallies of n examples with K negatives each.
inline ValueAndGradient binary_from_counts(const ScoringFunction& sf, const BinaryParams& bp,
                                           const detail::CellCounts& c, size_t n, const NoiseDistribution& noise,
                                           int K, bool want_grad = true) {
  if (n == 0) throw DomainError("binary objective: empty dataset");
  const double offset = bp.gamma + std::log(static_cast<double>(K));
  const Eigen::Index d = sf.num_params();
  return detail::reduce_inputs(sf.num_inputs(), n, d + 1, want_grad, [&](Input x, Vector* g) {
    auto ctx = sf.context(bp.theta, x);
    double value = 0.0, dgamma = 0.0;
    for (Label y = 0; y < sf.num_labels(); ++y) {
      const double np = c.pos_at(x, y), nn = c.neg_at(x, y);
      if (np == 0.0 && nn == 0.0) continue;
      const Logistic l = logistic(ctx.score(y) - noise.log_prob(y) - offset);
      value += np * l.log_p + nn * l.log_q;
      if (g) {
        const double w = np * (1.0 - l.p) - nn * l.p;
        ctx.add_grad(y, w, *g);
        dgamma -= w;
      }
    }
    if (g) {
      ctx.flush(*g);
      (*g)(d) += dgamma;
    }
    return value;
  });
}

inline ValueAndGradient binary_value_and_gradient(const ScoringFunction& sf, const BinaryParams& bp,
                                                  const DatasetView& data, const NoiseDistribution& noise,
                                                  bool want_grad = true) {
  detail::require_nonempty(data, "binary objective");
  detail::require_negatives(data, "binary objective");
  if (!std::isfinite(bp.gamma)) throw ConfigError("binary objective: gamma must be finite");
  const int K = data.K;
  const double offset = bp.gamma + std::log(static_cast<double>(K));
  const Eigen::Index d = sf.num_params();
  if (detail::use_cell_counts(sf, data.size() * (static_cast<size_t>(K) + 1)))
    return binary_from_counts(sf, bp, detail::cell_counts(sf, data, true), data.size(), noise, K, want_grad);
  return detail::reduce_examples(data.size(), d + 1, want_grad, [&](size_t i, Vector* g) {
    auto ctx = sf.context(bp.theta, data.x[i]);
    const Label y0 = data.y[i];
    const double t0 = ctx.score(y0) - noise.log_prob(y0) - offset;
    const Logistic l0 = logistic(t0);
    double value = l0.log_p;
    double dgamma = 0.0;
    if (g) {
      const double w = 1.0 - l0.p;
      ctx.add_grad(y0, w, *g);
      dgamma -= w;
    }
    for (Label yk : data.negatives_of(i)) {
      const double t = ctx.score(yk) - noise.log_prob(yk) - offset;
      const Logistic l = logistic(t);
      value += l.log_q;
      if (g) {
        const double w = l.p;
        ctx.add_grad(yk, -w, *g);
        dgamma += w;
      }
    }
    if (g) {
      ctx.flush(*g);
      (*g)(d) += dgamma;
    }
    return value;
  });
}

inline double binary_objective(const ScoringFunction& sf, const BinaryParams& bp, const DatasetView& data,
                               const NoiseDistribution& noise) {
  return binary_value_and_gradient(sf, bp, data, noise, false).value;
}

inline Vector binary_gradient(const ScoringFunction& sf, const BinaryParams& bp, const DatasetView& data,
                              const NoiseDistribution& noise) {
  return binary_value_and_gradient(sf, bp, data, noise, true).grad;
}

// ---------------------------------------------------------------------------
// Maximum likelihood (negatives ignored)

inline ValueAndGradient mle_from_counts(const ScoringFunction& sf, const ParamVector& theta,
                                        const detail::CellCounts& c, size_t n, bool want_grad = true) {
  if (n == 0) throw DomainError("mle objective: empty dataset");
  const int m_y = sf.num_labels();
  return detail::reduce_inputs(sf.num_inputs(), n, sf.num_params(), want_grad, [&](Input x, Vector* g) {
    double total = 0.0;
    for (Label y = 0; y < m_y; ++y) total += c.pos_at(x, y);
    if (total == 0.0) return 0.0;
    auto ctx = sf.context(theta, x);
    std::vector<double> s(static_cast<size_t>(m_y));
    ctx.scores(s);
    double value = 0.0;
    for (Label y = 0; y < m_y; ++y) value += c.pos_at(x, y) * s[static_cast<size_t>(y)];
    const double lse = softmax_inplace(s);
    value -= total * lse;
    if (g) {
      for (Label y = 0; y < m_y; ++y) ctx.add_grad(y, c.pos_at(x, y) - total * s[static_cast<size_t>(y)], *g);
      ctx.flush(*g);
    }
    return value;
  });
}

inline ValueAndGradient mle_value_and_gradient(const ScoringFunction& sf, const ParamVector& theta,
                                               const DatasetView& data, bool want_grad = true) {
  detail::require_nonempty(data, "mle objective");
  const int m_y = sf.num_labels();
  if (detail::use_cell_counts(sf, data.size() * static_cast<size_t>(m_y)))
    return mle_from_counts(sf, theta, detail::cell_counts(sf, data, false), data.size(), want_grad);
  return detail::reduce_examples(data.size(), sf.num_params(), want_grad, [&](size_t i, Vector* g) {
    auto ctx = sf.context(theta, data.x[i]);
    std::vector<double> s(static_cast<size_t>(m_y));
    ctx.scores(s);
    const double sy = s[static_cast<size_t>(data.y[i])];
    const double lse = log_sum_exp(std::span<const double>(s));
    if (g) {
      for (Label y = 0; y < m_y; ++y) {
        const double p = std::exp(s[static_cast<size_t>(y)] - lse);
        ctx.add_grad(y, (y == data.y[i] ? 1.0 : 0.0) - p, *g);
      }
      ctx.flush(*g);
    }
    return sy - lse;
  });
}

inline double mle_objective(const ScoringFunction& sf, const ParamVector& theta, const DatasetView& data) {
  return mle_value_and_gradient(sf, theta, data, false).value;
}

inline Vector mle_gradient(const ScoringFunction& sf, const ParamVector& theta, const DatasetView& data) {
  return mle_value_and_gradient(sf, theta, data, true).grad;
}

// ---------------------------------------------------------------------------
// Posteriors over the position of the true label among K+1 candidates

struct PosteriorTable {
  Vector q;        // model posterior, q_k proportional to exp(shifted score of candidate k)
  Vector beta;     // true posterior, proportional to p(y_k|x) / p_N(y_k)
  double alpha = 0.0;
  double cross_entropy = 0.0;  // -sum_k beta_k log q_k  (>= 0)
};

inline PosteriorTable posteriors(const ScoringFunction& sf, const ParamVector& theta,
                                 const ConditionalProblem& problem, const NoiseDistribution& noise, Input x,
                                 std::span<const Label> candidates) {
  const size_t n = candidates.size();
  if (n < 2) throw ConfigError("posteriors: need at least two candidates");
  auto ctx = sf.context(theta, x);
  std::vector<double> shifted(n), log_ratio(n);
  for (size_t k = 0; k < n; ++k) {
    const Label y = candidates[k];
    shifted[k] = ctx.score(y) - noise.log_prob(y);
    log_ratio[k] = std::log(problem.p_y_given_x(x, y)) - noise.log_prob(y);
  }
  const double lse_q = log_sum_exp(std::span<const double>(shifted));
  const double lse_b = log_sum_exp(std::span<const double>(log_ratio));
  PosteriorTable t;
  t.q.resize(static_cast<Eigen::Index>(n));
  t.beta.resize(static_cast<Eigen::Index>(n));
  double log_noise_all = 0.0;
  for (size_t k = 0; k < n; ++k) log_noise_all += noise.log_prob(candidates[k]);
  for (size_t k = 0; k < n; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    t.q(kk) = std::exp(shifted[k] - lse_q);
    t.beta(kk) = std::exp(log_ratio[k] - lse_b);
    t.cross_entropy -= t.beta(kk) * (shifted[k] - lse_q);
    // p_XY(x, y_k) prod_{j != k} p_N(y_j) = p_X(x) p_N(all) p(y_k|x)/p_N(y_k)
    t.alpha += std::exp(std::log(problem.p_x(x)) + log_noise_all + log_ratio[k]);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Population objectives

struct PopulationMode {
  enum class Kind { kExact, kMonteCarlo };
  Kind kind = Kind::kExact;
  size_t samples = 0;
  uint64_t seed = 0;

  static PopulationMode exact() { return {}; }
  static PopulationMode monte_carlo(size_t m, uint64_t seed = 0) { return {Kind::kMonteCarlo, m, seed}; }

  static PopulationMode parse(const std::string& s, uint64_t seed = 0) {
    if (s == "exact") return exact();
    if (s.rfind("mc:", 0) == 0) {
      const long long m = std::stoll(s.substr(3));
      if (m < 32) throw ConfigError("--mode mc:<M> needs M >= 32");
      return monte_carlo(static_cast<size_t>(m), seed);
    }
    throw ConfigError("--mode must be 'exact' or 'mc:<M>', got '" + s + "'");
  }
  std::string str() const { return kind == Kind::kExact ? "exact" : "mc:" + std::to_string(samples); }
};

struct PopulationEstimate {
  double value = 0.0;
  double std_error = 0.0;  // 0 in exact mode
  PopulationMode mode;
};

inline constexpr double kEnumerationBudget = 1e7;

inline void check_enumeration_budget(double terms, const char* what) {
  if (terms > kEnumerationBudget) {
    std::ostringstream os;
    os << what << ": exact enumeration needs " << terms << " terms, budget is " << kEnumerationBudget
       << "; use Monte Carlo mode";
    throw BudgetError(os.str(), terms);
  }
}

namespace detail {

// Calls fn(tuple) for every tuple in {0..m-1}^len in lexicographic order.
template <class Fn>
void for_each_tuple(int m, int len, Fn&& fn) {
  std::vector<Label> t(static_cast<size_t>(len), 0);
  while (true) {
    fn(std::span<const Label>(t));
    int pos = len - 1;
    while (pos >= 0 && ++t[static_cast<size_t>(pos)] == m) t[static_cast<size_t>(pos--)] = 0;
    if (pos < 0) return;
  }
}

// Batch-means standard error over equally sized batches.
inline double batch_means_stderr(std::span<const double> batch_means) {
  const double b = static_cast<double>(batch_means.size());
  double mean = 0.0;
  for (double v : batch_means) mean += v;
  mean /= b;
  double ss = 0.0;
  for (double v : batch_means) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (b - 1.0) / b);
}

}  // namespace detail

// Exact expected ranking objective (and its gradient) by enumeration of all
// (x, y_0, ..., y_K).
inline ValueAndGradient population_ranking_value_and_gradient(const ScoringFunction& sf, const ParamVector& theta,
                                                              const ConditionalProblem& problem,
                                                              const NoiseDistribution& noise, int K,
                                                              bool want_grad = true) {
  if (K < 1) throw ConfigError("K: must be >= 1");
  const int m_x = problem.m_x(), m_y = problem.m_y();
  check_enumeration_budget(m_x * std::pow(static_cast<double>(m_y), K + 1), "population ranking objective");
  const Eigen::Index d = sf.num_params();
  std::vector<double> terms;
  std::vector<Vector> grads;
  std::vector<double> shifted(static_cast<size_t>(m_y));
  std::vector<double> s(static_cast<size_t>(K) + 1);
  for (Input x = 0; x < m_x; ++x) {
    auto ctx = sf.context(theta, x);
    for (Label y = 0; y < m_y; ++y) shifted[static_cast<size_t>(y)] = ctx.score(y) - noise.log_prob(y);
    Matrix gy;
    if (want_grad) {
      gy.resize(d, m_y);
      for (Label y = 0; y < m_y; ++y) gy.col(y) = score_grad(sf, theta, x, y);
    }
    std::vector<double> x_terms;
    Vector xg = Vector::Zero(want_grad ? d : 0);
    detail::for_each_tuple(m_y, K + 1, [&](std::span<const Label> t) {
      double w = problem.joint(x, t[0]);
      for (int k = 1; k <= K; ++k) w *= noise.prob(t[static_cast<size_t>(k)]);
      for (int k = 0; k <= K; ++k) s[static_cast<size_t>(k)] = shifted[static_cast<size_t>(t[static_cast<size_t>(k)])];
      const double lse = log_sum_exp(std::span<const double>(s));
      x_terms.push_back(w * (s[0] - lse));
      if (want_grad) {
        xg += w * gy.col(t[0]);
        for (int k = 0; k <= K; ++k) xg -= w * std::exp(s[static_cast<size_t>(k)] - lse) * gy.col(t[static_cast<size_t>(k)]);
      }
    });
    terms.push_back(pairwise_sum(x_terms));
    if (want_grad) grads.push_back(std::move(xg));
  }
  ValueAndGradient out;
  out.value = pairwise_sum(terms);
  if (want_grad) out.grad = pairwise_sum(std::span<const Vector>(grads), d);
  return out;
}

inline PopulationEstimate population_ranking_objective(const ScoringFunction& sf, const ParamVector& theta,
                                                       const ConditionalProblem& problem,
                                                       const NoiseDistribution& noise, int K,
                                                       const PopulationMode& mode = PopulationMode::exact()) {
  if (mode.kind == PopulationMode::Kind::kExact)
    return {population_ranking_value_and_gradient(sf, theta, problem, noise, K, false).value, 0.0, mode};
  if (mode.samples < 32) throw ConfigError("Monte Carlo mode needs at least 32 samples");
  constexpr size_t kBatches = 32;
  const size_t per_batch = mode.samples / kBatches;
  std::vector<double> px(problem.p_x.data(), problem.p_x.data() + problem.m_x());
  std::vector<double> row(static_cast<size_t>(problem.m_y()));
  std::vector<double> batch_means(kBatches);
  std::vector<double> s(static_cast<size_t>(K) + 1);
  const Stream base(mode.seed, 0x706f70ULL);
  for (size_t b = 0; b < kBatches; ++b) {
    std::vector<double> vals(per_batch);
    for (size_t j = 0; j < per_batch; ++j) {
      Stream rng = base.substream(b * per_batch + j);
      const Input x = sample_categorical(px, rng);
      for (Label y = 0; y < problem.m_y(); ++y) row[static_cast<size_t>(y)] = problem.p_y_given_x(x, y);
      auto ctx = sf.context(theta, x);
      const Label y0 = sample_categorical(row, rng);
      s[0] = ctx.score(y0) - noise.log_prob(y0);
      for (int k = 1; k <= K; ++k) {
        const Label yk = noise.sample(rng);
        s[static_cast<size_t>(k)] = ctx.score(yk) - noise.log_prob(yk);
      }
      vals[j] = s[0] - log_sum_exp(std::span<const double>(s));
    }
    batch_means[b] = pairwise_sum(vals) / static_cast<double>(per_batch);
  }
  PopulationEstimate est;
  est.mode = mode;
  est.value = pairwise_sum(batch_means) / static_cast<double>(kBatches);
  est.std_error = detail::batch_means_stderr(batch_means);
  return est;
}

// Exact expected binary objective: a sum over X x Y only.
inline ValueAndGradient population_binary_value_and_gradient(const ScoringFunction& sf, const BinaryParams& bp,
                                                             const ConditionalProblem& problem,
                                                             const NoiseDistribution& noise, int K,
                                                             bool want_grad = true) {
  if (K < 1) throw ConfigError("K: must be >= 1");
  const Eigen::Index d = sf.num_params();
  const double offset = bp.gamma + std::log(static_cast<double>(K));
  std::vector<double> terms;
  std::vector<Vector> grads;
  for (Input x = 0; x < problem.m_x(); ++x) {
    auto ctx = sf.context(bp.theta, x);
    Vector g = Vector::Zero(want_grad ? d + 1 : 0);
    std::vector<double> x_terms;
    for (Label y = 0; y < problem.m_y(); ++y) {
      const double t = ctx.score(y) - noise.log_prob(y) - offset;
      const double pos = problem.joint(x, y);
      const double neg = K * problem.p_x(x) * noise.prob(y);
      x_terms.push_back(pos * log_sigmoid(t) + neg * log_sigmoid(-t));
      if (want_grad) {
        // d/dt: pos (1 - sigma(t)) - neg sigma(t); dt/dgamma = -1
        const double w = pos * (1.0 - sigmoid(t)) - neg * sigmoid(t);
        ctx.add_grad(y, w, g);
        g(d) -= w;
      }
    }
    if (want_grad) ctx.flush(g);
    terms.push_back(pairwise_sum(x_terms));
    if (want_grad) grads.push_back(std::move(g));
  }
  ValueAndGradient out;
  out.value = pairwise_sum(terms);
  if (want_grad) out.grad = pairwise_sum(std::span<const Vector>(grads), d + 1);
  return out;
}

inline double population_binary_objective(const ScoringFunction& sf, const BinaryParams& bp,
                                          const ConditionalProblem& problem, const NoiseDistribution& noise,
                                          int K) {
  return population_binary_value_and_gradient(sf, bp, problem, noise, K, false).value;
}

// ---------------------------------------------------------------------------
// Regularizer alpha/n sum_i (log (1/m) sum_j exp(shifted score of noise draw j))^2

struct RegularizerConfig {
  double alpha = 0.0;
  int m = 1;
  uint64_t seed = 0;
  uint64_t stream = 0x726567ULL;

  void validate() const {
    if (!(alpha >= 0.0)) throw ConfigError("regularizer: alpha must be >= 0");
    if (m < 1) throw ConfigError("regularizer: m must be >= 1");
  }
};

// Noise draws of example i at a given epoch.
inline void regularizer_draws(const RegularizerConfig& cfg, const NoiseDistribution& noise, uint64_t epoch,
                              uint64_t example, std::span<Label> out) {
  Stream rng = Stream(cfg.seed, cfg.stream).substream(epoch).substream(example);
  for (Label& y : out) y = noise.sample(rng);
}

// `example_ids` maps row i of the view to the example index used to key its
// noise draws (defaults to i).
inline ValueAndGradient regularizer(const ScoringFunction& sf, const ParamVector& theta, const DatasetView& data,
                                    const NoiseDistribution& noise, const RegularizerConfig& cfg,
                                    uint64_t epoch = 0, std::span<const size_t> example_ids = {},
                                    bool want_grad = true) {
  cfg.validate();
  detail::require_nonempty(data, "regularizer");
  if (cfg.alpha == 0.0) return {0.0, Vector::Zero(sf.num_params())};
  const double log_m = std::log(static_cast<double>(cfg.m));
  auto out = detail::reduce_examples(data.size(), sf.num_params(), want_grad, [&](size_t i, Vector* g) {
    std::vector<Label> draws(static_cast<size_t>(cfg.m));
    regularizer_draws(cfg, noise, epoch, example_ids.empty() ? i : example_ids[i], draws);
    auto ctx = sf.context(theta, data.x[i]);
    std::vector<double> s(draws.size());
    for (size_t j = 0; j < draws.size(); ++j) s[j] = ctx.score(draws[j]) - noise.log_prob(draws[j]);
    const double lse = log_sum_exp(std::span<const double>(s));
    const double log_z = lse - log_m;
    if (g) {
      for (size_t j = 0; j < draws.size(); ++j) ctx.add_grad(draws[j], 2.0 * log_z * std::exp(s[j] - lse), *g);
      ctx.flush(*g);
    }
    return log_z * log_z;
  });
  out.value *= cfg.alpha;
  if (want_grad) out.grad *= cfg.alpha;
  return out;
}

// ---------------------------------------------------------------------------
// CSV export of objective evaluations

struct ObjectiveRecord {
  std::string objective;
  double value = 0.0;
  double grad_norm = 0.0;
  size_t n = 0;
  int K = 0;
  uint64_t seed = 0;

  static std::string csv_header() { return "objective,value,grad_norm,n,K,seed"; }
  std::string csv_row() const {
    std::ostringstream os;
    os.precision(17);
    os << objective << ',' << value << ',' << grad_norm << ',' << n << ',' << K << ',' << seed;
    return os.str();
  }
};

}  // namespace nce
