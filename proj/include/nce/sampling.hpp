#pragma once

// Noise distributions, negative sampling and synthetic problem/data generation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "nce/error.hpp"
#include "nce/model.hpp"
#include "nce/numeric.hpp"
#include "nce/rng.hpp"

namespace nce {

class NoiseDistribution {
 public:
  NoiseDistribution() = default;

  explicit NoiseDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) throw ConfigError("noise distribution: needs at least 2 labels");
    double total = 0.0;
    for (size_t y = 0; y < probs_.size(); ++y) {
      if (!(probs_[y] > 0.0) || !std::isfinite(probs_[y]))
        throw DomainError("noise distribution: p_N(" + std::to_string(y) + ") must be > 0");
      total += probs_[y];
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("noise distribution: does not sum to 1");
    cumulative_.resize(probs_.size());
    double c = 0.0;
    for (size_t y = 0; y < probs_.size(); ++y) {
      c += probs_[y];
      cumulative_[y] = c;
    }
    cumulative_.back() = 1.0;
    for (size_t y = 1; y < cumulative_.size(); ++y)
      if (!(cumulative_[y] > cumulative_[y - 1]))
        throw NumericError("noise distribution: cumulative table is not strictly increasing");
    log_probs_.resize(probs_.size());
    for (size_t y = 0; y < probs_.size(); ++y) log_probs_[y] = std::log(probs_[y]);
  }

  static NoiseDistribution uniform(int m_y) {
    if (m_y < 2) throw ConfigError("noise distribution: needs at least 2 labels");
    return NoiseDistribution(std::vector<double>(static_cast<size_t>(m_y), 1.0 / m_y));
  }

  // Normalizes arbitrary positive weights.
  static NoiseDistribution from_weights(std::span<const double> w) {
    double total = 0.0;
    for (double v : w) total += v;
    std::vector<double> p(w.begin(), w.end());
    for (double& v : p) v /= total;
    // Absorb rounding so the sum is 1 to the last ulp the check can see.
    double s = 0.0;
    for (double v : p) s += v;
    p[std::distance(p.begin(), std::max_element(p.begin(), p.end()))] += 1.0 - s;
    return NoiseDistribution(std::move(p));
  }

  int size() const { return static_cast<int>(probs_.size()); }
  double prob(Label y) const { return probs_[static_cast<size_t>(y)]; }
  double log_prob(Label y) const { return log_probs_[static_cast<size_t>(y)]; }
  std::span<const double> probs() const { return probs_; }
  std::span<const double> cumulative() const { return cumulative_; }

  Label sample(Stream& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return static_cast<Label>(std::min<ptrdiff_t>(it - cumulative_.begin(), size() - 1));
  }

  uint64_t hash() const { return fnv1a(std::span<const double>(probs_)); }

 private:
  std::vector<double> probs_;
  std::vector<double> cumulative_;
  std::vector<double> log_probs_;
};

inline Label sample_categorical(std::span<const double> probs, Stream& rng) {
  double u = rng.uniform();
  for (size_t i = 0; i + 1 < probs.size(); ++i) {
    if (u < probs[i]) return static_cast<Label>(i);
    u -= probs[i];
  }
  return static_cast<Label>(probs.size() - 1);
}

struct SamplingConfig {
  int K = 4;
  uint64_t seed = 0;
  uint64_t stream = 0;

  void validate() const {
    if (K < 1) throw ConfigError("K: must be >= 1, got " + std::to_string(K));
  }
};

struct Provenance {
  uint64_t seed = 0;
  uint64_t stream = 0;
  int K = 0;
  uint64_t noise_hash = 0;
};

// n positive pairs with an n x K matrix of negative labels.
struct Dataset {
  std::vector<Input> x;
  std::vector<Label> y;
  std::vector<Label> negatives;  // row-major n x K
  int K = 0;
  Provenance provenance;

  size_t size() const { return x.size(); }
  std::span<const Label> negatives_of(size_t i) const {
    return {negatives.data() + i * static_cast<size_t>(K), static_cast<size_t>(K)};
  }

  void validate(int m_x, int m_y) const {
    if (y.size() != x.size()) throw ConfigError("dataset: x and y lengths differ");
    if (negatives.size() != x.size() * static_cast<size_t>(K))
      throw ConfigError("dataset: negatives matrix is not n x K");
    for (size_t i = 0; i < x.size(); ++i) {
      if (x[i] < 0 || x[i] >= m_x) throw ConfigError("dataset: x index out of range at row " + std::to_string(i));
      if (y[i] < 0 || y[i] >= m_y) throw ConfigError("dataset: y index out of range at row " + std::to_string(i));
    }
    for (Label v : negatives)
      if (v < 0 || v >= m_y) throw ConfigError("dataset: negative label out of range");
  }

  uint64_t hash() const {
    uint64_t h = fnv1a(std::string_view(reinterpret_cast<const char*>(x.data()), x.size() * sizeof(Input)));
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(y.data()), y.size() * sizeof(Label)), h);
    return fnv1a(std::string_view(reinterpret_cast<const char*>(negatives.data()),
                                  negatives.size() * sizeof(Label)),
                 h);
  }
};

// Draws an n x K matrix of i.i.d. labels from p_N. Row i uses its own
// sub-stream, so rows can be generated in any order. Epoch > 0 selects an
// independent redraw for resample-per-epoch training.
inline std::vector<Label> sample_negatives(const SamplingConfig& cfg, const NoiseDistribution& noise,
                                           size_t n, uint64_t epoch = 0) {
  cfg.validate();
  Stream base(cfg.seed, cfg.stream);
  if (epoch != 0) base = base.substream(0x45504f4348ULL + epoch);
  std::vector<Label> out(n * static_cast<size_t>(cfg.K));
  for (size_t i = 0; i < n; ++i) {
    Stream rng = base.substream(i);
    for (int k = 0; k < cfg.K; ++k) out[i * static_cast<size_t>(cfg.K) + static_cast<size_t>(k)] = noise.sample(rng);
  }
  return out;
}

// Noise proportional to count^power; zero counts are replaced by one first.
inline NoiseDistribution unigram_power(std::span<const long long> counts, double power) {
  if (power < 0 || !std::isfinite(power)) throw DomainError("unigram_power: power must be >= 0");
  if (counts.size() < 2) throw DomainError("unigram_power: needs at least two labels");
  bool any_positive = false;
  for (long long c : counts) {
    if (c < 0) throw DomainError("unigram_power: counts must be nonnegative");
    any_positive |= c > 0;
  }
  if (!any_positive) throw DomainError("unigram_power: all counts are zero");
  std::vector<double> w(counts.size());
  for (size_t i = 0; i < counts.size(); ++i)
    w[i] = std::pow(static_cast<double>(std::max<long long>(counts[i], 1)), power);
  return NoiseDistribution::from_weights(w);
}

namespace detail {

// One coordinate-shared mean from {-2, 0, +2} with equal weight, unit variance noise.
inline void gaussian_mixture_rows(Stream& rng, int rows, int cols, std::vector<double>& out) {
  static constexpr double kMeans[3] = {-2.0, 0.0, 2.0};
  out.resize(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    const double mean = kMeans[rng.below(3)];
    for (int c = 0; c < cols; ++c) out[static_cast<size_t>(r) * cols + c] = mean + rng.normal();
  }
}

}  // namespace detail

// Linear-softmax simulation problem: inputs and label weights drawn from
// separate three-component Gaussian mixtures, p_X uniform.
inline ConditionalProblem make_synthetic_problem(int d, int m_x, int m_y, uint64_t seed) {
  if (d < 1 || m_x < 1) throw ConfigError("synth: d and m_x must be >= 1");
  if (m_y < 2) throw ConfigError("m_y: must be >= 2, got " + std::to_string(m_y));
  Stream features_rng = Stream(seed, 0).substream(1);
  Stream theta_rng = Stream(seed, 0).substream(2);
  std::vector<double> rows, weights;
  detail::gaussian_mixture_rows(features_rng, m_x, d, rows);
  detail::gaussian_mixture_rows(theta_rng, m_y, d, weights);
  auto sf = ScoringFunction::linear_softmax(m_y, InputSpace(m_x, d, rows));
  ParamVector theta = Eigen::Map<const Vector>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  return problem_from_model(sf, theta, Vector::Constant(m_x, 1.0 / m_x));
}

// Linear-features problem satisfying the self-normalization assumption: every
// input sees the same set of label feature vectors, permuted, so Z(x; theta*)
// is constant in x.
inline ConditionalProblem make_self_normalized_problem(int m_x, int m_y, int d, uint64_t seed,
                                                       double scale = 1.0) {
  if (m_x < 1 || m_y < 2 || d < 1) throw ConfigError("self-normalized problem: bad dimensions");
  Stream rng = Stream(seed, 0).substream(3);
  std::vector<double> base(static_cast<size_t>(m_y) * d);
  for (double& v : base) v = scale * rng.normal();
  ParamVector theta(d);
  for (int k = 0; k < d; ++k) theta(k) = rng.normal();
  std::vector<double> table(static_cast<size_t>(m_x) * m_y * d);
  std::vector<int> perm(static_cast<size_t>(m_y));
  for (int x = 0; x < m_x; ++x) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = m_y - 1; i > 0; --i) std::swap(perm[static_cast<size_t>(i)], perm[rng.below(static_cast<uint64_t>(i) + 1)]);
    for (int y = 0; y < m_y; ++y)
      for (int k = 0; k < d; ++k)
        table[(static_cast<size_t>(x) * m_y + y) * d + k] = base[static_cast<size_t>(perm[static_cast<size_t>(y)]) * d + k];
  }
  Vector p_x(m_x);
  for (int x = 0; x < m_x; ++x) p_x(x) = 0.5 + rng.uniform();
  p_x /= p_x.sum();
  auto sf = ScoringFunction::linear_features(m_x, m_y, d, std::move(table));
  std::vector<double> s(static_cast<size_t>(m_y));
  for (int y = 0; y < m_y; ++y) {
    double v = 0;
    for (int k = 0; k < d; ++k) v += theta(k) * base[static_cast<size_t>(y) * d + k];
    s[static_cast<size_t>(y)] = v;
  }
  const double gamma = log_sum_exp(s);
  return problem_from_model(sf, theta, p_x, gamma);
}

// Generic Assumption-1 problem: dense Gaussian features, Gaussian theta*,
// random positive p_X.
inline ConditionalProblem make_random_linear_problem(int m_x, int m_y, int d, uint64_t seed,
                                                     double scale = 1.0) {
  if (m_x < 1 || m_y < 2 || d < 1) throw ConfigError("random problem: bad dimensions");
  Stream rng = Stream(seed, 0).substream(4);
  std::vector<double> table(static_cast<size_t>(m_x) * m_y * d);
  for (double& v : table) v = rng.normal();
  ParamVector theta(d);
  for (int k = 0; k < d; ++k) theta(k) = scale * rng.normal();
  Vector p_x(m_x);
  for (int x = 0; x < m_x; ++x) p_x(x) = 0.5 + rng.uniform();
  p_x /= p_x.sum();
  return problem_from_model(ScoringFunction::linear_features(m_x, m_y, d, std::move(table)), theta, p_x);
}

// Two inputs, two labels; s(x1, y1) = eta_1 and every other cell eta_2, with
// eta = log theta and theta* = (1, 3).
inline ConditionalProblem counterexample_problem() {
  std::vector<double> table = {1, 0, 0, 1,   // x1: y1 -> e1, y2 -> e2
                               0, 1, 0, 1};  // x2: both -> e2
  auto sf = ScoringFunction::linear_features(2, 2, 2, std::move(table));
  ParamVector eta(2);
  eta << std::log(1.0), std::log(3.0);
  return problem_from_model(sf, eta, Vector::Constant(2, 0.5));
}

// Noise for tabular problems: "uniform", "unigram" (the label marginal p_Y)
// or "unigram-pow:<p>" (p_Y raised to p, renormalized).
inline NoiseDistribution noise_for_problem(const std::string& spec, const ConditionalProblem& problem) {
  if (spec == "uniform") return NoiseDistribution::uniform(problem.m_y());
  double power = 1.0;
  if (spec.rfind("unigram-pow:", 0) == 0) {
    try {
      power = std::stod(spec.substr(12));
    } catch (const std::exception&) {
      throw ConfigError("--noise unigram-pow:<p> needs a number");
    }
    if (!(power >= 0.0)) throw ConfigError("--noise unigram-pow:<p> needs p >= 0");
  } else if (spec != "unigram") {
    throw ConfigError("--noise must be uniform, unigram or unigram-pow:<p>, got '" + spec + "'");
  }
  std::vector<double> w(static_cast<size_t>(problem.m_y()), 0.0);
  for (Input x = 0; x < problem.m_x(); ++x)
    for (Label y = 0; y < problem.m_y(); ++y) w[static_cast<size_t>(y)] += problem.joint(x, y);
  for (double& v : w) v = std::pow(v, power);
  return NoiseDistribution::from_weights(w);
}

// Samples x ~ p_X, y | x ~ p_{Y|X} and the negatives of every example.
inline Dataset generate_dataset(const ConditionalProblem& problem, size_t n, const SamplingConfig& cfg,
                                const NoiseDistribution& noise) {
  cfg.validate();
  if (noise.size() != problem.m_y()) throw ConfigError("noise distribution size does not match m_y");
  Dataset data;
  data.K = cfg.K;
  data.provenance = {cfg.seed, cfg.stream, cfg.K, noise.hash()};
  data.x.resize(n);
  data.y.resize(n);
  const Stream base = Stream(cfg.seed ^ 0x706f736974697665ULL, cfg.stream);
  std::vector<double> px(problem.p_x.data(), problem.p_x.data() + problem.m_x());
  std::vector<double> row(static_cast<size_t>(problem.m_y()));
  for (size_t i = 0; i < n; ++i) {
    Stream rng = base.substream(i);
    const Input x = sample_categorical(px, rng);
    for (Label y = 0; y < problem.m_y(); ++y) row[static_cast<size_t>(y)] = problem.p_y_given_x(x, y);
    data.x[i] = x;
    data.y[i] = sample_categorical(row, rng);
  }
  data.negatives = sample_negatives(cfg, noise, n);
  return data;
}

}  // namespace nce
