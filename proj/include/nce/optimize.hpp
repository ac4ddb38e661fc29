#pragma once

// Maximizes the selected objective: full-batch BFGS with backtracking for
// desk-scale problems, and a seeded minibatch SGD loop
// for the language-model experiment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nce/error.hpp"
#include "nce/evaluation.hpp"
#include "nce/model.hpp"
#include "nce/objectives.hpp"
#include "nce/rng.hpp"
#include "nce/sampling.hpp"

namespace nce {

enum class ObjectiveKind { kRanking, kBinary, kMle, kPopulationRanking, kPopulationBinary };

inline std::string to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::kRanking: return "ranking";
    case ObjectiveKind::kBinary: return "binary";
    case ObjectiveKind::kMle: return "mle";
    case ObjectiveKind::kPopulationRanking: return "population-ranking";
    case ObjectiveKind::kPopulationBinary: return "population-binary";
  }
  return "?";
}

inline ObjectiveKind parse_objective(const std::string& s) {
  if (s == "ranking") return ObjectiveKind::kRanking;
  if (s == "binary") return ObjectiveKind::kBinary;
  if (s == "mle") return ObjectiveKind::kMle;
  if (s == "population-ranking") return ObjectiveKind::kPopulationRanking;
  if (s == "population-binary") return ObjectiveKind::kPopulationBinary;
  throw ConfigError("unknown objective '" + s + "'");
}

inline bool is_binary(ObjectiveKind k) {
  return k == ObjectiveKind::kBinary || k == ObjectiveKind::kPopulationBinary;
}

struct FitConfig {
  ObjectiveKind objective = ObjectiveKind::kRanking;
  std::optional<RegularizerConfig> regularizer;
  int max_iters = 5000;
  double initial_step = 1.0;
  double tol = 1e-8;
  double gamma_lo = -30.0;
  double gamma_hi = 30.0;
  enum class Init { kZeros, kGaussian } init = Init::kZeros;
  double init_sigma = 0.1;
  uint64_t seed = 0;
  int K = 4;  // population objectives only; sampled objectives use the dataset's K

  void validate() const {
    if (!(tol > 0)) throw ConfigError("tol: must be > 0");
    if (max_iters < 1) throw ConfigError("max_iters: must be >= 1");
    if (!(gamma_lo < gamma_hi)) throw ConfigError("gamma range: need lo < hi");
    if (!(initial_step > 0)) throw ConfigError("initial step: must be > 0");
    if (K < 1) throw ConfigError("K: must be >= 1");
    if (regularizer) regularizer->validate();
  }

  uint64_t hash() const {
    std::ostringstream os;
    os.precision(17);
    os << to_string(objective) << '|' << max_iters << '|' << initial_step << '|' << tol << '|' << gamma_lo << '|'
       << gamma_hi << '|' << static_cast<int>(init) << '|' << init_sigma << '|' << seed << '|' << K;
    if (regularizer) os << "|reg" << regularizer->alpha << ',' << regularizer->m << ',' << regularizer->seed;
    return fnv1a(os.str());
  }
};

struct TracePoint {
  int iteration = 0;
  double value = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;
};

struct EstimationReport {
  ObjectiveKind objective = ObjectiveKind::kRanking;
  ParamVector theta;
  std::optional<double> gamma;
  double objective_value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<TracePoint> trace;
  uint64_t config_hash = 0;
  uint64_t data_hash = 0;
  std::optional<EvalResult> metrics;

  std::string trace_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "iter,objective,grad_norm,step\n";
    for (const auto& t : trace) os << t.iteration << ',' << t.value << ',' << t.grad_norm << ',' << t.step << '\n';
    return os.str();
  }
};

// Line search collapsed below the minimum step; carries the diagnostics.
class StallError : public NumericError {
 public:
  StallError(const std::string& what, EstimationReport partial)
      : NumericError(what), partial_(std::move(partial)) {}
  const EstimationReport& partial() const { return partial_; }

 private:
  EstimationReport partial_;
};

class InitializationError : public NumericError {
 public:
  using NumericError::NumericError;
};

// What a fit is computed from: a sampled dataset, a tabular problem, or both.
struct FitInputs {
  const Dataset* dataset = nullptr;
  const ConditionalProblem* problem = nullptr;
};

namespace detail {

inline constexpr double kAscentTolerance = 1e-12;
inline constexpr double kMinStep = 1e-18;

using ObjectiveFn = std::function<ValueAndGradient(const Vector&)>;

inline ObjectiveFn make_objective(const ScoringFunction& sf, const FitInputs& in, const NoiseDistribution& noise,
                                  const FitConfig& cfg) {
  const bool sampled = cfg.objective == ObjectiveKind::kRanking || cfg.objective == ObjectiveKind::kBinary ||
                       cfg.objective == ObjectiveKind::kMle;
  if (sampled && !in.dataset) throw ConfigError(to_string(cfg.objective) + " fit needs a dataset");
  if (!sampled && !in.problem) throw ConfigError(to_string(cfg.objective) + " fit needs a tabular problem");
  if (cfg.regularizer && !sampled) throw ConfigError("the regularizer applies to sampled objectives only");

  ObjectiveFn base;
  switch (cfg.objective) {
    case ObjectiveKind::kRanking:
      base = [&sf, &in, &noise](const Vector& v) { return ranking_value_and_gradient(sf, v, *in.dataset, noise); };
      break;
    case ObjectiveKind::kMle:
      if (detail::use_cell_counts(sf, in.dataset->size() * static_cast<size_t>(sf.num_labels()))) {
        base = [&sf, n = in.dataset->size(), c = detail::cell_counts(sf, *in.dataset, false)](const Vector& v) {
          return mle_from_counts(sf, v, c, n);
        };
      } else {
        base = [&sf, &in](const Vector& v) { return mle_value_and_gradient(sf, v, *in.dataset); };
      }
      break;
    case ObjectiveKind::kBinary:
      if (in.dataset->K >= 1 &&
          detail::use_cell_counts(sf, in.dataset->size() * (static_cast<size_t>(in.dataset->K) + 1))) {
        base = [&sf, &noise, n = in.dataset->size(), K = in.dataset->K,
                c = detail::cell_counts(sf, *in.dataset, true)](const Vector& v) {
          return binary_from_counts(sf, BinaryParams::unpack(v), c, n, noise, K);
        };
      } else {
        base = [&sf, &in, &noise](const Vector& v) {
          return binary_value_and_gradient(sf, BinaryParams::unpack(v), *in.dataset, noise);
        };
      }
      break;
    case ObjectiveKind::kPopulationRanking:
      base = [&sf, &in, &noise, K = cfg.K](const Vector& v) {
        return population_ranking_value_and_gradient(sf, v, *in.problem, noise, K);
      };
      break;
    case ObjectiveKind::kPopulationBinary:
      base = [&sf, &in, &noise, K = cfg.K](const Vector& v) {
        return population_binary_value_and_gradient(sf, BinaryParams::unpack(v), *in.problem, noise, K);
      };
      break;
  }
  if (!cfg.regularizer || cfg.regularizer->alpha == 0.0) return base;
  // Maximize objective - penalty; draws stay fixed (epoch 0) so the line search sees one function.
  return [base, &sf, &in, &noise, reg = *cfg.regularizer, binary = is_binary(cfg.objective)](const Vector& v) {
    ValueAndGradient out = base(v);
    const ParamVector theta = binary ? Vector(v.head(v.size() - 1)) : v;
    const ValueAndGradient pen = regularizer(sf, theta, *in.dataset, noise, reg, 0);
    out.value -= pen.value;
    out.grad.head(theta.size()) -= pen.grad;
    return out;
  };
}

inline Vector initial_point(const ScoringFunction& sf, const FitConfig& cfg) {
  const Eigen::Index d = sf.num_params() + (is_binary(cfg.objective) ? 1 : 0);
  Vector v = Vector::Zero(d);
  if (cfg.init == FitConfig::Init::kGaussian) {
    Stream rng(cfg.seed, 0x696e6974ULL);
    for (Eigen::Index i = 0; i < sf.num_params(); ++i) v(i) = cfg.init_sigma * rng.normal();
  }
  return v;
}

inline void clamp_gamma(Vector& v, const FitConfig& cfg) {
  if (is_binary(cfg.objective)) v(v.size() - 1) = std::clamp(v(v.size() - 1), cfg.gamma_lo, cfg.gamma_hi);
}

// Gradient with the gamma component zeroed when it pushes against an active bound.
inline Vector projected(const Vector& v, const Vector& g, const FitConfig& cfg) {
  Vector p = g;
  if (is_binary(cfg.objective)) {
    const Eigen::Index j = v.size() - 1;
    if ((v(j) <= cfg.gamma_lo && g(j) < 0) || (v(j) >= cfg.gamma_hi && g(j) > 0)) p(j) = 0.0;
  }
  return p;
}

inline void fill_report(EstimationReport& r, const Vector& v, const FitConfig& cfg) {
  if (is_binary(cfg.objective)) {
    r.theta = v.head(v.size() - 1);
    r.gamma = v(v.size() - 1);
  } else {
    r.theta = v;
    r.gamma.reset();
  }
}

}  // namespace detail

inline EstimationReport fit(const ScoringFunction& sf, const FitInputs& inputs, const NoiseDistribution& noise,
                            const FitConfig& cfg) {
  cfg.validate();
  if (noise.size() != sf.num_labels()) throw ConfigError("noise distribution size does not match the label space");
  const auto objective = detail::make_objective(sf, inputs, noise, cfg);

  EstimationReport report;
  report.objective = cfg.objective;
  report.config_hash = cfg.hash();
  if (inputs.dataset) report.data_hash = inputs.dataset->hash();

  Vector v = detail::initial_point(sf, cfg);
  detail::clamp_gamma(v, cfg);
  ValueAndGradient cur = objective(v);
  if (!std::isfinite(cur.value) || !cur.grad.allFinite())
    throw InitializationError("objective is not finite at the initial point");

  // BFGS on the negated objective; H approximates the inverse Hessian.
  const Eigen::Index d = v.size();
  Matrix H = cfg.initial_step * Matrix::Identity(d, d);
  bool fresh = true;
  Vector pg = detail::projected(v, cur.grad, cfg);
  report.trace.push_back({0, cur.value, pg.norm(), cfg.initial_step});
  int it = 0;
  while (true) {
    if (pg.norm() <= cfg.tol) {
      report.converged = true;
      break;
    }
    if (it >= cfg.max_iters) break;
    ++it;
    Vector dir = detail::projected(v, H * pg, cfg);
    if (dir.dot(pg) <= 0) {
      H = cfg.initial_step * Matrix::Identity(d, d);
      fresh = true;
      dir = pg;
    }
    double t = 1.0;
    while (true) {
      Vector cand = v + t * dir;
      detail::clamp_gamma(cand, cfg);
      ValueAndGradient next = objective(cand);
      const double slack = detail::kAscentTolerance * std::max(1.0, std::abs(cur.value));
      const Vector s_vec = cand - v;
      if (std::isfinite(next.value) && next.grad.allFinite() &&
          next.value >= cur.value + 1e-4 * cur.grad.dot(s_vec) - slack) {
        const Vector y_vec = cur.grad - next.grad;
        const double sy = s_vec.dot(y_vec);
        if (sy > 1e-12 * s_vec.norm() * y_vec.norm()) {
          if (fresh) H = (sy / y_vec.squaredNorm()) * Matrix::Identity(d, d);
          fresh = false;
          const double rho = 1.0 / sy;
          const Matrix A = Matrix::Identity(d, d) - rho * s_vec * y_vec.transpose();
          H = A * H * A.transpose() + rho * s_vec * s_vec.transpose();
        }
        v = std::move(cand);
        cur = std::move(next);
        pg = detail::projected(v, cur.grad, cfg);
        report.trace.push_back({it, cur.value, pg.norm(), t});
        break;
      }
      t *= 0.5;
      if (t * dir.norm() < detail::kMinStep * std::max(1.0, v.norm())) {
        if (!fresh) {
          // stale curvature; retry along the gradient
          H = cfg.initial_step * Matrix::Identity(d, d);
          fresh = true;
          dir = pg;
          t = 1.0;
          continue;
        }
        report.iterations = it;
        report.objective_value = cur.value;
        report.grad_norm = pg.norm();
        detail::fill_report(report, v, cfg);
        std::ostringstream os;
        os << "line search stalled at iteration " << it << ": objective " << cur.value << ", gradient norm "
           << pg.norm() << ", step < " << detail::kMinStep;
        throw StallError(os.str(), report);
      }
    }
  }
  report.iterations = it;
  report.objective_value = cur.value;
  report.grad_norm = pg.norm();
  detail::fill_report(report, v, cfg);
  if (inputs.problem && inputs.problem->m_x() == sf.num_inputs() && inputs.problem->m_y() == sf.num_labels())
    report.metrics = evaluate(*inputs.problem, sf, report.theta);
  return report;
}

// Restart 0 uses cfg as given; restart r >= 1 starts from a seeded Gaussian
// point with a seed derived from (cfg.seed, r). Returns the best final objective.
inline EstimationReport fit_with_restarts(const ScoringFunction& sf, const FitInputs& inputs,
                                          const NoiseDistribution& noise, const FitConfig& cfg, int restarts,
                                          std::vector<EstimationReport>* all = nullptr) {
  if (restarts < 1) throw ConfigError("restarts: must be >= 1");
  std::optional<EstimationReport> best;
  std::string last_error;
  for (int r = 0; r < restarts; ++r) {
    FitConfig c = cfg;
    if (r > 0) {
      c.init = FitConfig::Init::kGaussian;
      c.seed = derive_key(cfg.seed, static_cast<uint64_t>(r));
    }
    try {
      EstimationReport rep = fit(sf, inputs, noise, c);
      if (all) all->push_back(rep);
      if (!best || rep.objective_value > best->objective_value) best = std::move(rep);
    } catch (const NumericError& e) {
      last_error = e.what();
    }
  }
  if (!best) throw NumericError("all " + std::to_string(restarts) + " restarts failed; last: " + last_error);
  return *best;
}

// ---------------------------------------------------------------------------
// Minibatch SGD (language-model experiment)

struct SgdConfig {
  int epochs = 10;
  size_t batch_size = 64;
  double learning_rate = 0.1;
  double decay = 0.0;  // lr_e = lr / (1 + decay * e)
  bool resample_negatives = true;
  uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;
  double train_objective = 0.0;
  double learning_rate = 0.0;
};

// Trains in place. `on_epoch` runs after each epoch (e.g. to evaluate perplexity).
inline std::vector<EpochStats> fit_sgd(const ScoringFunction& sf, Vector& params, const Dataset& data,
                                       const NoiseDistribution& noise, ObjectiveKind objective,
                                       const std::optional<RegularizerConfig>& reg, const SgdConfig& cfg,
                                       const std::function<void(int, const Vector&)>& on_epoch = {},
                                       double gamma_lo = -30.0, double gamma_hi = 30.0) {
  if (objective != ObjectiveKind::kRanking && objective != ObjectiveKind::kBinary && objective != ObjectiveKind::kMle)
    throw ConfigError("minibatch training supports ranking, binary and mle");
  const bool binary = objective == ObjectiveKind::kBinary;
  const Eigen::Index d = sf.num_params();
  if (params.size() != d + (binary ? 1 : 0)) throw ConfigError("fit_sgd: parameter length mismatch");
  const size_t n = data.size();
  if (n == 0) throw DomainError("fit_sgd: empty dataset");
  const int K = data.K;
  const SamplingConfig neg_cfg{std::max(K, 1), data.provenance.seed, data.provenance.stream};

  std::vector<size_t> order(n);
  std::vector<Input> bx;
  std::vector<Label> by, bneg;
  std::vector<EpochStats> stats;
  std::vector<Label> epoch_negs;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), size_t{0});
    Stream rng = Stream(cfg.seed, 0x73686675ULL).substream(static_cast<uint64_t>(e));
    for (size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    const std::vector<Label>* negs = &data.negatives;
    if (cfg.resample_negatives && K > 0 && e > 0) {
      epoch_negs = sample_negatives(neg_cfg, noise, n, static_cast<uint64_t>(e));
      negs = &epoch_negs;
    }
    const double lr = cfg.learning_rate / (1.0 + cfg.decay * e);
    double total = 0.0;
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t end = std::min(n, start + cfg.batch_size);
      const std::span<const size_t> ids(order.data() + start, end - start);
      bx.clear();
      by.clear();
      bneg.clear();
      for (size_t i : ids) {
        bx.push_back(data.x[i]);
        by.push_back(data.y[i]);
        for (int k = 0; k < K; ++k) bneg.push_back((*negs)[i * static_cast<size_t>(K) + static_cast<size_t>(k)]);
      }
      const DatasetView batch(bx, by, bneg, K);
      ValueAndGradient vg;
      if (objective == ObjectiveKind::kRanking) vg = ranking_value_and_gradient(sf, params, batch, noise);
      else if (objective == ObjectiveKind::kMle) vg = mle_value_and_gradient(sf, params, batch);
      else vg = binary_value_and_gradient(sf, BinaryParams::unpack(params), batch, noise);
      if (reg && reg->alpha > 0.0) {
        const Vector theta = binary ? Vector(params.head(d)) : params;
        const auto pen = regularizer(sf, theta, batch, noise, *reg, static_cast<uint64_t>(e), ids);
        vg.value -= pen.value;
        vg.grad.head(d) -= pen.grad;
      }
      if (!std::isfinite(vg.value) || !vg.grad.allFinite())
        throw NumericError("fit_sgd: non-finite objective in epoch " + std::to_string(e));
      params += lr * vg.grad;
      if (binary) params(d) = std::clamp(params(d), gamma_lo, gamma_hi);
      total += vg.value * static_cast<double>(end - start);
    }
    stats.push_back({e, total / static_cast<double>(n), lr});
    if (on_epoch) on_epoch(e, params);
  }
  return stats;
}

}  // namespace nce
