#pragma once

// Conditional log-linear models p(y|x; theta) = exp(s(x, y; theta)) / Z(x; theta)
// over finite input and label spaces.

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "nce/error.hpp"
#include "nce/numeric.hpp"

namespace nce {

using Label = int;
using Input = int;
using ParamVector = Vector;

struct LabelSpace {
  int size = 0;
  std::vector<std::string> names;  // optional, used by the language-model tools

  LabelSpace() = default;
  explicit LabelSpace(int m_y, std::vector<std::string> label_names = {})
      : size(m_y), names(std::move(label_names)) {
    if (size < 2) throw ConfigError("label space: m_y must be >= 2, got " + std::to_string(size));
    if (!names.empty() && static_cast<int>(names.size()) != size)
      throw ConfigError("label space: names length does not match m_y");
  }
};

struct InputSpace {
  int size = 0;
  int feature_dim = 0;
  std::vector<double> features;  // size x feature_dim, row-major; may be empty

  InputSpace() = default;
  explicit InputSpace(int m_x, int d_feat = 0, std::vector<double> rows = {})
      : size(m_x), feature_dim(d_feat), features(std::move(rows)) {
    if (size < 1) throw ConfigError("input space: m_x must be >= 1");
    if (!features.empty() &&
        features.size() != static_cast<size_t>(size) * static_cast<size_t>(feature_dim))
      throw ConfigError("input space: feature matrix is not m_x x d_feat");
  }

  std::span<const double> row(Input x) const {
    return {features.data() + static_cast<size_t>(x) * feature_dim, static_cast<size_t>(feature_dim)};
  }
};

// s(x, y) = theta . f(x, y) with a dense m_x x m_y x d feature table.
struct LinearFeatures {
  int m_x = 0;
  int m_y = 0;
  int d = 0;
  std::vector<double> table;

  std::span<const double> feature(Input x, Label y) const {
    const size_t off = (static_cast<size_t>(x) * m_y + static_cast<size_t>(y)) * d;
    return {table.data() + off, static_cast<size_t>(d)};
  }
  int num_params() const { return d; }
};

// s(x, y) = x' theta_y with per-label weight rows; theta is m_y x d_feat row-major.
struct LinearSoftmax {
  int m_y = 0;
  InputSpace inputs;

  int num_params() const { return m_y * inputs.feature_dim; }
};

// s(x, y) = (sum_i C_i r_{w_i}) . q_y + b_y for an n-gram history w_1..w_L of x.
// Parameter layout: C_1..C_L (dim x dim each, row-major), r (vocab x dim),
// q (vocab x dim), b (vocab).
struct LogBilinear {
  int vocab = 0;
  int dim = 0;
  int context_len = 0;
  std::vector<int> histories;  // m_x x context_len word ids

  int num_inputs() const { return context_len ? static_cast<int>(histories.size()) / context_len : 0; }
  int num_params() const { return context_len * dim * dim + 2 * vocab * dim + vocab; }
  int c_offset(int i) const { return i * dim * dim; }
  int r_offset() const { return context_len * dim * dim; }
  int q_offset() const { return r_offset() + vocab * dim; }
  int b_offset() const { return q_offset() + vocab * dim; }
  std::span<const int> history(Input x) const {
    return {histories.data() + static_cast<size_t>(x) * context_len, static_cast<size_t>(context_len)};
  }
};

class ScoreContext;

// Closed set of scoring-function variants, optionally wrapped with one bias
// parameter per input (s'(x, y) = s(x, y) - c_x, biases appended after the
// inner parameters). Immutable and cheap to copy.
class ScoringFunction {
 public:
  using Inner = std::variant<LinearFeatures, LinearSoftmax, LogBilinear>;

  ScoringFunction() = default;

  static ScoringFunction linear_features(int m_x, int m_y, int d, std::vector<double> table) {
    if (m_x < 1 || m_y < 2 || d < 1) throw ConfigError("linear_features: need m_x>=1, m_y>=2, d>=1");
    if (table.size() != static_cast<size_t>(m_x) * m_y * d)
      throw ConfigError("linear_features: feature table must have m_x*m_y*d entries");
    return ScoringFunction(Inner(LinearFeatures{m_x, m_y, d, std::move(table)}), false);
  }

  static ScoringFunction linear_softmax(int m_y, InputSpace inputs) {
    if (m_y < 2) throw ConfigError("linear_softmax: m_y must be >= 2");
    if (inputs.feature_dim < 1 || inputs.features.empty())
      throw ConfigError("linear_softmax: input space needs a feature matrix");
    return ScoringFunction(Inner(LinearSoftmax{m_y, std::move(inputs)}), false);
  }

  static ScoringFunction log_bilinear(int vocab, int dim, int context_len, std::vector<int> histories) {
    if (vocab < 2 || dim < 1 || context_len < 1) throw ConfigError("log_bilinear: bad dimensions");
    if (histories.empty() || histories.size() % static_cast<size_t>(context_len) != 0)
      throw ConfigError("log_bilinear: histories must be m_x x context_len");
    for (int w : histories)
      if (w < 0 || w >= vocab) throw ConfigError("log_bilinear: history word id out of range");
    return ScoringFunction(Inner(LogBilinear{vocab, dim, context_len, std::move(histories)}), false);
  }

  ScoringFunction with_context_bias() const {
    if (context_bias_) throw ConfigError("context bias is already present");
    return ScoringFunction(inner_, true);
  }
  ScoringFunction without_context_bias() const { return ScoringFunction(inner_, false); }

  const Inner& inner() const { return *inner_; }
  bool has_context_bias() const { return context_bias_; }

  int num_inputs() const {
    return std::visit(
        [](const auto& v) -> int {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, LinearFeatures>) return v.m_x;
          else if constexpr (std::is_same_v<T, LinearSoftmax>) return v.inputs.size;
          else return v.num_inputs();
        },
        *inner_);
  }

  int num_labels() const {
    return std::visit(
        [](const auto& v) -> int {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, LogBilinear>) return v.vocab;
          else return v.m_y;
        },
        *inner_);
  }

  int num_inner_params() const {
    return std::visit([](const auto& v) { return v.num_params(); }, *inner_);
  }
  int num_params() const { return num_inner_params() + (context_bias_ ? num_inputs() : 0); }
  int bias_offset() const { return num_inner_params(); }

  std::string variant_name() const {
    const char* base = std::visit(
        [](const auto& v) -> const char* {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, LinearFeatures>) return "linear_features";
          else if constexpr (std::is_same_v<T, LinearSoftmax>) return "linear_softmax";
          else return "log_bilinear";
        },
        *inner_);
    return context_bias_ ? std::string("context_bias:") + base : std::string(base);
  }

  void check(const ParamVector& theta, Input x) const {
    if (theta.size() != num_params()) {
      std::ostringstream os;
      os << variant_name() << ": parameter length " << theta.size() << " != " << num_params();
      throw ConfigError(os.str());
    }
    if (x < 0 || x >= num_inputs())
      throw ConfigError("input index " + std::to_string(x) + " out of range");
  }

  void check_label(Label y) const {
    if (y < 0 || y >= num_labels())
      throw ConfigError("label index " + std::to_string(y) + " out of range");
  }

  inline ScoreContext context(const ParamVector& theta, Input x) const;

 private:
  ScoringFunction(Inner inner, bool bias)
      : inner_(std::make_shared<const Inner>(std::move(inner))), context_bias_(bias) {}
  ScoringFunction(std::shared_ptr<const Inner> inner, bool bias)
      : inner_(std::move(inner)), context_bias_(bias) {}

  std::shared_ptr<const Inner> inner_;
  bool context_bias_ = false;
};

// Scores of a single input x under fixed parameters. Gradients are accumulated
// with add_grad(); for log-bilinear models the part flowing through the
// context vector is buffered and written out by flush().
class ScoreContext {
 public:
  ScoreContext(const ScoringFunction& sf, const ParamVector& theta, Input x)
      : sf_(&sf), theta_(&theta), x_(x) {
    sf.check(theta, x);
    if (const auto* lb = std::get_if<LogBilinear>(&sf.inner())) {
      hidden_ = Vector::Zero(lb->dim);
      for (int i = 0; i < lb->context_len; ++i) {
        const int w = lb->history(x)[static_cast<size_t>(i)];
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> c(
            theta.data() + lb->c_offset(i), lb->dim, lb->dim);
        Eigen::Map<const Vector> r(theta.data() + lb->r_offset() + w * lb->dim, lb->dim);
        hidden_ += c * r;
      }
      hidden_grad_ = Vector::Zero(lb->dim);
    }
    bias_ = sf.has_context_bias() ? theta(sf.bias_offset() + x) : 0.0;
  }

  Input input() const { return x_; }
  int num_labels() const { return sf_->num_labels(); }

  double score(Label y) const {
    const ParamVector& th = *theta_;
    const double raw = std::visit(
        [&](const auto& v) -> double {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, LinearFeatures>) {
            const auto f = v.feature(x_, y);
            double s = 0.0;
            for (int k = 0; k < v.d; ++k) s += th(k) * f[static_cast<size_t>(k)];
            return s;
          } else if constexpr (std::is_same_v<T, LinearSoftmax>) {
            const auto f = v.inputs.row(x_);
            const int d = v.inputs.feature_dim;
            double s = 0.0;
            for (int k = 0; k < d; ++k) s += th(y * d + k) * f[static_cast<size_t>(k)];
            return s;
          } else {
            Eigen::Map<const Vector> q(th.data() + v.q_offset() + y * v.dim, v.dim);
            return hidden_.dot(q) + th(v.b_offset() + y);
          }
        },
        sf_->inner());
    return raw - bias_;
  }

  void scores(std::span<double> out) const {
    for (size_t y = 0; y < out.size(); ++y) out[y] = score(static_cast<Label>(y));
  }

  std::vector<double> all_scores() const {
    std::vector<double> s(static_cast<size_t>(num_labels()));
    scores(s);
    return s;
  }

  // grad += w * d s(x, y) / d theta   (call flush() once after the last add_grad)
  void add_grad(Label y, double w, Vector& grad) {
    const ParamVector& th = *theta_;
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, LinearFeatures>) {
            const auto f = v.feature(x_, y);
            for (int k = 0; k < v.d; ++k) grad(k) += w * f[static_cast<size_t>(k)];
          } else if constexpr (std::is_same_v<T, LinearSoftmax>) {
            const auto f = v.inputs.row(x_);
            const int d = v.inputs.feature_dim;
            for (int k = 0; k < d; ++k) grad(y * d + k) += w * f[static_cast<size_t>(k)];
          } else {
            Eigen::Map<const Vector> q(th.data() + v.q_offset() + y * v.dim, v.dim);
            grad.segment(v.q_offset() + y * v.dim, v.dim) += w * hidden_;
            grad(v.b_offset() + y) += w;
            hidden_grad_ += w * q;
          }
        },
        sf_->inner());
    if (sf_->has_context_bias()) grad(sf_->bias_offset() + x_) -= w;
  }

  void flush(Vector& grad) {
    const auto* lb = std::get_if<LogBilinear>(&sf_->inner());
    if (!lb || hidden_grad_.isZero(0.0)) return;
    const ParamVector& th = *theta_;
    for (int i = 0; i < lb->context_len; ++i) {
      const int w = lb->history(x_)[static_cast<size_t>(i)];
      Eigen::Map<const Vector> r(th.data() + lb->r_offset() + w * lb->dim, lb->dim);
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> c(
          th.data() + lb->c_offset(i), lb->dim, lb->dim);
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gc(
          grad.data() + lb->c_offset(i), lb->dim, lb->dim);
      gc.noalias() += hidden_grad_ * r.transpose();
      grad.segment(lb->r_offset() + w * lb->dim, lb->dim).noalias() += c.transpose() * hidden_grad_;
    }
    hidden_grad_.setZero();
  }

 private:
  const ScoringFunction* sf_;
  const ParamVector* theta_;
  Input x_;
  double bias_ = 0.0;
  Vector hidden_;
  Vector hidden_grad_;
};

inline ScoreContext ScoringFunction::context(const ParamVector& theta, Input x) const {
  return ScoreContext(*this, theta, x);
}

// ---------------------------------------------------------------------------
// Free-function operations

inline double score(const ScoringFunction& sf, const ParamVector& theta, Input x, Label y) {
  sf.check_label(y);
  return sf.context(theta, x).score(y);
}

inline Vector score_grad(const ScoringFunction& sf, const ParamVector& theta, Input x, Label y) {
  sf.check_label(y);
  Vector g = Vector::Zero(sf.num_params());
  auto ctx = sf.context(theta, x);
  ctx.add_grad(y, 1.0, g);
  ctx.flush(g);
  return g;
}

inline double log_partition(const ScoringFunction& sf, const ParamVector& theta, Input x) {
  return log_sum_exp(sf.context(theta, x).all_scores());
}

inline double partition(const ScoringFunction& sf, const ParamVector& theta, Input x) {
  const double z = std::exp(log_partition(sf, theta, x));
  if (!std::isfinite(z) || z <= 0.0) {
    std::ostringstream os;
    os << "partition function overflows at input x=" << x;
    throw NumericError(os.str());
  }
  return z;
}

inline Vector cond_prob(const ScoringFunction& sf, const ParamVector& theta, Input x) {
  auto s = sf.context(theta, x).all_scores();
  const double lse = softmax_inplace(s);
  if (!std::isfinite(lse)) {
    std::ostringstream os;
    os << "conditional distribution is not finite at input x=" << x;
    throw NumericError(os.str());
  }
  return Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
}

// m_x x m_y matrix of model conditionals.
inline Matrix cond_prob_table(const ScoringFunction& sf, const ParamVector& theta) {
  Matrix p(sf.num_inputs(), sf.num_labels());
  for (Input x = 0; x < sf.num_inputs(); ++x) p.row(x) = cond_prob(sf, theta, x).transpose();
  return p;
}

// ---------------------------------------------------------------------------
// Finite ground-truth problems

struct GroundTruth {
  ScoringFunction sf;
  ParamVector theta;
  std::optional<double> gamma;  // present when the truth is self-normalized
};

struct ConditionalProblem {
  InputSpace inputs;
  LabelSpace labels;
  Vector p_x;
  Matrix p_y_given_x;  // m_x x m_y, row-stochastic
  ScoringFunction model;  // parametrization the problem is posed in
  std::optional<GroundTruth> truth;

  int m_x() const { return inputs.size; }
  int m_y() const { return labels.size; }
  double joint(Input x, Label y) const { return p_x(x) * p_y_given_x(x, y); }

  void validate() const {
    if (m_y() < 2) throw ConfigError("m_y: must be >= 2, got " + std::to_string(m_y()));
    if (m_x() < 1) throw ConfigError("m_x: must be >= 1");
    if (p_x.size() != m_x()) throw ConfigError("p_x: expected " + std::to_string(m_x()) + " entries");
    if (p_y_given_x.rows() != m_x() || p_y_given_x.cols() != m_y())
      throw ConfigError("p_y_given_x: expected shape m_x x m_y");
    for (Input x = 0; x < m_x(); ++x) {
      if (!(p_x(x) > 0.0) || !std::isfinite(p_x(x)))
        throw ConfigError("p_x: entry " + std::to_string(x) + " must be > 0");
      double row = 0.0;
      for (Label y = 0; y < m_y(); ++y) {
        const double v = p_y_given_x(x, y);
        if (!(v > 0.0) || !std::isfinite(v)) {
          std::ostringstream os;
          os << "p_y_given_x: entry (" << x << "," << y << ") must be > 0, got " << v;
          throw ConfigError(os.str());
        }
        row += v;
      }
      if (std::abs(row - 1.0) > 1e-12)
        throw ConfigError("p_y_given_x: row " + std::to_string(x) + " does not sum to 1");
    }
    if (std::abs(p_x.sum() - 1.0) > 1e-12) throw ConfigError("p_x: does not sum to 1");
    if (model.num_inputs() != m_x() || model.num_labels() != m_y())
      throw ConfigError("variant: scoring function dimensions do not match m_x, m_y");
    if (truth) {
      if (truth->theta.size() != truth->sf.num_params())
        throw ConfigError("theta_star: expected " + std::to_string(truth->sf.num_params()) + " entries");
      if (!truth->theta.allFinite()) throw ConfigError("theta_star: entries must be finite");
      if (truth->gamma) {
        if (!std::isfinite(*truth->gamma)) throw ConfigError("gamma_star: must be finite");
        for (Input x = 0; x < m_x(); ++x) {
          auto ctx = truth->sf.context(truth->theta, x);
          for (Label y = 0; y < m_y(); ++y) {
            const double p = std::exp(ctx.score(y) - *truth->gamma);
            if (std::abs(p - p_y_given_x(x, y)) > 1e-10) {
              std::ostringstream os;
              os << "gamma_star: p_y_given_x(" << x << "," << y << ") != exp(s - gamma_star)";
              throw ConfigError(os.str());
            }
          }
        }
      }
    }
  }

  // Largest |log Z(x; theta*) - gamma*| over inputs; 0 for a perfectly self-normalized truth.
  double self_normalization_gap() const {
    if (!truth) throw PreconditionError("problem has no ground-truth parameters");
    const double gamma = truth->gamma.value_or(log_partition(truth->sf, truth->theta, 0));
    double gap = 0.0;
    for (Input x = 0; x < m_x(); ++x)
      gap = std::max(gap, std::abs(log_partition(truth->sf, truth->theta, x) - gamma));
    return gap;
  }
};

// Builds the problem implied by a scoring function and parameters:
// p_{Y|X} = softmax of the scores, with the given input marginal.
inline ConditionalProblem problem_from_model(const ScoringFunction& sf, const ParamVector& theta,
                                             Vector p_x, std::optional<double> gamma = std::nullopt) {
  ConditionalProblem p;
  if (const auto* ls = std::get_if<LinearSoftmax>(&sf.inner())) p.inputs = ls->inputs;
  else p.inputs = InputSpace(sf.num_inputs());
  p.labels = LabelSpace(sf.num_labels());
  p.p_x = std::move(p_x);
  p.p_y_given_x = cond_prob_table(sf, theta);
  p.model = sf;
  p.truth = GroundTruth{sf, theta, gamma};
  if (gamma) {
    // Self-normalized truths define the conditional directly as exp(s - gamma).
    for (Input x = 0; x < p.m_x(); ++x) {
      auto ctx = sf.context(theta, x);
      for (Label y = 0; y < p.m_y(); ++y) p.p_y_given_x(x, y) = std::exp(ctx.score(y) - *gamma);
    }
  }
  p.validate();
  return p;
}

}  // namespace nce
