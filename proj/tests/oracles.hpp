#pragma once

// Independent reference computations used by the tests: naive sums with no
// max-shift, central finite differences, random instance builders.

#include <cmath>
#include <functional>
#include <vector>

#include "nce/nce.hpp"

namespace oracle {

using nce::Input;
using nce::Label;
using nce::Matrix;
using nce::Vector;

// Central differences with step h.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& v, double h = 1e-5) {
  Vector g(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    Vector a = v, b = v;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

inline double rel_error(const Vector& analytic, const Vector& reference) {
  const double scale = std::max({analytic.norm(), reference.norm(), 1e-6});
  return (analytic - reference).norm() / scale;
}

// log of a plain sum of exponentials, no shift.
inline double naive_lse(const std::vector<double>& v) {
  double s = 0;
  for (double a : v) s += std::exp(a);
  return std::log(s);
}

inline double naive_sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double naive_ranking(const nce::ScoringFunction& sf, const Vector& theta, const nce::Dataset& d,
                            const nce::NoiseDistribution& noise) {
  double total = 0;
  for (size_t i = 0; i < d.size(); ++i) {
    std::vector<double> s;
    s.push_back(nce::score(sf, theta, d.x[i], d.y[i]) - std::log(noise.prob(d.y[i])));
    for (Label y : d.negatives_of(i)) s.push_back(nce::score(sf, theta, d.x[i], y) - std::log(noise.prob(y)));
    total += s[0] - naive_lse(s);
  }
  return total / static_cast<double>(d.size());
}

inline double naive_binary(const nce::ScoringFunction& sf, const Vector& theta, double gamma, const nce::Dataset& d,
                           const nce::NoiseDistribution& noise) {
  const double K = d.K;
  // log g and log(1 - g) with g = e / (e + K), written as differences of logs
  auto e = [&](Input x, Label y) { return std::exp(nce::score(sf, theta, x, y) - std::log(noise.prob(y)) - gamma); };
  double total = 0;
  for (size_t i = 0; i < d.size(); ++i) {
    const double ep = e(d.x[i], d.y[i]);
    total += std::log(ep) - std::log(ep + K);
    for (Label y : d.negatives_of(i)) total += std::log(K) - std::log(e(d.x[i], y) + K);
  }
  return total / static_cast<double>(d.size());
}

inline double naive_mle(const nce::ScoringFunction& sf, const Vector& theta, const nce::Dataset& d) {
  double total = 0;
  for (size_t i = 0; i < d.size(); ++i) {
    std::vector<double> s;
    for (Label y = 0; y < sf.num_labels(); ++y) s.push_back(nce::score(sf, theta, d.x[i], y));
    total += s[static_cast<size_t>(d.y[i])] - naive_lse(s);
  }
  return total / static_cast<double>(d.size());
}

// Random positive probability vector.
inline std::vector<double> random_simplex(nce::Stream& rng, int m) {
  std::vector<double> p(static_cast<size_t>(m));
  double s = 0;
  for (double& v : p) s += (v = 0.2 + rng.uniform());
  for (double& v : p) v /= s;
  return p;
}

inline Vector random_vector(nce::Stream& rng, Eigen::Index d, double sigma = 1.0) {
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = sigma * rng.normal();
  return v;
}

// One of four scoring-function variants, chosen by `which`.
inline nce::ScoringFunction random_model(nce::Stream& rng, int which, int m_x, int m_y) {
  switch (which % 4) {
    case 0: {
      const int d = 3;
      std::vector<double> t(static_cast<size_t>(m_x) * m_y * d);
      for (double& v : t) v = rng.normal();
      return nce::ScoringFunction::linear_features(m_x, m_y, d, t);
    }
    case 1: {
      const int d = 2;
      std::vector<double> t(static_cast<size_t>(m_x) * m_y * d);
      for (double& v : t) v = rng.normal();
      return nce::ScoringFunction::linear_features(m_x, m_y, d, t).with_context_bias();
    }
    case 2: {
      const int d = 3;
      std::vector<double> f(static_cast<size_t>(m_x) * d);
      for (double& v : f) v = rng.normal();
      return nce::ScoringFunction::linear_softmax(m_y, nce::InputSpace(m_x, d, f));
    }
    default: {
      std::vector<int> h(static_cast<size_t>(m_x) * 2);
      for (int& w : h) w = static_cast<int>(rng.below(static_cast<uint64_t>(m_y)));
      return nce::ScoringFunction::log_bilinear(m_y, 3, 2, h);
    }
  }
}

// Dataset drawn uniformly (x, y and negatives from `noise`).
inline nce::Dataset random_dataset(nce::Stream& rng, int m_x, int m_y, size_t n, int K,
                                   const nce::NoiseDistribution& noise) {
  nce::Dataset d;
  d.K = K;
  for (size_t i = 0; i < n; ++i) {
    d.x.push_back(static_cast<Input>(rng.below(static_cast<uint64_t>(m_x))));
    d.y.push_back(static_cast<Label>(rng.below(static_cast<uint64_t>(m_y))));
    for (int k = 0; k < K; ++k) d.negatives.push_back(noise.sample(rng));
  }
  d.provenance = {0, 0, K, noise.hash()};
  return d;
}

}  // namespace oracle
