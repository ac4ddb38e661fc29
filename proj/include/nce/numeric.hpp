#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nce/error.hpp"

namespace nce {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// log(sum_i exp(v_i)) with the max-shift.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double a : v) s += std::exp(a - m);
  return m + std::log(s);
}

inline double log_sum_exp(const Vector& v) {
  return log_sum_exp(std::span<const double>(v.data(), static_cast<size_t>(v.size())));
}

// In-place softmax; returns the log normalizer.
inline double softmax_inplace(std::span<double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double& a : v) s += (a = std::exp(a - m));
  for (double& a : v) a /= s;
  return m + std::log(s);
}

inline double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(sigmoid(t)) without overflow for large |t|.
inline double log_sigmoid(double t) {
  if (t >= 0) return -std::log1p(std::exp(-t));
  return t - std::log1p(std::exp(t));
}

struct Logistic {
  double log_p;  // log sigmoid(t)
  double log_q;  // log sigmoid(-t)
  double p;      // sigmoid(t)
};

// All three from a single exponential.
inline Logistic logistic(double t) {
  const double e = std::exp(-std::abs(t));
  const double l = std::log1p(e);
  if (t >= 0) return {-l, -t - l, 1.0 / (1.0 + e)};
  return {t - l, -l, e / (1.0 + e)};
}

// Fixed-order pairwise reduction. The tree shape depends only on the length,
// so results do not depend on how the terms were produced.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double a : v) s += a;
    return s;
  }
  const size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline Vector pairwise_sum(std::span<const Vector> v, Eigen::Index dim) {
  if (v.empty()) return Vector::Zero(dim);
  if (v.size() == 1) return v[0];
  const size_t half = v.size() / 2;
  return pairwise_sum(v.first(half), dim) + pairwise_sum(v.subspan(half), dim);
}

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline double min_eigenvalue(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

// Spectral norm of a symmetric matrix.
inline double spectral_norm_sym(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_norm(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
}

// Inverse of a symmetric positive definite matrix through its eigendecomposition.
// Eigenvalues below `floor` are reported instead of being regularized away.
inline Matrix inverse_spd(const Matrix& a, std::string_view what, double floor = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(a));
  const double lo = es.eigenvalues().minCoeff();
  if (!(lo >= floor)) {
    std::ostringstream os;
    os << what << " is singular: minimum eigenvalue " << lo << " < " << floor;
    throw SingularityError(os.str(), lo);
  }
  const Vector inv = es.eigenvalues().cwiseInverse();
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

// General (possibly non-symmetric) inverse with the same singularity contract,
// using the smallest singular value as the test.
inline Matrix inverse_checked(const Matrix& a, std::string_view what, double floor = 1e-10) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double lo = svd.singularValues().minCoeff();
  if (!(lo >= floor)) {
    std::ostringstream os;
    os << what << " is singular: minimum singular value " << lo << " < " << floor;
    throw SingularityError(os.str(), lo);
  }
  return svd.matrixV() * svd.singularValues().cwiseInverse().asDiagonal() *
         svd.matrixU().transpose();
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

// 64-bit FNV-1a, used for provenance hashes of files and configurations.
inline uint64_t fnv1a(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a(std::span<const double> values, uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(std::string_view(reinterpret_cast<const char*>(values.data()),
                                values.size() * sizeof(double)),
               h);
}

inline std::string hex64(uint64_t h) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

// Least-squares slope of log(y) against log(x).
inline double log_log_slope(std::span<const double> x, std::span<const double> y) {
  const size_t n = x.size();
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace nce
