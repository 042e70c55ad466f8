#pragma once

// Exponential covariance and guarded Cholesky factorizations.

#include <cmath>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "ppshare/errors.hpp"
#include "ppshare/geometry.hpp"

namespace ppshare {

/// Exponential covariance sigma^2 exp(-d / phi).
struct GPParams {
  double sigma{1.0};
  double phi{1.0};

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("GP sigma must be positive");
    if (!(phi > 0.0) || !std::isfinite(phi)) throw ValidationError("GP phi must be positive");
  }
};

inline constexpr double kFactorJitter = 1e-8;

inline Eigen::MatrixXd correlation_matrix(std::span<const Point> a, std::span<const Point> b, double phi) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t j = 0; j < b.size(); ++j)
    for (std::size_t i = 0; i < a.size(); ++i)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::exp(-distance(a[i], b[j]) / phi);
  return m;
}

inline Eigen::MatrixXd correlation_matrix(std::span<const Point> a, double phi) {
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    m(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i)
      m(i, j) = m(j, i) = std::exp(-distance(a[static_cast<std::size_t>(i)], a[static_cast<std::size_t>(j)]) / phi);
  }
  return m;
}

/// Cholesky of a symmetric matrix; on failure retries once with `jitter` added to the diagonal.
inline Eigen::LLT<Eigen::MatrixXd> cholesky_with_jitter(Eigen::MatrixXd m, double jitter, const std::string& what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt;
  m.diagonal().array() += jitter;
  llt.compute(m);
  if (llt.info() != Eigen::Success) throw NumericalError("Cholesky factorization failed for " + what);
  return llt;
}

}  // namespace ppshare
