#pragma once

// Chain diagnostics and predictive scores.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppshare/errors.hpp"
#include "ppshare/stats.hpp"
#include "ppshare/summary.hpp"

namespace ppshare {

/// n / (1 + 2 sum rho_k), truncated at the first non-positive sum of an adjacent
/// autocorrelation pair (Geyer's initial positive sequence). A constant chain has ESS 1.
inline double ess(std::span<const double> draws) {
  const std::size_t n = draws.size();
  if (n < 100) throw ValidationError("ESS needs at least 100 draws");
  const double m = stats::mean(draws);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = draws[i] - m;
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
    return s / static_cast<double>(n);
  };
  const double g0 = autocov(0);
  if (!(g0 > 0.0)) return 1.0;
  double tau = -1.0;  // -rho_0 + 2 * sum of pair sums
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    const double pair = (autocov(2 * k) + autocov(2 * k + 1)) / g0;
    if (!(pair > 0.0)) break;
    tau += 2.0 * pair;
  }
  return static_cast<double>(n) / std::max(tau, 1e-12);
}

/// Batch-means Monte Carlo standard error with batch size floor(sqrt(n)).
inline double mcse(std::span<const double> draws) {
  const std::size_t n = draws.size();
  if (n < 100) throw ValidationError("MCSE needs at least 100 draws");
  const auto b = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const std::size_t a = n / b;
  std::vector<double> means(a);
  for (std::size_t k = 0; k < a; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < b; ++i) s += draws[k * b + i];
    means[k] = s / static_cast<double>(b);
  }
  return stats::sd(means) / std::sqrt(static_cast<double>(a));
}

/// Streaming WAIC: per point, log mean_d exp(l_dp) and var_d(l_dp) accumulated draw by draw.
class WaicAccumulator {
 public:
  explicit WaicAccumulator(std::size_t points) : max_(points, stats::kNegInf), sumexp_(points), mean_(points), m2_(points) {}

  void add(std::span<const double> pointwise) {
    if (pointwise.size() != max_.size()) throw ValidationError("pointwise log-likelihood length mismatch");
    ++draws_;
    for (std::size_t i = 0; i < pointwise.size(); ++i) {
      const double l = pointwise[i];
      if (!std::isfinite(l)) throw NumericalError("non-finite pointwise log-likelihood in WAIC");
      if (l > max_[i]) {
        sumexp_[i] = sumexp_[i] * std::exp(max_[i] - l) + 1.0;
        max_[i] = l;
      } else {
        sumexp_[i] += std::exp(l - max_[i]);
      }
      const double delta = l - mean_[i];
      mean_[i] += delta / static_cast<double>(draws_);
      m2_[i] += delta * (l - mean_[i]);
    }
  }

  std::size_t draws() const { return draws_; }

  double lppd() const {
    double s = 0.0;
    for (std::size_t i = 0; i < max_.size(); ++i)
      s += max_[i] + std::log(sumexp_[i]) - std::log(static_cast<double>(draws_));
    return s;
  }

  double penalty() const {
    double s = 0.0;
    for (double v : m2_) s += draws_ > 1 ? v / static_cast<double>(draws_ - 1) : 0.0;
    return s;
  }

  /// -2 (lppd - p_waic); lower is better.
  double value() const {
    if (draws_ < 2) throw ValidationError("WAIC needs at least two draws");
    return -2.0 * (lppd() - penalty());
  }

 private:
  std::size_t draws_{0};
  std::vector<double> max_, sumexp_, mean_, m2_;
};

/// WAIC of a draws x points matrix of pointwise log-likelihood terms.
inline double waic(const Eigen::MatrixXd& pointwise) {
  if (pointwise.rows() < 100) throw ValidationError("WAIC needs at least 100 draws");
  WaicAccumulator acc(static_cast<std::size_t>(pointwise.cols()));
  std::vector<double> row(static_cast<std::size_t>(pointwise.cols()));
  for (Eigen::Index d = 0; d < pointwise.rows(); ++d) {
    for (Eigen::Index j = 0; j < pointwise.cols(); ++j) row[static_cast<std::size_t>(j)] = pointwise(d, j);
    acc.add(row);
  }
  return acc.value();
}

/// Posterior mean, sd and central 95% interval.
inline ParameterSummary summarize_draws(const std::string& name, std::span<const double> draws) {
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  return {name, stats::mean(draws), stats::sd(draws), stats::quantile_sorted(sorted, 0.025),
          stats::quantile_sorted(sorted, 0.975)};
}

}  // namespace ppshare
