#pragma once

// Maximum-likelihood logistic regression by Newton-Raphson.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppshare/errors.hpp"
#include "ppshare/summary.hpp"

namespace ppshare {

inline constexpr double kSeparationBound = 30.0;

struct LogisticFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  Eigen::VectorXd gradient;  ///< score at the returned estimate
  double loglik{};
  double aic{};
  int iterations{};
  FitSummary summary;
};

namespace detail {

inline double logistic_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = eta(i);
    // log(1 + exp(e)) without overflow
    const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    ll += y(i) * e - softplus;
  }
  return ll;
}

inline Eigen::VectorXd logistic_mean(const Eigen::VectorXd& eta) {
  return eta.unaryExpr([](double e) { return e >= 0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e)); });
}

}  // namespace detail

/// Newton-Raphson MLE with step halving; standard errors from the inverse observed information,
/// 95% Wald intervals, AIC = 2p - 2 loglik.
inline LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                const std::vector<std::string>& names = {}, int max_iter = 100, double tol = 1e-10) {
  const Eigen::Index n = x.rows(), p = x.cols();
  if (y.size() != n) throw ValidationError("labels and design have different row counts");
  if (n <= p) throw ValidationError("logistic regression needs more rows than columns");
  for (Eigen::Index i = 0; i < n; ++i)
    if (y(i) != 0.0 && y(i) != 1.0) throw ValidationError("logistic labels must be 0 or 1");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < p) throw ValidationError("logistic design matrix is rank deficient");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = detail::logistic_loglik(x * beta, y);
  LogisticFit fit;
  bool converged = false;
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd mu = detail::logistic_mean(x * beta);
    const Eigen::VectorXd grad = x.transpose() * (y - mu);
    const Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
    const Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
    const Eigen::VectorXd step = info.ldlt().solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = beta + step;
    double ll_next = detail::logistic_loglik(x * next, y);
    while (!(ll_next >= ll - 1e-12 * std::abs(ll)) && t > 1e-10) {
      t *= 0.5;
      next = beta + t * step;
      ll_next = detail::logistic_loglik(x * next, y);
    }
    beta = next;
    ll = ll_next;
    fit.iterations = it;
    if (beta.cwiseAbs().maxCoeff() > kSeparationBound)
      throw NumericalError("logistic regression diverges (|coefficient| > 30): complete or quasi-complete separation");
    if ((t * step).cwiseAbs().maxCoeff() < tol * (1.0 + beta.cwiseAbs().maxCoeff())) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NumericalError("logistic regression did not converge");

  const Eigen::VectorXd mu = detail::logistic_mean(x * beta);
  const Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
  const Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
  const Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.coef = beta;
  fit.se = cov.diagonal().cwiseSqrt();
  fit.gradient = x.transpose() * (y - mu);
  fit.loglik = ll;
  fit.aic = 2.0 * static_cast<double>(p) - 2.0 * ll;
  fit.summary.score_name = "AIC";
  fit.summary.score = fit.aic;
  for (Eigen::Index j = 0; j < p; ++j) {
    const std::string name = static_cast<std::size_t>(j) < names.size() ? names[static_cast<std::size_t>(j)]
                                                                        : "b" + std::to_string(j);
    fit.summary.parameters.push_back(
        {name, beta(j), fit.se(j), beta(j) - 1.96 * fit.se(j), beta(j) + 1.96 * fit.se(j)});
  }
  return fit;
}

}  // namespace ppshare
