#pragma once

// Intensity functions, the predictive-process transform, log-likelihoods and priors for the
// NHPP, case-control and shared-component models.

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ppshare/covariance.hpp"
#include "ppshare/design.hpp"
#include "ppshare/errors.hpp"
#include "ppshare/geometry.hpp"
#include "ppshare/simulate.hpp"
#include "ppshare/stats.hpp"

namespace ppshare {

/// Prior settings. Regression coefficients ~ Normal(0, coef_sd^2); coef_sd = 10 reads
/// "Normal(0,100)" as variance 100.
struct Priors {
  double coef_sd{10.0};
  double sigma_shape{2.0};
  double sigma_scale{0.5};
  double log_delta_sd{1.0};  ///< log-normal weighting: log(delta) ~ Normal(0, log_delta_sd^2)
};

/// Kriging weights C(targets, knots) C(knots, knots)^{-1} of the exponential covariance; the
/// marginal variance cancels so only phi matters. The knot factorization is computed once.
class PredictiveProcess {
 public:
  PredictiveProcess(KnotSet knots, double phi) : knots_(std::move(knots)), phi_(phi) {
    if (knots_.size() == 0) throw ValidationError("predictive process needs at least one knot");
    if (!(phi_ > 0.0)) throw ValidationError("predictive process phi must be positive");
    for (std::size_t i = 0; i < knots_.size(); ++i)
      for (std::size_t j = i + 1; j < knots_.size(); ++j)
        if (knots_.knots[i] == knots_.knots[j]) throw ValidationError("knots must be pairwise distinct");
    Eigen::MatrixXd r = correlation_matrix(knots_.knots, phi_);
    llt_ = cholesky_with_jitter(r, kFactorJitter, "knot correlation matrix");
    const Eigen::MatrixXd l = llt_.matrixL();
    log_det_corr_ = 2.0 * l.diagonal().array().log().sum();
    corr_inverse_ = llt_.solve(Eigen::MatrixXd::Identity(r.rows(), r.cols()));
  }

  const KnotSet& knots() const { return knots_; }
  std::size_t size() const { return knots_.size(); }
  double phi() const { return phi_; }
  double log_det_correlation() const { return log_det_corr_; }
  const Eigen::MatrixXd& correlation_inverse() const { return corr_inverse_; }
  const Eigen::LLT<Eigen::MatrixXd>& factor() const { return llt_; }

  /// targets x knots weight matrix.
  Eigen::MatrixXd weights(std::span<const Point> targets) const {
    const Eigen::MatrixXd c = correlation_matrix(targets, knots_.knots, phi_);
    return llt_.solve(c.transpose()).transpose();
  }

  Eigen::VectorXd transform(const Eigen::VectorXd& knot_values, std::span<const Point> targets) const {
    check(knot_values);
    return weights(targets) * knot_values;
  }

  void check(const Eigen::VectorXd& knot_values) const {
    if (static_cast<std::size_t>(knot_values.size()) != size())
      throw ValidationError("knot value vector has length " + std::to_string(knot_values.size()) + ", expected " +
                            std::to_string(size()));
  }

 private:
  KnotSet knots_;
  double phi_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd corr_inverse_;
  double log_det_corr_{};
};

/// Low-rank log shared component at `targets` from its values at the knots.
inline Eigen::VectorXd pp_transform(const Eigen::VectorXd& knot_logvals, const KnotSet& knots,
                                    std::span<const Point> targets, const GPParams& gp) {
  gp.validate();
  return PredictiveProcess(knots, gp.phi).transform(knot_logvals, targets);
}

struct SharedComponentState {
  double delta{0.5};
  Weighting weighting{Weighting::Unif};
  double sigma{1.0};
  double phi{1.0};  ///< fixed, never sampled
  Eigen::VectorXd knot_logvals;
  Eigen::VectorXd beta1;  ///< process 1, no intercept
  Eigen::VectorXd beta2;  ///< process 2, leading intercept

  void validate(const Design& d1, const Design& d2, std::size_t knots) const {
    validate_delta(weighting, delta);
    if (!(sigma > 0.0)) throw ValidationError("sigma must be positive");
    if (!(phi > 0.0)) throw ValidationError("phi must be positive");
    if (static_cast<std::size_t>(knot_logvals.size()) != knots) throw ValidationError("knot value count mismatch");
    if (d1.has_intercept() == d2.has_intercept())
      throw ValidationError("exactly one of the two processes must carry an intercept");
    d1.check(beta1);
    d2.check(beta2);
  }
};

inline std::vector<std::size_t> locate_all(const SpatialWindow& window, std::span<const Point> pts) {
  std::vector<std::size_t> units(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) units[i] = window.locate_or_throw(pts[i]);
  return units;
}

/// lambda_k(s) = exp(w_k * shared(s) + z(s)'beta_k) given the log shared component at the points.
inline std::pair<std::vector<double>, std::vector<double>> shared_intensities(
    const SharedComponentState& state, const Design& d1, const Design& d2, std::span<const double> log_shared,
    std::span<const std::size_t> units) {
  const auto [w1, w2] = shared_exponents(state.weighting, state.delta);
  const Eigen::VectorXd eta1 = d1.unit_predictors(state.beta1);
  const Eigen::VectorXd eta2 = d2.unit_predictors(state.beta2);
  std::vector<double> l1(units.size()), l2(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto u = static_cast<Eigen::Index>(units[i]);
    l1[i] = std::exp(w1 * log_shared[i] + eta1(u));
    l2[i] = std::exp(w2 * log_shared[i] + eta2(u));
  }
  return {std::move(l1), std::move(l2)};
}

/// Both intensities at arbitrary points of the window, through the predictive process.
inline std::pair<std::vector<double>, std::vector<double>> shared_intensities(const SharedComponentState& state,
                                                                              const Design& d1, const Design& d2,
                                                                              const PredictiveProcess& pp,
                                                                              std::span<const Point> points) {
  state.validate(d1, d2, pp.size());
  const Eigen::VectorXd s = pp.transform(state.knot_logvals, points);
  const auto units = locate_all(d1.window(), points);
  return shared_intensities(state, d1, d2, std::span<const double>(s.data(), static_cast<std::size_t>(s.size())),
                            units);
}

/// Case-control form of process 1: [lambda2 / exp(z2'b2)]^{delta/(1-delta)} exp(z1'b1), with
/// lambda2 the process-2 intensity at the same locations. Uniform weighting, delta < 1.
inline std::vector<double> lambda1_from_second_process(const SharedComponentState& state, const Design& d1,
                                                       const Design& d2, std::span<const double> lambda2,
                                                       std::span<const std::size_t> units) {
  if (state.weighting != Weighting::Unif || !(state.delta < 1.0))
    throw ValidationError("the case-control form needs the uniform weighting with delta < 1");
  const Eigen::VectorXd eta1 = d1.unit_predictors(state.beta1);
  const Eigen::VectorXd eta2 = d2.unit_predictors(state.beta2);
  const double power = state.delta / (1.0 - state.delta);
  std::vector<double> out(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    const auto u = static_cast<Eigen::Index>(units[i]);
    out[i] = std::pow(lambda2[i] / std::exp(eta2(u)), power) * std::exp(eta1(u));
  }
  return out;
}

/// value = sum(point_terms) - sum(integral_terms); one entry per process.
struct LogLik {
  double value{};
  std::vector<double> integral_terms;
  std::vector<double> point_terms;
};

namespace detail {

inline void require_finite_events(std::span<const double> log_lambda, std::span<const Point> pts) {
  for (std::size_t i = 0; i < log_lambda.size(); ++i)
    if (!std::isfinite(log_lambda[i])) {
      std::ostringstream os;
      os.precision(17);
      os << "non-finite intensity at event (" << pts[i].x << ", " << pts[i].y << ")";
      throw NumericalError(os.str());
    }
}

}  // namespace detail

/// Joint log-likelihood of the two patterns; integrals by grid quadrature, shared component
/// transformed once onto grid nodes and events together.
inline LogLik loglik_shared(const SharedComponentState& state, const PointPattern& first, const PointPattern& second,
                            const Design& d1, const Design& d2, const PredictiveProcess& pp,
                            const IntegrationGrid& grid) {
  state.validate(d1, d2, pp.size());
  std::vector<Point> targets;
  targets.reserve(grid.size() + first.size() + second.size());
  targets.insert(targets.end(), grid.nodes.begin(), grid.nodes.end());
  targets.insert(targets.end(), first.points.begin(), first.points.end());
  targets.insert(targets.end(), second.points.begin(), second.points.end());
  const Eigen::VectorXd s = pp.transform(state.knot_logvals, targets);

  const auto [w1, w2] = shared_exponents(state.weighting, state.delta);
  const Eigen::VectorXd eta1 = d1.unit_predictors(state.beta1);
  const Eigen::VectorXd eta2 = d2.unit_predictors(state.beta2);

  double i1 = 0.0, i2 = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const auto u = static_cast<Eigen::Index>(grid.units[j]);
    const double sj = s(static_cast<Eigen::Index>(j));
    i1 += grid.weights[j] * std::exp(w1 * sj + eta1(u));
    i2 += grid.weights[j] * std::exp(w2 * sj + eta2(u));
  }
  auto point_sum = [&](const PointPattern& pat, std::size_t offset, double w, const Eigen::VectorXd& eta) {
    std::vector<double> ll(pat.size());
    for (std::size_t i = 0; i < pat.size(); ++i) {
      const auto u = static_cast<Eigen::Index>(d1.window().locate_or_throw(pat.points[i]));
      ll[i] = w * s(static_cast<Eigen::Index>(offset + i)) + eta(u);
    }
    detail::require_finite_events(ll, pat.points);
    double t = 0.0;
    for (double v : ll) t += v;
    return t;
  };
  LogLik out;
  out.point_terms = {point_sum(first, grid.size(), w1, eta1), point_sum(second, grid.size() + first.size(), w2, eta2)};
  out.integral_terms = {i1, i2};
  out.value = out.point_terms[0] + out.point_terms[1] - i1 - i2;
  if (!std::isfinite(out.value)) throw NumericalError("non-finite shared-component log-likelihood");
  return out;
}

/// Baseline of the case-control model: a KDE plug-in or the closed form exp(z_c'b_c) whose
/// intercept is absorbed into alpha.
enum class BaselineKind { Kde, Parametric };

struct CaseControlState {
  double alpha{};          ///< intercept; with a parametric baseline, the sum of both intercepts
  Eigen::VectorXd beta;    ///< case covariates, no intercept
  BaselineKind baseline{BaselineKind::Kde};
  Eigen::VectorXd beta_control;  ///< parametric baseline coefficients, no intercept
};

/// Baseline evaluated at (point, owning unit).
using BaselineFn = std::function<double(const Point&, std::size_t)>;

inline BaselineFn parametric_baseline(const Design& control_design, const Eigen::VectorXd& beta_control) {
  if (control_design.has_intercept()) throw ValidationError("parametric baseline design must omit the intercept");
  Eigen::VectorXd lam = control_design.unit_predictors(beta_control).array().exp();
  return [lam = std::move(lam)](const Point&, std::size_t unit) { return lam(static_cast<Eigen::Index>(unit)); };
}

/// Case-only NHPP log-likelihood with lambda_1(s) = baseline(s) exp(alpha + z(s)'beta).
inline LogLik loglik_case_nhpp(const CaseControlState& state, const PointPattern& cases, const Design& case_design,
                               const IntegrationGrid& grid, const BaselineFn& baseline_eval) {
  if (case_design.has_intercept()) throw ValidationError("case design must omit the intercept (alpha is separate)");
  const Eigen::VectorXd eta = case_design.unit_predictors(state.beta).array() + state.alpha;
  double integral = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double b = baseline_eval(grid.nodes[j], grid.units[j]);
    if (!(b > 0.0) || !std::isfinite(b)) throw NumericalError("baseline intensity must be positive on the grid");
    integral += grid.weights[j] * b * std::exp(eta(static_cast<Eigen::Index>(grid.units[j])));
  }
  std::vector<double> ll(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto u = case_design.window().locate_or_throw(cases.points[i]);
    ll[i] = std::log(baseline_eval(cases.points[i], u)) + eta(static_cast<Eigen::Index>(u));
  }
  detail::require_finite_events(ll, cases.points);
  double pts = 0.0;
  for (double v : ll) pts += v;
  LogLik out{pts - integral, {integral}, {pts}};
  if (!std::isfinite(out.value)) throw NumericalError("non-finite case-control log-likelihood");
  return out;
}

struct LogisticData {
  Eigen::VectorXd labels;  ///< 1 for cases, 0 for controls
  Eigen::MatrixXd design;  ///< leading intercept column
  std::vector<std::string> names;
};

/// One row per event, cases first; covariates from the owning unit.
inline LogisticData logistic_design(const PointPattern& cases, const PointPattern& controls,
                                    const CovariateField& field) {
  if (cases.empty() || controls.empty()) throw ValidationError("logistic design needs cases and controls");
  const auto n = static_cast<Eigen::Index>(cases.size() + controls.size());
  const auto p = static_cast<Eigen::Index>(field.dimension() + 1);
  LogisticData out;
  out.labels = Eigen::VectorXd::Zero(n);
  out.design.resize(n, p);
  Eigen::Index r = 0;
  for (const auto* pat : {&cases, &controls}) {
    for (const auto& pt : pat->points) {
      const auto z = covariate_at(field, pt);
      out.design(r, 0) = 1.0;
      for (Eigen::Index j = 1; j < p; ++j) out.design(r, j) = z[static_cast<std::size_t>(j - 1)];
      out.labels(r) = pat == &cases ? 1.0 : 0.0;
      ++r;
    }
  }
  out.names.emplace_back(kInterceptName);
  for (const auto& nm : field.names()) out.names.push_back(nm);
  return out;
}

/// log N(v | 0, sigma^2 R) given v' R^{-1} v and log|R|.
inline double gp_log_density(double quad_form, double log_det_corr, std::size_t k, double sigma) {
  const double kd = static_cast<double>(k);
  return -0.5 * kd * std::log(2.0 * std::numbers::pi) - kd * std::log(sigma) - 0.5 * log_det_corr -
         0.5 * quad_form / (sigma * sigma);
}

/// Coefficient, sigma, delta and GP priors; -inf outside the support.
inline double log_prior(const SharedComponentState& state, const PredictiveProcess& pp, const Priors& priors) {
  if (!(state.sigma > 0.0)) return stats::kNegInf;
  double lp = 0.0;
  if (state.weighting == Weighting::Unif) {
    if (!(state.delta >= 0.0 && state.delta <= 1.0)) return stats::kNegInf;
  } else {
    if (!(state.delta > 0.0)) return stats::kNegInf;
    lp += stats::normal_logpdf(std::log(state.delta), 0.0, priors.log_delta_sd);
  }
  for (double b : state.beta1) lp += stats::normal_logpdf(b, 0.0, priors.coef_sd);
  for (double b : state.beta2) lp += stats::normal_logpdf(b, 0.0, priors.coef_sd);
  lp += stats::inverse_gamma_logpdf(state.sigma, priors.sigma_shape, priors.sigma_scale);
  pp.check(state.knot_logvals);
  const double q = state.knot_logvals.dot(pp.factor().solve(state.knot_logvals));
  lp += gp_log_density(q, pp.log_det_correlation(), pp.size(), state.sigma);
  return lp;
}

inline double log_prior(const CaseControlState& state, const Priors& priors) {
  double lp = stats::normal_logpdf(state.alpha, 0.0, priors.coef_sd);
  for (double b : state.beta) lp += stats::normal_logpdf(b, 0.0, priors.coef_sd);
  if (state.baseline == BaselineKind::Parametric)
    for (double b : state.beta_control) lp += stats::normal_logpdf(b, 0.0, priors.coef_sd);
  return lp;
}

}  // namespace ppshare
