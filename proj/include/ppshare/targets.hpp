#pragma once

// Posterior targets for the Metropolis sampler. Event contributions to the log-likelihood are
// linear in the parameters, so events are reduced to sufficient statistics once and every
// update only re-evaluates the grid quadrature.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ppshare/design.hpp"
#include "ppshare/errors.hpp"
#include "ppshare/geometry.hpp"
#include "ppshare/model.hpp"
#include "ppshare/simulate.hpp"
#include "ppshare/stats.hpp"

namespace ppshare {

/// Inputs of an NHPP whose log intensity is offset(s) + x(s)'theta.
struct LogLinearData {
  std::vector<std::string> names;
  Eigen::MatrixXd node_design;   ///< grid nodes x parameters
  Eigen::VectorXd node_offset;   ///< per node
  Eigen::VectorXd node_weight;   ///< quadrature weights
  Eigen::MatrixXd event_design;  ///< events x parameters
  Eigen::VectorXd event_offset;

  std::size_t dimension() const { return static_cast<std::size_t>(node_design.cols()); }
};

/// Stacks the columns of several designs (evaluated at the owning units) into one.
inline Eigen::MatrixXd stack_designs(std::span<const Design* const> designs, std::span<const std::size_t> units,
                                     bool leading_intercept) {
  Eigen::Index p = leading_intercept ? 1 : 0;
  for (const auto* d : designs) p += static_cast<Eigen::Index>(d->dimension());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(units.size()), p);
  for (std::size_t r = 0; r < units.size(); ++r) {
    Eigen::Index c = 0;
    if (leading_intercept) x(static_cast<Eigen::Index>(r), c++) = 1.0;
    for (const auto* d : designs) {
      const auto& rows = d->unit_rows();
      for (Eigen::Index j = 0; j < rows.cols(); ++j)
        x(static_cast<Eigen::Index>(r), c++) = rows(static_cast<Eigen::Index>(units[r]), j);
    }
  }
  return x;
}

class LogLinearNhppTarget {
 public:
  LogLinearNhppTarget(LogLinearData data, Priors priors, Eigen::VectorXd init)
      : data_(std::move(data)), priors_(priors), theta_(std::move(init)) {
    if (static_cast<std::size_t>(theta_.size()) != data_.dimension()) throw ValidationError("initial state length mismatch");
    suff_ = data_.event_design.colwise().sum().transpose();
    offset_sum_ = data_.event_offset.sum();
    const auto p = static_cast<Eigen::Index>(dimension());
    center_ = Eigen::VectorXd::Zero(p);
    basis_ = Eigen::MatrixXd::Identity(p, p);
    basis_inverse_ = basis_;
    node_basis_ = data_.node_design;
    z_ = theta_;
    refresh();
  }

  /// Samples z with theta = m + C z, C C' the inverse posterior curvature at m. Returns false and
  /// keeps the identity map when the curvature is not positive definite.
  bool precondition(const Eigen::VectorXd& m) {
    if (m.size() != theta_.size() || !m.allFinite()) throw ValidationError("preconditioning centre has wrong length");
    const Eigen::VectorXd lam = (data_.node_offset + data_.node_design * m).array().exp() * data_.node_weight.array();
    Eigen::MatrixXd h = data_.node_design.transpose() * lam.asDiagonal() * data_.node_design;
    h.diagonal().array() += 1.0 / (priors_.coef_sd * priors_.coef_sd);
    const Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) return false;
    const Eigen::MatrixXd lt = llt.matrixU();
    center_ = m;
    basis_inverse_ = lt;
    basis_ = lt.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(h.rows(), h.cols()));
    node_basis_ = data_.node_design * basis_;
    z_ = basis_inverse_ * (theta_ - center_);
    return true;
  }

  std::size_t dimension() const { return data_.dimension(); }
  std::vector<std::string> names() const { return data_.names; }
  double coordinate(std::size_t i) const { return z_(static_cast<Eigen::Index>(i)); }
  double log_density() const { return lp_; }
  const LogLinearData& data() const { return data_; }
  const Eigen::VectorXd& theta() const { return theta_; }

  double propose(std::size_t i, double value) {
    const auto j = static_cast<Eigen::Index>(i);
    staged_index_ = j;
    staged_value_ = value;
    const double delta = value - z_(j);
    staged_eta_ = eta_ + delta * node_basis_.col(j);
    staged_integral_ = integral(staged_eta_);
    staged_theta_ = theta_ + delta * basis_.col(j);
    staged_lp_ = evaluate(staged_theta_, staged_integral_);
    return staged_lp_;
  }
  void accept() {
    z_(staged_index_) = staged_value_;
    theta_.swap(staged_theta_);
    eta_.swap(staged_eta_);
    integral_ = staged_integral_;
    lp_ = staged_lp_;
  }
  void reject() {}

  void refresh() {
    theta_ = center_ + basis_ * z_;
    eta_ = data_.node_offset + data_.node_design * theta_;
    integral_ = integral(eta_);
    lp_ = evaluate(theta_, integral_);
  }

  std::vector<double> natural_values() const { return {theta_.data(), theta_.data() + theta_.size()}; }

  std::vector<double> initial_scales() const {
    // 2.4 / sqrt(conditional precision) at the current state
    const Eigen::VectorXd lam = eta_.array().exp() * data_.node_weight.array();
    std::vector<double> s(dimension());
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto c = node_basis_.col(static_cast<Eigen::Index>(i));
      const double prec = (lam.array() * c.array().square()).sum() +
                          basis_.col(static_cast<Eigen::Index>(i)).squaredNorm() / (priors_.coef_sd * priors_.coef_sd);
      s[i] = 2.4 / std::sqrt(prec);
    }
    return s;
  }

  double loglik() const { return offset_sum_ + suff_.dot(theta_) - integral_; }
  double integral_term() const { return integral_; }

  /// log intensity at each event minus integral / n, at the current state.
  Eigen::VectorXd pointwise() const {
    const double n = static_cast<double>(data_.event_design.rows());
    return (data_.event_offset + data_.event_design * theta_).array() - integral_ / n;
  }

  void set_state(const Eigen::VectorXd& theta) {
    if (theta.size() != theta_.size()) throw ValidationError("state length mismatch");
    theta_ = theta;
    z_ = basis_inverse_ * (theta_ - center_);
    refresh();
  }

 private:
  double integral(const Eigen::VectorXd& eta) const { return data_.node_weight.dot(eta.array().exp().matrix()); }

  double evaluate(const Eigen::VectorXd& th, double integ) const {
    double lp = offset_sum_ + suff_.dot(th) - integ;
    for (Eigen::Index i = 0; i < th.size(); ++i) lp += stats::normal_logpdf(th(i), 0.0, priors_.coef_sd);
    return lp;
  }

  LogLinearData data_;
  Priors priors_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd z_;
  Eigen::VectorXd center_;
  Eigen::MatrixXd basis_;
  Eigen::MatrixXd basis_inverse_;
  Eigen::MatrixXd node_basis_;
  Eigen::VectorXd suff_;
  double offset_sum_{};
  Eigen::VectorXd eta_;
  double integral_{};
  double lp_{};
  Eigen::Index staged_index_{};
  double staged_value_{};
  Eigen::VectorXd staged_theta_;
  Eigen::VectorXd staged_eta_;
  double staged_integral_{};
  double staged_lp_{};
};

/// Posterior mode of a log-linear NHPP with the coefficient prior, by damped Newton.
inline Eigen::VectorXd loglinear_mode(const LogLinearData& data, const Priors& priors, int max_iter = 200) {
  const Eigen::Index p = static_cast<Eigen::Index>(data.dimension());
  const Eigen::VectorXd suff = data.event_design.colwise().sum().transpose();
  const double prior_prec = 1.0 / (priors.coef_sd * priors.coef_sd);
  auto objective = [&](const Eigen::VectorXd& th) {
    const Eigen::VectorXd eta = data.node_offset + data.node_design * th;
    return suff.dot(th) - data.node_weight.dot(eta.array().exp().matrix()) - 0.5 * prior_prec * th.squaredNorm();
  };
  Eigen::VectorXd th = Eigen::VectorXd::Zero(p);
  double f = objective(th);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd lam =
        (data.node_offset + data.node_design * th).array().exp() * data.node_weight.array();
    const Eigen::VectorXd grad = suff - data.node_design.transpose() * lam - prior_prec * th;
    Eigen::MatrixXd hess = data.node_design.transpose() * lam.asDiagonal() * data.node_design;
    hess.diagonal().array() += prior_prec;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = th + step;
    double fn = objective(next);
    while (!(fn >= f) && t > 1e-12) {
      t *= 0.5;
      next = th + t * step;
      fn = objective(next);
    }
    if (!(fn >= f)) break;
    th = next;
    const bool done = std::abs(fn - f) < 1e-10 * (1.0 + std::abs(f));
    f = fn;
    if (done) break;
  }
  if (!th.allFinite()) throw NumericalError("NHPP mode search diverged");
  return th;
}

/// How the knot block is represented in the sampler.
///  Direct: coordinates are the knot values v ~ N(0, sigma^2 R).
///  Whitened: v = sigma L w with R = L L' and w ~ N(0, I).
///  Preconditioned: whitened knots; the vector psi = (beta1, beta2, c1, c2, w), with c1, c2 the log
///    multipliers of the shared term in each process, is sampled in coordinates z where
///    psi = m + C z and C C' inverts a Gauss-Newton curvature of the log posterior at m. Each move
///    is still a univariate normal step, along one column of C.
enum class KnotParameterization { Direct, Whitened, Preconditioned };

inline std::string to_string(KnotParameterization k) {
  switch (k) {
    case KnotParameterization::Direct: return "direct";
    case KnotParameterization::Whitened: return "whitened";
    case KnotParameterization::Preconditioned: return "preconditioned";
  }
  return "?";
}

inline KnotParameterization parse_knot_parameterization(const std::string& s) {
  if (s == "direct") return KnotParameterization::Direct;
  if (s == "whitened") return KnotParameterization::Whitened;
  if (s == "preconditioned") return KnotParameterization::Preconditioned;
  throw ValidationError("unknown knot parameterization '" + s + "'");
}

/// Shared-component posterior. Unrotated coordinates in scan order: beta1, beta2, log sigma,
/// delta on the logit (uniform weighting) or log (log-normal weighting) scale, then one per knot.
class SharedComponentTarget {
 public:
  SharedComponentTarget(const Design& d1, const Design& d2, const PredictiveProcess& pp, const IntegrationGrid& grid,
                        const PointPattern& first, const PointPattern& second, Weighting weighting, Priors priors,
                        SharedComponentState init, KnotParameterization param = KnotParameterization::Direct)
      : weighting_(weighting), param_(param), priors_(priors), p1_(static_cast<Eigen::Index>(d1.dimension())),
        p2_(static_cast<Eigen::Index>(d2.dimension())), p_(p1_ + p2_), k_(static_cast<Eigen::Index>(pp.size())),
        m_(p_ + k_) {
    init.weighting = weighting;
    init.validate(d1, d2, pp.size());
    if (first.empty() || second.empty()) throw ValidationError("shared-component fit needs events in both patterns");
    phi_ = init.phi;
    grid_weight_ = Eigen::Map<const Eigen::VectorXd>(grid.weights.data(), static_cast<Eigen::Index>(grid.size()));
    const std::vector<const Design*> only1{&d1}, only2{&d2};
    x1_ = stack_designs(only1, grid.units, false);
    x2_ = stack_designs(only2, grid.units, false);
    const auto u1 = locate_all(d1.window(), first.points);
    const auto u2 = locate_all(d1.window(), second.points);
    event_x1_ = stack_designs(only1, u1, false);
    event_x2_ = stack_designs(only2, u2, false);
    s1_ = event_x1_.colwise().sum().transpose();
    s2_ = event_x2_.colwise().sum().transpose();

    if (param_ == KnotParameterization::Direct) {
      basis_ = Eigen::MatrixXd::Identity(k_, k_);
      precision_ = pp.correlation_inverse();
    } else {
      basis_ = pp.factor().matrixL();
      precision_ = Eigen::MatrixXd::Identity(k_, k_);
    }
    log_det_r_ = pp.log_det_correlation();
    node_b_ = pp.weights(grid.nodes) * basis_;
    event_b1_ = pp.weights(first.points) * basis_;
    event_b2_ = pp.weights(second.points) * basis_;
    a1_ = event_b1_.colwise().sum().transpose();
    a2_ = event_b2_.colwise().sum().transpose();

    for (const auto& n : d1.names()) names_.push_back("p1." + n);
    for (const auto& n : d2.names()) names_.push_back("p2." + n);
    names_.emplace_back("sigma");
    names_.emplace_back("delta");
    for (Eigen::Index i = 0; i < k_; ++i) names_.push_back("knot." + std::to_string(i));

    theta_.resize(m_);
    theta_ << init.beta1, init.beta2, to_coordinates(init.knot_logvals, init.sigma);
    log_sigma_ = std::log(init.sigma);
    tdelta_ = to_delta_scale(init.delta);
    z_ = theta_;
    rebuild();
    if (rotated()) {
      find_block_mode();
      recalibrate();
    }
  }

  std::size_t dimension() const { return static_cast<std::size_t>(m_ + 2); }
  std::vector<std::string> names() const { return names_; }
  double log_density() const { return lp_; }
  KnotParameterization parameterization() const { return param_; }

  double coordinate(std::size_t i) const {
    const auto j = static_cast<Eigen::Index>(i);
    if (rotated()) return z_(j);
    if (j == p_) return log_sigma_;
    if (j == p_ + 1) return tdelta_;
    return z_(block_index(j));
  }

  double propose(std::size_t i, double value) {
    const auto j = static_cast<Eigen::Index>(i);
    st_.index = j;
    st_.value = value;
    st_.i1 = i1_;
    st_.i2 = i2_;
    st_.q = q_;
    st_.ch1 = st_.ch2 = st_.chb = false;
    Params th{theta_, log_sigma_, tdelta_};
    if (rotated()) {
      st_.kind = Kind::Rotated;
      const double step = value - z_(j);
      const auto [e1, e2] = multipliers(th);
      const double c1 = std::log(e1) + step * rot_(p_, j);
      const double c2 = std::log(e2) + step * rot_(p_ + 1, j);
      std::tie(th.log_sigma, th.tdelta) = from_log_multipliers(c1, c2);
      th.theta.head(p_) += step * rot_.col(j).head(p_);
      th.theta.tail(k_) += step * rot_.col(j).tail(k_);
      st_.eta1 = eta1_ + step * dir1_.col(j);
      st_.eta2 = eta2_ + step * dir2_.col(j);
      st_.base = base_ + step * dirb_.col(j);
      st_.ch1 = st_.ch2 = st_.chb = true;
      const Eigen::VectorXd du = step * rot_.col(j).tail(k_);
      st_.q = q_ + 2.0 * du.dot(pu_) + du.squaredNorm();
      st_.i1 = integral(std::exp(c1), st_.base, st_.eta1);
      st_.i2 = integral(std::exp(c2), st_.base, st_.eta2);
    } else if (j == p_ || j == p_ + 1) {
      (j == p_ ? th.log_sigma : th.tdelta) = value;
      st_.kind = Kind::Scalar;
      if (j == p_ + 1 || param_ != KnotParameterization::Direct) {
        const auto [n1, n2] = multipliers(th);
        st_.i1 = integral(n1, base_, eta1_);
        st_.i2 = integral(n2, base_, eta2_);
      }
    } else {
      st_.kind = Kind::Block;
      const Eigen::Index b = block_index(j);
      const double step = value - z_(b);
      const auto [e1, e2] = multipliers(th);
      th.theta(b) += step;
      if (b < p1_) {
        st_.eta1 = eta1_ + step * x1_.col(b);
        st_.ch1 = true;
      } else if (b < p_) {
        st_.eta2 = eta2_ + step * x2_.col(b - p1_);
        st_.ch2 = true;
      } else {
        const Eigen::Index k = b - p_;
        st_.base = base_ + step * node_b_.col(k);
        st_.chb = true;
        st_.q = q_ + 2.0 * step * pu_(k) + step * step * precision_(k, k);
      }
      const Eigen::VectorXd& base = st_.chb ? st_.base : base_;
      if (st_.ch1 || st_.chb) st_.i1 = integral(e1, base, st_.ch1 ? st_.eta1 : eta1_);
      if (st_.ch2 || st_.chb) st_.i2 = integral(e2, base, st_.ch2 ? st_.eta2 : eta2_);
    }
    st_.theta = std::move(th.theta);
    st_.log_sigma = th.log_sigma;
    st_.tdelta = th.tdelta;
    st_.lp = evaluate({st_.theta, st_.log_sigma, st_.tdelta}, st_.i1, st_.i2, st_.q);
    return st_.lp;
  }

  void accept() {
    if (st_.kind == Kind::Scalar) {
      log_sigma_ = st_.log_sigma;
      tdelta_ = st_.tdelta;
    } else {
      (rotated() ? z_(st_.index) : z_(block_index(st_.index))) = st_.value;
      log_sigma_ = st_.log_sigma;
      tdelta_ = st_.tdelta;
      if (st_.chb) pu_ += precision_ * (st_.theta.tail(k_) - theta_.tail(k_));
      theta_.swap(st_.theta);
      if (st_.ch1) eta1_.swap(st_.eta1);
      if (st_.ch2) eta2_.swap(st_.eta2);
      if (st_.chb) base_.swap(st_.base);
    }
    i1_ = st_.i1;
    i2_ = st_.i2;
    q_ = st_.q;
    lp_ = st_.lp;
  }
  void reject() {}

  /// Recomputes every cached quantity from the sampler coordinates.
  void refresh() {
    if (rotated()) {
      set_psi(center_ + rot_ * z_);
    } else {
      theta_ = z_;
    }
    rebuild();
  }

  /// Preconditioned runs: re-centres the coordinates on the current state and rebuilds C from the
  /// curvature there. Returns new proposal scales (non-positive entries: keep).
  std::vector<double> recalibrate() {
    std::vector<double> scales(dimension(), 0.0);
    if (!rotated()) return scales;
    const Eigen::LLT<Eigen::MatrixXd> llt(psi_curvature());
    if (llt.info() != Eigen::Success) return scales;
    const Eigen::Index d = m_ + 2;
    center_ = psi();
    rot_ = llt.matrixU().solve(Eigen::MatrixXd::Identity(d, d));
    z_ = Eigen::VectorXd::Zero(d);
    dir1_ = x1_ * rot_.topRows(p1_);
    dir2_ = x2_ * rot_.middleRows(p1_, p2_);
    dirb_ = node_b_ * rot_.bottomRows(k_);
    refresh();
    std::fill(scales.begin(), scales.end(), 2.4);
    return scales;
  }

  std::vector<double> natural_values() const {
    std::vector<double> out;
    out.reserve(dimension());
    for (Eigen::Index i = 0; i < p_; ++i) out.push_back(theta_(i));
    out.push_back(std::exp(log_sigma_));
    out.push_back(from_delta_scale(tdelta_));
    const Eigen::VectorXd v = knot_values();
    for (Eigen::Index i = 0; i < k_; ++i) out.push_back(v(i));
    return out;
  }

  std::vector<double> initial_scales() const {
    if (rotated()) return std::vector<double>(dimension(), 2.4);
    std::vector<double> out(dimension(), 0.2);
    const auto [e1, e2] = multipliers(current());
    const Eigen::VectorXd l1 = grid_weight_.array() * (e1 * base_ + eta1_).array().exp();
    const Eigen::VectorXd l2 = grid_weight_.array() * (e2 * base_ + eta2_).array().exp();
    const double pp = 1.0 / (priors_.coef_sd * priors_.coef_sd);
    for (Eigen::Index i = 0; i < p1_; ++i)
      out[static_cast<std::size_t>(i)] = 2.4 / std::sqrt((l1.array() * x1_.col(i).array().square()).sum() + pp);
    for (Eigen::Index i = 0; i < p2_; ++i)
      out[static_cast<std::size_t>(p1_ + i)] = 2.4 / std::sqrt((l2.array() * x2_.col(i).array().square()).sum() + pp);
    return out;
  }

  /// State on the reporting scale.
  SharedComponentState state() const {
    SharedComponentState s;
    s.delta = from_delta_scale(tdelta_);
    s.weighting = weighting_;
    s.sigma = std::exp(log_sigma_);
    s.phi = phi_;
    s.knot_logvals = knot_values();
    s.beta1 = theta_.head(p1_);
    s.beta2 = theta_.segment(p1_, p2_);
    return s;
  }

  /// Sets the state from reporting-scale values in natural_values() order.
  void set_natural(std::span<const double> values) {
    if (values.size() != dimension()) throw ValidationError("state vector length mismatch");
    Eigen::VectorXd theta(m_), v(k_);
    std::size_t c = 0;
    for (Eigen::Index i = 0; i < p_; ++i) theta(i) = values[c++];
    const double sigma = values[c++];
    const double delta = values[c++];
    for (Eigen::Index i = 0; i < k_; ++i) v(i) = values[c++];
    log_sigma_ = std::log(sigma);
    tdelta_ = to_delta_scale(delta);
    theta.tail(k_) = to_coordinates(v, sigma);
    theta_ = theta;
    z_ = rotated() ? Eigen::VectorXd(rot_.triangularView<Eigen::Upper>().solve(psi() - center_)) : theta;
    rebuild();
  }

  double loglik() const {
    const auto [e1, e2] = multipliers(current());
    return point_terms(theta_, e1, e2) - i1_ - i2_;
  }

  /// Per-event log intensity minus that process's integral split evenly over its events;
  /// process-1 events first.
  Eigen::VectorXd pointwise() const {
    const auto [e1, e2] = multipliers(current());
    const Eigen::Index n1 = event_b1_.rows(), n2 = event_b2_.rows();
    const Eigen::VectorXd u = theta_.tail(k_);
    Eigen::VectorXd out(n1 + n2);
    out.head(n1) = (e1 * (event_b1_ * u) + event_x1_ * theta_.head(p1_)).array() - i1_ / static_cast<double>(n1);
    out.tail(n2) =
        (e2 * (event_b2_ * u) + event_x2_ * theta_.segment(p1_, p2_)).array() - i2_ / static_cast<double>(n2);
    return out;
  }

  /// Log shared component at the grid nodes for the current state.
  Eigen::VectorXd node_shared() const { return knot_scale(log_sigma_) * base_; }

 private:
  enum class Kind { Block, Scalar, Rotated };
  struct Staged {
    Kind kind{Kind::Block};
    Eigen::Index index{};
    double value{};
    Eigen::VectorXd theta, eta1, eta2, base;
    bool ch1{}, ch2{}, chb{};
    double log_sigma{}, tdelta{};
    double i1{}, i2{}, q{}, lp{};
  };
  struct Params {
    Eigen::VectorXd theta;  ///< beta1, beta2, knot coordinates
    double log_sigma{}, tdelta{};
  };

  bool rotated() const { return param_ == KnotParameterization::Preconditioned; }
  Params current() const { return {theta_, log_sigma_, tdelta_}; }

  Eigen::Index block_index(Eigen::Index coord) const { return coord < p_ ? coord : coord - 2; }

  /// (beta1, beta2, c1, c2, w) for the current state.
  Eigen::VectorXd psi() const {
    const auto [e1, e2] = multipliers(current());
    Eigen::VectorXd out(m_ + 2);
    out << theta_.head(p_), std::log(e1), std::log(e2), theta_.tail(k_);
    return out;
  }

  void set_psi(const Eigen::VectorXd& v) {
    theta_.head(p_) = v.head(p_);
    theta_.tail(k_) = v.tail(k_);
    std::tie(log_sigma_, tdelta_) = from_log_multipliers(v(p_), v(p_ + 1));
  }

  /// Caches (linear predictors, shared term, integrals, log density) from theta, sigma, delta.
  void rebuild() {
    eta1_ = x1_ * theta_.head(p1_);
    eta2_ = x2_ * theta_.segment(p1_, p2_);
    base_ = node_b_ * theta_.tail(k_);
    pu_ = precision_ * theta_.tail(k_);
    q_ = theta_.tail(k_).dot(pu_);
    const auto [e1, e2] = multipliers(current());
    i1_ = integral(e1, base_, eta1_);
    i2_ = integral(e2, base_, eta2_);
    lp_ = evaluate(current(), i1_, i2_, q_);
  }

  double knot_scale(double log_sigma) const {
    return param_ == KnotParameterization::Direct ? 1.0 : std::exp(log_sigma);
  }

  Eigen::VectorXd knot_values() const { return knot_scale(log_sigma_) * (basis_ * theta_.tail(k_)); }

  Eigen::VectorXd to_coordinates(const Eigen::VectorXd& v, double sigma) const {
    if (param_ == KnotParameterization::Direct) return v;
    return basis_.triangularView<Eigen::Lower>().solve(v) / sigma;
  }

  double to_delta_scale(double delta) const {
    return weighting_ == Weighting::Unif ? stats::logit(delta) : std::log(delta);
  }
  double from_delta_scale(double t) const {
    return weighting_ == Weighting::Unif ? stats::inv_logit(t) : std::exp(t);
  }

  /// (log sigma, delta scale) from the log multipliers of a whitened shared term. The map from
  /// (log sigma, delta scale) has constant Jacobian for both weightings.
  std::pair<double, double> from_log_multipliers(double c1, double c2) const {
    if (weighting_ == Weighting::Unif) {
      const double hi = std::max(c1, c2);
      return {hi + std::log(std::exp(c1 - hi) + std::exp(c2 - hi)), c1 - c2};
    }
    return {0.5 * (c1 + c2), 0.5 * (c1 - c2)};
  }

  /// Exponents applied to node_b * u in each process.
  std::pair<double, double> multipliers(const Params& th) const {
    const auto [w1, w2] = shared_exponents(weighting_, from_delta_scale(th.tdelta));
    const double c = knot_scale(th.log_sigma);
    return {w1 * c, w2 * c};
  }

  double integral(double e, const Eigen::VectorXd& base, const Eigen::VectorXd& eta) const {
    return grid_weight_.dot((e * base + eta).array().exp().matrix());
  }

  double point_terms(const Eigen::VectorXd& theta, double e1, double e2) const {
    const auto u = theta.tail(k_);
    return e1 * a1_.dot(u) + theta.head(p1_).dot(s1_) + e2 * a2_.dot(u) + theta.segment(p1_, p2_).dot(s2_);
  }

  double evaluate(const Params& th, double i1, double i2, double q) const {
    const auto [e1, e2] = multipliers(th);
    double lp = point_terms(th.theta, e1, e2) - i1 - i2;
    for (Eigen::Index i = 0; i < p_; ++i) lp += stats::normal_logpdf(th.theta(i), 0.0, priors_.coef_sd);
    const double sigma = std::exp(th.log_sigma);
    // Inverse-Gamma prior on sigma plus the log-scale Jacobian
    lp += stats::inverse_gamma_logpdf(sigma, priors_.sigma_shape, priors_.sigma_scale) + th.log_sigma;
    if (weighting_ == Weighting::Unif) {
      // Uniform(0,1) on delta; Jacobian of the logit
      const double d = stats::inv_logit(th.tdelta);
      lp += std::log(d) + std::log1p(-d);
    } else {
      // the Normal prior is placed on log(delta) directly
      lp += stats::normal_logpdf(th.tdelta, 0.0, priors_.log_delta_sd);
    }
    if (param_ == KnotParameterization::Direct) {
      lp += gp_log_density(q, log_det_r_, static_cast<std::size_t>(k_), sigma);
    } else {
      lp += -0.5 * q - 0.5 * static_cast<double>(k_) * std::log(2.0 * std::numbers::pi);
    }
    return std::isfinite(lp) ? lp : stats::kNegInf;
  }

  /// Gauss-Newton curvature of the negative log posterior in psi = (beta1, beta2, c1, c2, w), or
  /// in (beta1, beta2, w) alone when `with_multipliers` is false.
  Eigen::MatrixXd psi_curvature(bool with_multipliers = true) const {
    const auto [e1, e2] = multipliers(current());
    const Eigen::VectorXd l1 = grid_weight_.array() * (e1 * base_ + eta1_).array().exp();
    const Eigen::VectorXd l2 = grid_weight_.array() * (e2 * base_ + eta2_).array().exp();
    const Eigen::Index n = grid_weight_.size();
    const Eigen::Index extra = with_multipliers ? 2 : 0;
    const Eigen::Index d = m_ + extra;
    // columns of d(log lambda)/d(psi) for each process
    Eigen::MatrixXd g1 = Eigen::MatrixXd::Zero(n, d), g2 = Eigen::MatrixXd::Zero(n, d);
    g1.leftCols(p1_) = x1_;
    g2.middleCols(p1_, p2_) = x2_;
    if (with_multipliers) {
      g1.col(p_) = e1 * base_;
      g2.col(p_ + 1) = e2 * base_;
    }
    g1.rightCols(k_) = e1 * node_b_;
    g2.rightCols(k_) = e2 * node_b_;
    Eigen::MatrixXd h = g1.transpose() * l1.asDiagonal() * g1 + g2.transpose() * l2.asDiagonal() * g2;
    h.topLeftCorner(p_, p_).diagonal().array() += 1.0 / (priors_.coef_sd * priors_.coef_sd);
    if (with_multipliers) h.block(p_, p_, 2, 2).diagonal().array() += 1.0;
    const double prior_scale = param_ == KnotParameterization::Direct ? std::exp(-2.0 * log_sigma_) : 1.0;
    h.bottomRightCorner(k_, k_) += prior_scale * precision_;
    return h;
  }

  Eigen::VectorXd block_gradient() const {
    const auto [e1, e2] = multipliers(current());
    const Eigen::VectorXd l1 = grid_weight_.array() * (e1 * base_ + eta1_).array().exp();
    const Eigen::VectorXd l2 = grid_weight_.array() * (e2 * base_ + eta2_).array().exp();
    const double prior_prec = 1.0 / (priors_.coef_sd * priors_.coef_sd);
    const double prior_scale = param_ == KnotParameterization::Direct ? std::exp(-2.0 * log_sigma_) : 1.0;
    Eigen::VectorXd g(m_);
    g.head(p1_) = s1_ - x1_.transpose() * l1 - prior_prec * theta_.head(p1_);
    g.segment(p1_, p2_) = s2_ - x2_.transpose() * l2 - prior_prec * theta_.segment(p1_, p2_);
    g.tail(k_) = e1 * a1_ + e2 * a2_ - node_b_.transpose() * (e1 * l1 + e2 * l2) - prior_scale * pu_;
    return g;
  }

  /// Newton ascent on (beta1, beta2, w) with sigma and delta held fixed; that block posterior is
  /// log-concave, and there the Gauss-Newton curvature is the exact Hessian.
  void find_block_mode() {
    for (int it = 0; it < 50; ++it) {
      const Eigen::VectorXd step = psi_curvature(false).llt().solve(block_gradient());
      const Eigen::VectorXd start = theta_;
      const double lp0 = lp_;
      for (double t = 1.0; t > 1e-8; t *= 0.5) {
        theta_ = start + t * step;
        rebuild();
        if (lp_ >= lp0) break;
      }
      if (!(lp_ >= lp0)) {
        theta_ = start;
        rebuild();
        break;
      }
      if (lp_ - lp0 < 1e-8 * (1.0 + std::abs(lp0))) break;
    }
    z_ = theta_;
  }

  Weighting weighting_;
  KnotParameterization param_;
  Priors priors_;
  Eigen::Index p1_, p2_, p_, k_, m_;
  double phi_{};
  std::vector<std::string> names_;
  Eigen::VectorXd grid_weight_;
  Eigen::MatrixXd x1_, x2_, event_x1_, event_x2_;
  Eigen::VectorXd s1_, s2_;
  Eigen::MatrixXd basis_, precision_;
  double log_det_r_{};
  Eigen::MatrixXd node_b_, event_b1_, event_b2_;
  Eigen::VectorXd a1_, a2_;

  // sampler coordinates: theta itself when unrotated, z when preconditioned
  Eigen::VectorXd center_, z_;
  Eigen::MatrixXd rot_, dir1_, dir2_, dirb_;

  Eigen::VectorXd theta_;
  double log_sigma_{}, tdelta_{};
  Eigen::VectorXd base_, eta1_, eta2_, pu_;
  double q_{}, i1_{}, i2_{}, lp_{};
  Staged st_;
};

}  // namespace ppshare
