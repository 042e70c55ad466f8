#pragma once

// Synthetic point patterns by spatial thinning, Gaussian-process surfaces, and the
// data-generating protocols for the case-control and shared-component studies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ppshare/covariance.hpp"
#include "ppshare/design.hpp"
#include "ppshare/errors.hpp"
#include "ppshare/geometry.hpp"
#include "ppshare/random.hpp"
#include "ppshare/stats.hpp"

namespace ppshare {

/// How the shared component is split between the two processes.
enum class Weighting {
  Unif,     ///< exponents (delta, 1 - delta), delta in [0, 1]
  LogNorm,  ///< exponents (delta, 1 / delta), delta > 0
};

inline void validate_delta(Weighting w, double delta) {
  if (w == Weighting::Unif && !(delta >= 0.0 && delta <= 1.0))
    throw ValidationError("delta must lie in [0, 1] under the uniform weighting");
  if (w == Weighting::LogNorm && !(delta > 0.0 && std::isfinite(delta)))
    throw ValidationError("delta must be positive under the log-normal weighting");
}

inline std::pair<double, double> shared_exponents(Weighting w, double delta) {
  return w == Weighting::Unif ? std::pair{delta, 1.0 - delta} : std::pair{delta, 1.0 / delta};
}

inline constexpr double kLambdaMaxSafety = 1.2;

/// 1.2 times the largest intensity over the grid nodes.
template <typename Intensity>
double default_lambda_max(const IntegrationGrid& grid, Intensity&& intensity) {
  double m = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double v;
    if constexpr (std::is_invocable_v<Intensity, const Point&, std::size_t>)
      v = intensity(grid.nodes[i], grid.units[i]);
    else
      v = intensity(grid.nodes[i]);
    m = std::max(m, v);
  }
  return kLambdaMaxSafety * m;
}

/// Nonhomogeneous Poisson process on `window` by thinning a homogeneous process of rate
/// `lambda_max`. The intensity may take `(Point)` or `(Point, unit index)`. The bound is
/// checked at every grid node and at every candidate.
template <typename Intensity>
PointPattern simulate_by_thinning(const SpatialWindow& window, Intensity&& intensity, double lambda_max,
                                  std::uint64_t seed, const IntegrationGrid& grid) {
  if (!(lambda_max >= 0.0) || !std::isfinite(lambda_max)) throw ValidationError("lambda_max must be finite and >= 0");
  auto eval = [&](const Point& p, std::size_t unit) {
    if constexpr (std::is_invocable_v<Intensity, const Point&, std::size_t>)
      return static_cast<double>(intensity(p, unit));
    else
      return static_cast<double>(intensity(p));
  };
  auto exceeded = [&](const Point& p, double v) {
    std::ostringstream os;
    os.precision(10);
    os << "intensity " << v << " at (" << p.x << ", " << p.y << ") exceeds lambda_max " << lambda_max;
    return ValidationError(os.str());
  };
  const double slack = lambda_max * (1.0 + 1e-12);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = eval(grid.nodes[i], grid.units[i]);
    if (!(v <= slack)) throw exceeded(grid.nodes[i], v);
  }

  PointPattern out;
  if (lambda_max == 0.0) return out;
  Rng rng(seed);
  const auto& b = window.bbox();
  std::poisson_distribution<long long> count_dist(lambda_max * b.width() * b.height());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const long long n = count_dist(rng);
  for (long long k = 0; k < n; ++k) {
    const Point p{b.xmin + unif(rng) * b.width(), b.ymin + unif(rng) * b.height()};
    const double keep = unif(rng);
    const auto unit = window.locate(p);
    if (!unit) continue;
    const double v = eval(p, *unit);
    if (!(v <= slack)) throw exceeded(p, v);
    if (keep * lambda_max < v) out.points.push_back(p);
  }
  return out;
}

/// Range parameter of the exponential correlation exp(-d / phi): the mean of the value giving
/// correlation 0.05 at the 95th distance percentile and the value giving correlation 0.95 at
/// the 5th percentile, over all pairwise distances.
inline double fix_phi(std::span<const Point> locations) {
  if (locations.size() < 2) throw ValidationError("fix_phi needs at least two locations");
  std::vector<double> d;
  d.reserve(locations.size() * (locations.size() - 1) / 2);
  for (std::size_t i = 0; i < locations.size(); ++i)
    for (std::size_t j = i + 1; j < locations.size(); ++j) d.push_back(distance(locations[i], locations[j]));
  std::sort(d.begin(), d.end());
  if (d.back() == 0.0) throw ValidationError("fix_phi: all locations coincide (zero distances)");
  const double q95 = stats::quantile_sorted(d, 0.95);
  const double q05 = stats::quantile_sorted(d, 0.05);
  const double phi_far = -q95 / std::log(0.05);
  const double phi_near = -q05 / std::log(0.95);
  const double phi = 0.5 * (phi_far + phi_near);
  if (!(phi > 0.0)) throw ValidationError("fix_phi: degenerate distance quantiles");
  return phi;
}

/// Mean-zero Gaussian vector with covariance sigma^2 exp(-d / phi).
inline std::vector<double> draw_gp(std::span<const Point> locations, const GPParams& gp, std::uint64_t seed) {
  gp.validate();
  if (locations.empty()) return {};
  Eigen::MatrixXd cov = correlation_matrix(locations, gp.phi) * (gp.sigma * gp.sigma);
  const auto llt = cholesky_with_jitter(std::move(cov), kFactorJitter * gp.sigma * gp.sigma, "GP covariance");
  Rng rng(seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  Eigen::VectorXd z(static_cast<Eigen::Index>(locations.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = norm(rng);
  const Eigen::VectorXd g = llt.matrixL() * z;
  return {g.data(), g.data() + g.size()};
}

/// Each point kept independently with probability keep_prob.
inline PointPattern uniform_thin(const PointPattern& pattern, double keep_prob, std::uint64_t seed) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ValidationError("keep_prob must lie in (0, 1]");
  PointPattern out;
  out.window_id = pattern.window_id;
  if (keep_prob == 1.0) {
    out.points = pattern.points;
    return out;
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const auto& p : pattern.points)
    if (unif(rng) < keep_prob) out.points.push_back(p);
  return out;
}

/// NHPP with log-linear intensity exp(design * coef), constant within units.
inline PointPattern simulate_loglinear(const Design& design, const Eigen::VectorXd& coef, const IntegrationGrid& grid,
                                       std::uint64_t seed) {
  const Eigen::VectorXd lam = design.unit_predictors(coef).array().exp();
  auto intensity = [&](const Point&, std::size_t unit) { return lam(static_cast<Eigen::Index>(unit)); };
  return simulate_by_thinning(design.window(), intensity, lam.maxCoeff(), seed, grid);
}

/// Control ~ NHPP(exp(z'b_control)); case ~ NHPP(exp(z'b_control) exp(z'b_case)), both with
/// the closed-form baseline.
inline std::pair<PointPattern, PointPattern> simulate_case_control(const Design& control_design,
                                                                   const Eigen::VectorXd& control_coef,
                                                                   const Design& case_design,
                                                                   const Eigen::VectorXd& case_coef,
                                                                   const IntegrationGrid& grid, std::uint64_t seed) {
  if (&control_design.window() != &case_design.window())
    throw ValidationError("case and control designs must share one window");
  const Eigen::VectorXd eta0 = control_design.unit_predictors(control_coef);
  const Eigen::VectorXd eta1 = eta0 + case_design.unit_predictors(case_coef);
  const Eigen::VectorXd lam0 = eta0.array().exp();
  const Eigen::VectorXd lam1 = eta1.array().exp();
  auto control = simulate_by_thinning(
      control_design.window(), [&](const Point&, std::size_t u) { return lam0(static_cast<Eigen::Index>(u)); },
      lam0.maxCoeff(), derive_seed(seed, 1), grid);
  auto cases = simulate_by_thinning(
      case_design.window(), [&](const Point&, std::size_t u) { return lam1(static_cast<Eigen::Index>(u)); },
      lam1.maxCoeff(), derive_seed(seed, 2), grid);
  return {std::move(control), std::move(cases)};
}

/// Nearest grid node lookup over a uniform bucket index.
class NearestNodeIndex {
 public:
  explicit NearestNodeIndex(std::span<const Point> nodes) : nodes_(nodes.begin(), nodes.end()) {
    if (nodes_.empty()) throw ValidationError("nearest-node index over an empty node set");
    box_ = geom::bounds(nodes_);
    const double w = std::max(box_.width(), 1e-12), h = std::max(box_.height(), 1e-12);
    cell_ = std::sqrt(w * h / static_cast<double>(nodes_.size())) * 1.5;
    nx_ = static_cast<long>(std::ceil(w / cell_)) + 1;
    ny_ = static_cast<long>(std::ceil(h / cell_)) + 1;
    buckets_.assign(static_cast<std::size_t>(nx_ * ny_), {});
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto [ix, iy] = coords(nodes_[i]);
      buckets_[static_cast<std::size_t>(iy * nx_ + ix)].push_back(i);
    }
  }

  std::size_t nearest(const Point& p) const {
    const auto [cx, cy] = coords(p);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    const long rmax = std::max(nx_, ny_);
    for (long r = 0; r <= rmax; ++r) {
      for (long iy = cy - r; iy <= cy + r; ++iy) {
        if (iy < 0 || iy >= ny_) continue;
        for (long ix = cx - r; ix <= cx + r; ++ix) {
          if (ix < 0 || ix >= nx_) continue;
          if (std::max(std::abs(ix - cx), std::abs(iy - cy)) != r) continue;
          for (std::size_t i : buckets_[static_cast<std::size_t>(iy * nx_ + ix)]) {
            const double d = distance(p, nodes_[i]);
            if (d < best_d || (d == best_d && i < best)) {
              best_d = d;
              best = i;
            }
          }
        }
      }
      // every node in rings > r is at least r * cell_ away
      if (best_d < static_cast<double>(r) * cell_) break;
    }
    return best;
  }

 private:
  std::pair<long, long> coords(const Point& p) const {
    const long ix = std::clamp(static_cast<long>(std::floor((p.x - box_.xmin) / cell_)), 0L, nx_ - 1);
    const long iy = std::clamp(static_cast<long>(std::floor((p.y - box_.ymin) / cell_)), 0L, ny_ - 1);
    return {ix, iy};
  }

  std::vector<Point> nodes_;
  BoundingBox box_;
  double cell_{};
  long nx_{}, ny_{};
  std::vector<std::vector<std::size_t>> buckets_;
};

/// Truth of the shared-component model: process 1 has no intercept by convention.
struct SharedSpec {
  Eigen::VectorXd beta1;
  Eigen::VectorXd beta2;
  double delta{0.5};
  Weighting weighting{Weighting::Unif};
  GPParams gp;

  void validate(const Design& d1, const Design& d2) const {
    d1.check(beta1);
    d2.check(beta2);
    validate_delta(weighting, delta);
    gp.validate();
  }
};

struct SharedSimulation {
  PointPattern first;
  PointPattern second;
  std::vector<double> log_shared;  ///< realized log shared component at the grid nodes
};

/// Expected counts of both processes given a realized surface at the grid nodes.
inline std::pair<double, double> shared_expected_counts(const SharedSpec& spec, const Design& d1, const Design& d2,
                                                        std::span<const double> log_shared,
                                                        const IntegrationGrid& grid) {
  const auto [w1, w2] = shared_exponents(spec.weighting, spec.delta);
  const Eigen::VectorXd eta1 = d1.unit_predictors(spec.beta1);
  const Eigen::VectorXd eta2 = d2.unit_predictors(spec.beta2);
  double c1 = 0.0, c2 = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto u = static_cast<Eigen::Index>(grid.units[i]);
    c1 += grid.weights[i] * std::exp(w1 * log_shared[i] + eta1(u));
    c2 += grid.weights[i] * std::exp(w2 * log_shared[i] + eta2(u));
  }
  return {c1, c2};
}

/// Thins both processes given an already realized log shared surface at the grid nodes; the
/// surface is extended to candidate locations by nearest-node value.
inline SharedSimulation thin_shared_pair(const Design& d1, const Design& d2, const SharedSpec& spec,
                                         const IntegrationGrid& grid, std::vector<double> log_shared,
                                         std::uint64_t seed) {
  spec.validate(d1, d2);
  if (log_shared.size() != grid.size()) throw ValidationError("shared surface does not match the grid");
  const auto [w1, w2] = shared_exponents(spec.weighting, spec.delta);
  const Eigen::VectorXd eta1 = d1.unit_predictors(spec.beta1);
  const Eigen::VectorXd eta2 = d2.unit_predictors(spec.beta2);
  const NearestNodeIndex index(grid.nodes);
  const auto [gmin, gmax] = std::minmax_element(log_shared.begin(), log_shared.end());

  auto make = [&](double w, const Eigen::VectorXd& eta, std::uint64_t s) {
    const double bound = std::exp(std::max(w * *gmin, w * *gmax) + eta.maxCoeff());
    auto intensity = [&](const Point& p, std::size_t unit) {
      return std::exp(w * log_shared[index.nearest(p)] + eta(static_cast<Eigen::Index>(unit)));
    };
    return simulate_by_thinning(d1.window(), intensity, bound, s, grid);
  };
  SharedSimulation out;
  out.first = make(w1, eta1, derive_seed(seed, 11));
  out.second = make(w2, eta2, derive_seed(seed, 12));
  out.log_shared = std::move(log_shared);
  return out;
}

/// Draws log lambda(s) ~ GP(0, sigma^2 exp(-d/phi)) exactly at the grid nodes, then thins
/// lambda_1 = lambda^{w1} exp(z'b1) and lambda_2 = lambda^{w2} exp(z'b2).
inline SharedSimulation simulate_shared_pair(const Design& d1, const Design& d2, const SharedSpec& spec,
                                             const IntegrationGrid& grid, std::uint64_t seed) {
  spec.validate(d1, d2);
  auto g = draw_gp(grid.nodes, spec.gp, derive_seed(seed, 10));
  return thin_shared_pair(d1, d2, spec, grid, std::move(g), seed);
}

}  // namespace ppshare
