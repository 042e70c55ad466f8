#pragma once

// Isotropic Gaussian kernel density estimate of a point pattern, used as a plug-in baseline
// intensity. No edge correction.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "ppshare/errors.hpp"
#include "ppshare/geometry.hpp"
#include "ppshare/stats.hpp"

namespace ppshare {

enum class KdeNormalization {
  Density,    ///< integrates to 1 over the plane
  Intensity,  ///< integrates to n
};

/// Relative floor applied to every evaluation: 1e-10 events per window area.
inline constexpr double kKdeFloor = 1e-10;

struct KDEstimate {
  std::vector<Point> points;
  double bandwidth{};
  double window_area{};

  std::size_t source_n() const { return points.size(); }
  /// Density-scale floor; the intensity-scale floor is n times this.
  double density_floor() const { return kKdeFloor / window_area; }
};

/// Scott's rule n^(-1/6) * sd, averaged over the two axes.
inline double scott_bandwidth(std::span<const Point> pts) {
  if (pts.size() < 2) throw ValidationError("automatic bandwidth needs at least two points");
  std::vector<double> xs, ys;
  xs.reserve(pts.size());
  ys.reserve(pts.size());
  for (const auto& p : pts) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  const double factor = std::pow(static_cast<double>(pts.size()), -1.0 / 6.0);
  const double h = factor * 0.5 * (stats::sd(xs) + stats::sd(ys));
  if (!(h > 0.0)) throw ValidationError("automatic bandwidth is zero (all points coincide)");
  return h;
}

inline KDEstimate fit_kde(const PointPattern& pattern, std::optional<double> bandwidth, double window_area) {
  if (pattern.empty()) throw ValidationError("cannot fit a kernel density to an empty pattern");
  if (!(window_area > 0.0)) throw ValidationError("window area must be positive");
  KDEstimate est;
  est.points = pattern.points;
  est.window_area = window_area;
  if (bandwidth) {
    if (!(*bandwidth > 0.0) || !std::isfinite(*bandwidth)) throw ValidationError("bandwidth must be positive");
    est.bandwidth = *bandwidth;
  } else {
    est.bandwidth = scott_bandwidth(pattern.points);
  }
  return est;
}

inline double gaussian_kernel(double r, double h) {
  return std::exp(-0.5 * r * r / (h * h)) / (2.0 * std::numbers::pi * h * h);
}

inline std::vector<double> eval_kde(const KDEstimate& est, std::span<const Point> at, KdeNormalization norm) {
  if (est.points.empty() || !(est.bandwidth > 0.0)) throw ValidationError("kernel density estimate is not fitted");
  const double h = est.bandwidth;
  const double inv2h2 = 0.5 / (h * h);
  const double k0 = 1.0 / (2.0 * std::numbers::pi * h * h);
  const double n = static_cast<double>(est.points.size());
  const double scale = norm == KdeNormalization::Intensity ? n : 1.0;
  std::vector<double> out(at.size());
  for (std::size_t j = 0; j < at.size(); ++j) {
    double s = 0.0;
    for (const auto& p : est.points) {
      const double dx = at[j].x - p.x, dy = at[j].y - p.y;
      s += std::exp(-(dx * dx + dy * dy) * inv2h2);
    }
    out[j] = scale * std::max(k0 * s / n, est.density_floor());
  }
  return out;
}

}  // namespace ppshare
