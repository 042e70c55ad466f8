#pragma once

// Study window, areal units, covariate lookup, quadrature grids and knot sets.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ppshare/errors.hpp"

namespace ppshare {

struct Point {
  double x{};
  double y{};
  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Closed simple polygon; the closing edge back to the first vertex is implicit.
using Polygon = std::vector<Point>;

struct BoundingBox {
  double xmin{}, ymin{}, xmax{}, ymax{};
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  bool contains(const Point& p, double eps = 0.0) const {
    return p.x >= xmin - eps && p.x <= xmax + eps && p.y >= ymin - eps && p.y <= ymax + eps;
  }
};

namespace geom {

inline double signed_area(std::span<const Point> poly) {
  double s = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = poly[i];
    const Point& b = poly[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

inline double area(std::span<const Point> poly) { return std::abs(signed_area(poly)); }

inline Point centroid(std::span<const Point> poly) {
  const double a = signed_area(poly);
  if (a == 0.0) throw ValidationError("centroid of a degenerate polygon");
  double cx = 0.0, cy = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = poly[i];
    const Point& q = poly[(i + 1) % n];
    const double cross = p.x * q.y - q.x * p.y;
    cx += (p.x + q.x) * cross;
    cy += (p.y + q.y) * cross;
  }
  return {cx / (6.0 * a), cy / (6.0 * a)};
}

inline BoundingBox bounds(std::span<const Point> poly) {
  BoundingBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : poly) {
    b.xmin = std::min(b.xmin, p.x);
    b.ymin = std::min(b.ymin, p.y);
    b.xmax = std::max(b.xmax, p.x);
    b.ymax = std::max(b.ymax, p.y);
  }
  return b;
}

inline bool on_segment(const Point& p, const Point& a, const Point& b, double eps) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy)) <= eps;
}

inline bool on_boundary(std::span<const Point> poly, const Point& p, double eps) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i)
    if (on_segment(p, poly[i], poly[(i + 1) % n], eps)) return true;
  return false;
}

/// Crossing-number test; points on an edge (within eps) count as inside.
inline bool contains(std::span<const Point> poly, const Point& p, double eps) {
  if (on_boundary(poly, p, eps)) return true;
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xcross = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
      if (p.x < xcross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace geom

struct AreaUnit {
  std::string id;
  Polygon polygon;
  double area{};
  Point centroid;
  BoundingBox bbox;
  std::vector<double> covariates;
};

/// Observation window W partitioned into areal units carrying piecewise-constant covariates.
/// Immutable after construction.
class SpatialWindow {
 public:
  SpatialWindow(Polygon boundary, std::vector<AreaUnit> units, std::vector<std::string> covariate_names)
      : boundary_(std::move(boundary)), units_(std::move(units)), names_(std::move(covariate_names)) {
    if (boundary_.size() < 3) throw ValidationError("window boundary needs at least 3 vertices");
    total_area_ = geom::area(boundary_);
    bbox_ = geom::bounds(boundary_);
    const double scale = std::max(bbox_.width(), bbox_.height());
    if (!(total_area_ > 0.0) || !(scale > 0.0)) throw ValidationError("degenerate window boundary (zero area)");
    eps_ = 1e-12 * scale;
    if (units_.empty()) throw ValidationError("window has no areal units");

    double unit_sum = 0.0;
    for (auto& u : units_) {
      if (u.polygon.size() < 3) throw ValidationError("unit '" + u.id + "' has fewer than 3 vertices");
      u.area = geom::area(u.polygon);
      if (!(u.area > 0.0)) throw ValidationError("unit '" + u.id + "' has zero area");
      u.centroid = geom::centroid(u.polygon);
      u.bbox = geom::bounds(u.polygon);
      if (u.covariates.size() != names_.size())
        throw ValidationError("unit '" + u.id + "' has " + std::to_string(u.covariates.size()) +
                              " covariates, expected " + std::to_string(names_.size()));
      if (!geom::contains(boundary_, u.centroid, eps_))
        throw ValidationError("centroid of unit '" + u.id + "' lies outside the window boundary");
      unit_sum += u.area;
    }
    if (std::abs(unit_sum - total_area_) > 1e-9 * total_area_) {
      std::ostringstream os;
      os << "unit areas sum to " << unit_sum << " but the window area is " << total_area_;
      throw ValidationError(os.str());
    }

    id_order_.resize(units_.size());
    std::iota(id_order_.begin(), id_order_.end(), std::size_t{0});
    std::sort(id_order_.begin(), id_order_.end(),
              [&](std::size_t a, std::size_t b) { return units_[a].id < units_[b].id; });
    for (std::size_t r = 1; r < id_order_.size(); ++r)
      if (units_[id_order_[r]].id == units_[id_order_[r - 1]].id)
        throw ValidationError("duplicate unit id '" + units_[id_order_[r]].id + "'");
    id_rank_.resize(units_.size());
    for (std::size_t r = 0; r < id_order_.size(); ++r) id_rank_[id_order_[r]] = r;

    build_index();
  }

  const Polygon& boundary() const { return boundary_; }
  const std::vector<AreaUnit>& units() const { return units_; }
  const AreaUnit& unit(std::size_t i) const { return units_.at(i); }
  std::size_t unit_count() const { return units_.size(); }
  double area() const { return total_area_; }
  const BoundingBox& bbox() const { return bbox_; }
  double tolerance() const { return eps_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  std::size_t covariate_index(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw ValidationError("unknown covariate '" + name + "'");
    return static_cast<std::size_t>(it - names_.begin());
  }

  /// Inside or on the boundary.
  bool contains(const Point& p) const {
    return bbox_.contains(p, eps_) && geom::contains(boundary_, p, eps_);
  }

  /// Owning unit of p. Points on shared edges go to the unit with the smallest id.
  std::optional<std::size_t> locate(const Point& p) const {
    if (!bbox_.contains(p, eps_)) return std::nullopt;
    const auto& cands = bucket_of(p);
    std::optional<std::size_t> best;
    for (std::uint32_t i : cands) {
      const auto& u = units_[i];
      if (!u.bbox.contains(p, eps_)) continue;
      if (best && id_rank_[i] > id_rank_[*best]) continue;
      if (geom::contains(u.polygon, p, eps_)) best = i;
    }
    return best;
  }

  std::size_t locate_or_throw(const Point& p) const {
    auto u = locate(p);
    if (!u) {
      std::ostringstream os;
      os.precision(17);
      os << "point (" << p.x << ", " << p.y << ") lies outside the window";
      throw DomainError(os.str());
    }
    return *u;
  }

 private:
  void build_index() {
    const double n = static_cast<double>(units_.size());
    const double aspect = bbox_.width() / bbox_.height();
    nbx_ = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(std::sqrt(n * aspect))), 1, 512);
    nby_ = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(std::sqrt(n / aspect))), 1, 512);
    buckets_.assign(nbx_ * nby_, {});
    for (std::size_t i = 0; i < units_.size(); ++i) {
      const auto& b = units_[i].bbox;
      const auto [ix0, iy0] = bucket_coords({b.xmin - eps_, b.ymin - eps_});
      const auto [ix1, iy1] = bucket_coords({b.xmax + eps_, b.ymax + eps_});
      for (std::size_t iy = iy0; iy <= iy1; ++iy)
        for (std::size_t ix = ix0; ix <= ix1; ++ix) buckets_[iy * nbx_ + ix].push_back(static_cast<std::uint32_t>(i));
    }
  }

  std::pair<std::size_t, std::size_t> bucket_coords(const Point& p) const {
    auto clampi = [](double t, std::size_t n) {
      const double v = std::floor(t * static_cast<double>(n));
      if (!(v > 0.0)) return std::size_t{0};
      return std::min(static_cast<std::size_t>(v), n - 1);
    };
    return {clampi((p.x - bbox_.xmin) / bbox_.width(), nbx_), clampi((p.y - bbox_.ymin) / bbox_.height(), nby_)};
  }

  const std::vector<std::uint32_t>& bucket_of(const Point& p) const {
    const auto [ix, iy] = bucket_coords(p);
    return buckets_[iy * nbx_ + ix];
  }

  Polygon boundary_;
  std::vector<AreaUnit> units_;
  std::vector<std::string> names_;
  double total_area_{};
  BoundingBox bbox_;
  double eps_{};
  std::vector<std::size_t> id_order_;
  std::vector<std::size_t> id_rank_;
  std::size_t nbx_{1}, nby_{1};
  std::vector<std::vector<std::uint32_t>> buckets_;
};

/// An ordered set of event locations inside a window.
struct PointPattern {
  std::vector<Point> points;
  std::string window_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Named selection of window covariates; constant within each unit.
class CovariateField {
 public:
  CovariateField(const SpatialWindow& window, std::vector<std::string> names)
      : window_(&window), names_(std::move(names)) {
    columns_.reserve(names_.size());
    for (const auto& n : names_) columns_.push_back(window.covariate_index(n));
  }
  /// All covariates of the window.
  explicit CovariateField(const SpatialWindow& window) : CovariateField(window, window.covariate_names()) {}

  const SpatialWindow& window() const { return *window_; }
  std::size_t dimension() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  std::vector<double> at_unit(std::size_t unit) const {
    const auto& cov = window_->unit(unit).covariates;
    std::vector<double> out(columns_.size());
    for (std::size_t j = 0; j < columns_.size(); ++j) out[j] = cov[columns_[j]];
    return out;
  }

 private:
  const SpatialWindow* window_;
  std::vector<std::string> names_;
  std::vector<std::size_t> columns_;
};

/// Covariate vector of the unit owning `p`; throws DomainError outside the window.
inline std::vector<double> covariate_at(const CovariateField& field, const Point& p) {
  return field.at_unit(field.window().locate_or_throw(p));
}

inline bool contains(const SpatialWindow& window, const Point& p) { return window.contains(p); }

/// Weighted quadrature nodes for integrals over the window.
struct IntegrationGrid {
  std::vector<Point> nodes;
  std::vector<double> weights;
  std::vector<std::size_t> units;  // owning unit index per node
  std::vector<std::string> unit_ids;

  std::size_t size() const { return nodes.size(); }
  double total_weight() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }
};

namespace detail {

/// Per-unit node counts proportional to area, each at least one, summing exactly to n_total
/// (largest-remainder apportionment).
inline std::vector<std::size_t> apportion_nodes(const SpatialWindow& window, std::size_t n_total) {
  const std::size_t m = window.unit_count();
  std::vector<double> quota(m);
  std::vector<std::size_t> count(m);
  std::size_t assigned = 0;
  for (std::size_t u = 0; u < m; ++u) {
    quota[u] = static_cast<double>(n_total) * window.unit(u).area / window.area();
    count[u] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(quota[u])));
    assigned += count[u];
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (assigned < n_total) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return quota[a] - static_cast<double>(count[a]) > quota[b] - static_cast<double>(count[b]);
    });
    for (std::size_t k = 0; assigned < n_total; k = (k + 1) % m, ++assigned) ++count[order[k]];
  }
  while (assigned > n_total) {
    // remove from the most over-allocated units first
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return static_cast<double>(count[a]) - quota[a] > static_cast<double>(count[b]) - quota[b];
    });
    bool removed = false;
    for (std::size_t u : order) {
      if (assigned == n_total) break;
      if (count[u] > 1) {
        --count[u];
        --assigned;
        removed = true;
      }
    }
    if (!removed) throw ValidationError("cannot apportion integration nodes");
  }
  return count;
}

/// `count` points inside a unit on a lattice of sub-cell centres of its bounding box. For
/// rectangles whose count factors to the aspect ratio this is the midpoint rule.
inline std::vector<Point> place_nodes(const AreaUnit& unit, std::size_t count, double eps) {
  const auto& b = unit.bbox;
  const double w = b.width(), h = b.height();
  double nxf = std::max(1.0, std::round(std::sqrt(static_cast<double>(count) * w / h)));
  double nyf = std::max(1.0, std::ceil(static_cast<double>(count) / nxf));
  for (int attempt = 0; attempt < 40; ++attempt) {
    const auto nx = static_cast<std::size_t>(nxf), ny = static_cast<std::size_t>(nyf);
    std::vector<Point> cand;
    cand.reserve(nx * ny);
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const Point p{b.xmin + (static_cast<double>(i) + 0.5) * w / static_cast<double>(nx),
                      b.ymin + (static_cast<double>(j) + 0.5) * h / static_cast<double>(ny)};
        if (geom::contains(unit.polygon, p, eps)) cand.push_back(p);
      }
    if (cand.size() >= count) {
      const Point c = unit.centroid;
      std::stable_sort(cand.begin(), cand.end(),
                       [&](const Point& p, const Point& q) { return distance(p, c) < distance(q, c); });
      cand.resize(count);
      std::sort(cand.begin(), cand.end(),
                [](const Point& p, const Point& q) { return p.y != q.y ? p.y < q.y : p.x < q.x; });
      return cand;
    }
    nxf = std::ceil(nxf * 1.25);
    nyf = std::ceil(nyf * 1.25);
  }
  throw ValidationError("could not place integration nodes inside unit '" + unit.id + "'");
}

}  // namespace detail

/// Quadrature grid with node counts proportional to unit area (at least one per unit) and
/// equal weights within a unit.
inline IntegrationGrid build_integration_grid(const SpatialWindow& window, std::size_t n_total) {
  if (n_total < window.unit_count())
    throw ValidationError("integration grid size " + std::to_string(n_total) + " is smaller than the unit count " +
                          std::to_string(window.unit_count()) + " (need at least one node per unit)");
  const auto counts = detail::apportion_nodes(window, n_total);
  IntegrationGrid grid;
  grid.nodes.reserve(n_total);
  grid.weights.reserve(n_total);
  grid.units.reserve(n_total);
  grid.unit_ids.reserve(n_total);
  for (std::size_t u = 0; u < window.unit_count(); ++u) {
    const auto& unit = window.unit(u);
    const double w = unit.area / static_cast<double>(counts[u]);
    for (const auto& p : detail::place_nodes(unit, counts[u], window.tolerance())) {
      grid.nodes.push_back(p);
      grid.weights.push_back(w);
      grid.units.push_back(u);
      grid.unit_ids.push_back(unit.id);
    }
  }
  return grid;
}

/// Locations where the low-rank Gaussian process is represented explicitly.
struct KnotSet {
  std::vector<Point> knots;
  std::size_t size() const { return knots.size(); }
};

/// m x m interior lattice over the window bounding box (spacing 1/(m+1)), filtered to the
/// window; the smallest m that yields at least k points is used and the row-major tail dropped.
inline KnotSet build_knots(const SpatialWindow& window, std::size_t k) {
  if (k == 0) throw ValidationError("knot count must be at least 1");
  const auto& b = window.bbox();
  const auto m0 = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(k))));
  const std::size_t m_max = 10 * m0 + 10;
  for (std::size_t m = m0; m <= m_max; ++m) {
    KnotSet set;
    for (std::size_t j = 1; j <= m && set.size() < k; ++j)
      for (std::size_t i = 1; i <= m && set.size() < k; ++i) {
        const double t = 1.0 / static_cast<double>(m + 1);
        const Point p{b.xmin + static_cast<double>(i) * t * b.width(), b.ymin + static_cast<double>(j) * t * b.height()};
        if (window.contains(p)) set.knots.push_back(p);
      }
    if (set.size() == k) return set;
  }
  throw ValidationError("cannot fit " + std::to_string(k) + " knots inside the window");
}

// ---------------------------------------------------------------------------------------------
// Synthetic unit-square lattices used by the simulation studies.

enum class CovariateProfile { CaseControl, Shared };

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Platform-independent uniform in [-1, 1] keyed by (cell, stream).
inline double cell_noise(std::uint64_t cell, std::uint64_t stream) {
  const std::uint64_t h = splitmix64(splitmix64(cell) ^ (stream * 0x632BE59BD9B4E019ull));
  return 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
}

}  // namespace detail

/// Unit square split into nx x ny cells with covariates x1, x2, x3 (smooth patterns plus cell
/// noise) and a pure-noise column `noise`. The profile sets the covariate scale: CaseControl
/// matches intercept -10 style coefficients, Shared matches small coefficients without intercept.
inline SpatialWindow make_lattice_window(std::size_t nx, std::size_t ny,
                                         CovariateProfile profile = CovariateProfile::CaseControl) {
  if (nx == 0 || ny == 0) throw ValidationError("lattice resolution must be positive");
  constexpr double pi = std::numbers::pi;
  std::vector<AreaUnit> units;
  units.reserve(nx * ny);
  for (std::size_t r = 0; r < ny; ++r)
    for (std::size_t c = 0; c < nx; ++c) {
      const double x0 = static_cast<double>(c) / static_cast<double>(nx);
      const double x1 = static_cast<double>(c + 1) / static_cast<double>(nx);
      const double y0 = static_cast<double>(r) / static_cast<double>(ny);
      const double y1 = static_cast<double>(r + 1) / static_cast<double>(ny);
      const double u = 0.5 * (x0 + x1), v = 0.5 * (y0 + y1);
      const std::uint64_t cell = r * nx + c;
      const double f1 = 0.8 * std::sin(pi * (u - 0.5)) + 0.2 * detail::cell_noise(cell, 1);
      const double f2 = 0.8 * std::cos(pi * v) + 0.2 * detail::cell_noise(cell, 2);
      const double bump = std::exp(-((u - 0.65) * (u - 0.65) + (v - 0.35) * (v - 0.35)) / 0.08);
      const double f3 = 0.8 * (2.0 * bump - 1.0) + 0.2 * detail::cell_noise(cell, 3);
      const double noise = detail::cell_noise(cell, 4);
      std::vector<double> cov;
      if (profile == CovariateProfile::CaseControl)
        cov = {4.5 + 2.0 * f1, 3.0 + 3.0 * f2, 5.0 + 1.0 * f3, noise};
      else
        cov = {40.0 + 20.0 * f1, 40.0 + 20.0 * f2, 28.0 + 8.0 * f3, noise};
      char id[64];
      std::snprintf(id, sizeof id, "r%04zuc%04zu", r, c);
      units.push_back(AreaUnit{id, Polygon{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, 0.0, {}, {}, std::move(cov)});
    }
  return SpatialWindow(Polygon{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, std::move(units), {"x1", "x2", "x3", "noise"});
}

}  // namespace ppshare
