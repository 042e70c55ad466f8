#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "ppshare/ppshare.hpp"

namespace fixtures {

using ppshare::AreaUnit;
using ppshare::Point;
using ppshare::Polygon;
using ppshare::SpatialWindow;

inline AreaUnit rect_unit(const std::string& id, double x0, double y0, double x1, double y1, std::vector<double> cov) {
  return AreaUnit{id, Polygon{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}, 0.0, {}, {}, std::move(cov)};
}

inline SpatialWindow unit_square(std::vector<double> cov = {1.7, 0.8}) {
  return SpatialWindow(Polygon{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {rect_unit("a", 0, 0, 1, 1, std::move(cov))}, {"x1", "x2"});
}

/// Unit square cut into n vertical strips; strip i has covariate i.
inline SpatialWindow strips(std::size_t n) {
  std::vector<AreaUnit> units;
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "s%02zu", i);
    units.push_back(rect_unit(id, double(i) / double(n), 0, double(i + 1) / double(n), 1, {double(i)}));
  }
  return SpatialWindow(Polygon{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, std::move(units), {"z"});
}

/// Two units of areas 0.9 and 0.1.
inline SpatialWindow two_units() {
  return SpatialWindow(Polygon{{0, 0}, {1, 0}, {1, 1}, {0, 1}},
                       {rect_unit("a", 0, 0, 0.9, 1, {0.0}), rect_unit("b", 0.9, 0, 1, 1, {1.0})}, {"z"});
}

/// L shape: [0,1]x[0,1] minus (0.5,1]x(0.5,1], as three unit rectangles.
inline SpatialWindow l_shape() {
  return SpatialWindow(Polygon{{0, 0}, {1, 0}, {1, 0.5}, {0.5, 0.5}, {0.5, 1}, {0, 1}},
                       {rect_unit("a", 0, 0, 0.5, 0.5, {1.0}), rect_unit("b", 0.5, 0, 1, 0.5, {2.0}),
                        rect_unit("c", 0, 0.5, 0.5, 1, {3.0})},
                       {"z"});
}

inline constexpr std::size_t kStairColumns = 40;
inline constexpr std::size_t kStairRows = 20;

/// Non-convex staircase window of 40 columns x 20 rows = 800 units. The bottom unit of every
/// column is a sliver (1/2000 of the column height), far below the average node spacing of a
/// 7304-node grid. Covariates: x1, x2 smooth in the centroid, x3 a noise column.
inline SpatialWindow staircase() {
  auto height = [](std::size_t c) { return 0.4 + 0.6 * double(c / 5) / 7.0; };
  const double dx = 1.0 / double(kStairColumns);
  Polygon boundary{{0, 0}, {1, 0}};
  for (std::size_t c = kStairColumns; c-- > 0;) {
    boundary.push_back({dx * double(c + 1), height(c)});
    boundary.push_back({dx * double(c), height(c)});
  }
  std::vector<AreaUnit> units;
  for (std::size_t c = 0; c < kStairColumns; ++c) {
    const double h = height(c);
    const double sliver = h / 2000.0;
    const double rest = (h - sliver) / double(kStairRows - 1);
    double y = 0.0;
    for (std::size_t r = 0; r < kStairRows; ++r) {
      const double top = r == 0 ? sliver : (r + 1 == kStairRows ? h : y + rest);
      const double cx = dx * (double(c) + 0.5), cy = 0.5 * (y + top);
      char id[24];
      std::snprintf(id, sizeof id, "c%02zur%02zu", c, r);
      units.push_back(rect_unit(id, dx * double(c), y, dx * double(c + 1), top,
                                {std::sin(3.0 * cx) + cy, std::cos(2.0 * cy) * cx,
                                 ppshare::detail::cell_noise(c * kStairRows + r, 9)}));
      y = top;
    }
  }
  return SpatialWindow(std::move(boundary), std::move(units), {"x1", "x2", "x3"});
}

inline std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ppshare_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace fixtures
