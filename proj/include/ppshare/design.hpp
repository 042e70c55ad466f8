#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppshare/errors.hpp"
#include "ppshare/geometry.hpp"

namespace ppshare {

inline constexpr const char* kInterceptName = "intercept";

/// Regression design of one process: selected covariates, optionally preceded by an intercept
/// column. Rows are cached per areal unit.
class Design {
 public:
  Design(const SpatialWindow& window, std::vector<std::string> covariates, bool intercept)
      : field_(window, std::move(covariates)), intercept_(intercept) {
    const auto p = static_cast<Eigen::Index>(dimension());
    rows_.resize(static_cast<Eigen::Index>(window.unit_count()), p);
    for (std::size_t u = 0; u < window.unit_count(); ++u) {
      const auto z = field_.at_unit(u);
      Eigen::Index c = 0;
      if (intercept_) rows_(static_cast<Eigen::Index>(u), c++) = 1.0;
      for (double v : z) rows_(static_cast<Eigen::Index>(u), c++) = v;
    }
  }

  const CovariateField& field() const { return field_; }
  const SpatialWindow& window() const { return field_.window(); }
  bool has_intercept() const { return intercept_; }
  std::size_t dimension() const { return field_.dimension() + (intercept_ ? 1 : 0); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    if (intercept_) out.emplace_back(kInterceptName);
    for (const auto& n : field_.names()) out.push_back(n);
    return out;
  }

  /// unit x coefficient matrix
  const Eigen::MatrixXd& unit_rows() const { return rows_; }
  Eigen::RowVectorXd row(std::size_t unit) const { return rows_.row(static_cast<Eigen::Index>(unit)); }

  double linear_predictor(std::size_t unit, const Eigen::VectorXd& coef) const {
    return rows_.row(static_cast<Eigen::Index>(unit)).dot(coef);
  }

  /// Linear predictor for every unit.
  Eigen::VectorXd unit_predictors(const Eigen::VectorXd& coef) const {
    check(coef);
    return rows_ * coef;
  }

  void check(const Eigen::VectorXd& coef) const {
    if (static_cast<std::size_t>(coef.size()) != dimension())
      throw ValidationError("coefficient vector has length " + std::to_string(coef.size()) + ", design expects " +
                            std::to_string(dimension()));
  }

 private:
  CovariateField field_;
  bool intercept_;
  Eigen::MatrixXd rows_;
};

}  // namespace ppshare
