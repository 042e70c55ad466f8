#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ppshare {

/// Point estimate with spread and a 95% interval. For Bayesian fits the estimate is the
/// posterior mean, spread the posterior sd and the interval the 2.5%/97.5% quantiles; for
/// logistic regression the MLE, its standard error and the Wald interval.
struct ParameterSummary {
  std::string name;
  double estimate{};
  double spread{};
  double lower{};
  double upper{};

  bool covers(double truth) const { return lower <= truth && truth <= upper; }
  double width() const { return upper - lower; }
};

struct FitSummary {
  std::vector<ParameterSummary> parameters;
  std::string score_name;  ///< "WAIC" or "AIC"
  double score{std::numeric_limits<double>::quiet_NaN()};

  const ParameterSummary& at(const std::string& name) const {
    for (const auto& p : parameters)
      if (p.name == name) return p;
    throw std::out_of_range("no parameter named '" + name + "'");
  }
};

}  // namespace ppshare
