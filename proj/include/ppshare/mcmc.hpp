#pragma once

// Adaptive random-walk Metropolis with univariate normal proposals.
//
// A target exposes its parameters on an unconstrained scale and evaluates the log density of
// single-coordinate changes so that models with cached state can update incrementally:
//
//   dimension(), names(), coordinate(i)        current unconstrained values
//   log_density()                              current log density, Jacobians included
//   propose(i, value) -> log density           stages coordinate i = value
//   accept() / reject()                        commits or drops the staged change
//   natural_values()                           current state on the reporting scale
//   initial_scales()                           optional starting proposal sds
//   refresh()                                  optional; rebuilds cached state from scratch
//   recalibrate() -> scales                    optional; called at 1/4 and 1/2 of burn-in, may
//                                              change the coordinate system (not the state) and
//                                              return fresh proposal sds (non-positive: keep)

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ppshare/errors.hpp"
#include "ppshare/random.hpp"

namespace ppshare {

struct MCMCConfig {
  std::size_t n_iter{20000};
  std::size_t burn_in{10000};
  std::size_t thin{1};
  std::size_t adapt_interval{200};
  double target_accept{0.44};
  std::uint64_t seed{1};
  std::string init{"mle"};  ///< "mle", "prior-draw", or a model-specific named state

  void validate() const {
    if (n_iter == 0 || thin == 0 || adapt_interval == 0) throw ValidationError("n_iter, thin and adapt_interval must be positive");
    if (burn_in >= n_iter) throw ValidationError("burn_in must be smaller than n_iter");
    if (!(target_accept > 0.0 && target_accept < 1.0)) throw ValidationError("target_accept must lie in (0, 1)");
  }

  std::size_t kept() const { return (n_iter - burn_in + thin - 1) / thin; }
};

struct Chain {
  std::vector<std::string> names;
  Eigen::MatrixXd draws;             ///< kept iterations x parameters, reporting scale
  std::vector<double> accept_rates;  ///< post burn-in acceptance per parameter
  std::vector<double> proposal_sds;  ///< frozen proposal scales
  std::vector<std::string> warnings;
  std::uint64_t seed{};
  MCMCConfig config;

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(static_cast<std::size_t>(draws.rows()));
    for (Eigen::Index i = 0; i < draws.rows(); ++i) out[static_cast<std::size_t>(i)] = draws(i, static_cast<Eigen::Index>(j));
    return out;
  }
  std::vector<double> column(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return column(j);
    throw ValidationError("chain has no parameter '" + name + "'");
  }
};

template <typename T>
concept SamplerTarget = requires(T& t, const T& ct, std::size_t i, double v) {
  { ct.dimension() } -> std::convertible_to<std::size_t>;
  { ct.names() } -> std::convertible_to<std::vector<std::string>>;
  { ct.coordinate(i) } -> std::convertible_to<double>;
  { ct.log_density() } -> std::convertible_to<double>;
  { t.propose(i, v) } -> std::convertible_to<double>;
  t.accept();
  t.reject();
  { ct.natural_values() } -> std::convertible_to<std::vector<double>>;
};

inline constexpr double kDefaultProposalSd = 0.1;

/// Fixed-scan univariate random-walk Metropolis. During burn-in every `adapt_interval`
/// iterations each proposal sd is multiplied by exp(acceptance - target_accept); afterwards
/// the scales are frozen.
template <SamplerTarget Target>
Chain run_mcmc(Target& target, const MCMCConfig& config) {
  config.validate();
  const std::size_t d = target.dimension();
  double lp = target.log_density();
  if (!std::isfinite(lp)) throw NumericalError("non-finite log posterior at the initial state");

  std::vector<double> scale(d, kDefaultProposalSd);
  if constexpr (requires { target.initial_scales(); }) {
    const std::vector<double> s = target.initial_scales();
    for (std::size_t i = 0; i < d && i < s.size(); ++i)
      if (s[i] > 0.0 && std::isfinite(s[i])) scale[i] = s[i];
  }

  Chain chain;
  chain.names = target.names();
  chain.seed = config.seed;
  chain.config = config;
  chain.draws.resize(static_cast<Eigen::Index>(config.kept()), static_cast<Eigen::Index>(d));

  Rng rng(config.seed);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::size_t> window_accepts(d, 0), kept_accepts(d, 0);
  Eigen::Index row = 0;

  for (std::size_t it = 0; it < config.n_iter; ++it) {
    for (std::size_t i = 0; i < d; ++i) {
      const double proposal = target.coordinate(i) + scale[i] * norm(rng);
      const double lp_new = target.propose(i, proposal);
      const double log_u = std::log(unif(rng));
      if (std::isfinite(lp_new) && log_u < lp_new - lp) {
        target.accept();
        lp = lp_new;
        ++window_accepts[i];
        if (it >= config.burn_in) ++kept_accepts[i];
      } else {
        target.reject();
      }
    }
    if constexpr (requires { target.refresh(); }) {
      if ((it + 1) % 50 == 0) {
        target.refresh();
        lp = target.log_density();
      }
    }
    if (it < config.burn_in && (it + 1) % config.adapt_interval == 0) {
      for (std::size_t i = 0; i < d; ++i) {
        const double rate = static_cast<double>(window_accepts[i]) / static_cast<double>(config.adapt_interval);
        scale[i] *= std::exp(rate - config.target_accept);
        window_accepts[i] = 0;
      }
    }
    if constexpr (requires { target.recalibrate(); }) {
      if (it + 1 == config.burn_in / 4 || it + 1 == config.burn_in / 2) {
        const std::vector<double> s = target.recalibrate();
        for (std::size_t i = 0; i < d && i < s.size(); ++i)
          if (s[i] > 0.0 && std::isfinite(s[i])) scale[i] = s[i];
        lp = target.log_density();
      }
    }
    if (it >= config.burn_in && (it - config.burn_in) % config.thin == 0) {
      const std::vector<double> v = target.natural_values();
      for (std::size_t j = 0; j < d; ++j) chain.draws(row, static_cast<Eigen::Index>(j)) = v[j];
      ++row;
    }
  }

  const double post = static_cast<double>(config.n_iter - config.burn_in);
  chain.accept_rates.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    chain.accept_rates[i] = static_cast<double>(kept_accepts[i]) / post;
    if (kept_accepts[i] == 0) chain.warnings.push_back("parameter '" + chain.names[i] + "' never accepted after burn-in");
  }
  chain.proposal_sds = std::move(scale);
  return chain;
}

/// Target defined by a full log-density function on the unconstrained scale; every proposal
/// re-evaluates the whole function. `to_natural` maps a state to the reporting scale.
class FunctionTarget {
 public:
  using LogDensity = std::function<double(const std::vector<double>&)>;
  using Transform = std::function<std::vector<double>(const std::vector<double>&)>;

  FunctionTarget(std::vector<std::string> names, std::vector<double> init, LogDensity log_density,
                 Transform to_natural = {})
      : names_(std::move(names)), state_(std::move(init)), f_(std::move(log_density)), natural_(std::move(to_natural)) {
    if (names_.size() != state_.size()) throw ValidationError("names and initial state differ in length");
    lp_ = f_(state_);
  }

  std::size_t dimension() const { return state_.size(); }
  std::vector<std::string> names() const { return names_; }
  double coordinate(std::size_t i) const { return state_[i]; }
  double log_density() const { return lp_; }

  double propose(std::size_t i, double value) {
    staged_ = i;
    old_ = state_[i];
    state_[i] = value;
    staged_lp_ = f_(state_);
    return staged_lp_;
  }
  void accept() { lp_ = staged_lp_; }
  void reject() { state_[staged_] = old_; }

  std::vector<double> natural_values() const { return natural_ ? natural_(state_) : state_; }

 private:
  std::vector<std::string> names_;
  std::vector<double> state_;
  LogDensity f_;
  Transform natural_;
  double lp_{};
  double staged_lp_{};
  std::size_t staged_{};
  double old_{};
};

}  // namespace ppshare
