#pragma once

// Model fitting front end: builds grid, designs and targets from a run configuration, runs
// the sampler or Newton fit, and summarizes the result.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ppshare/density.hpp"
#include "ppshare/design.hpp"
#include "ppshare/diagnostics.hpp"
#include "ppshare/errors.hpp"
#include "ppshare/geometry.hpp"
#include "ppshare/logistic.hpp"
#include "ppshare/mcmc.hpp"
#include "ppshare/model.hpp"
#include "ppshare/random.hpp"
#include "ppshare/simulate.hpp"
#include "ppshare/summary.hpp"
#include "ppshare/targets.hpp"

namespace ppshare {

enum class ModelKind { Logistic, CaseNhpp, CaseParametric, Shared };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Logistic: return "logistic";
    case ModelKind::CaseNhpp: return "case-nhpp";
    case ModelKind::CaseParametric: return "case-parametric";
    case ModelKind::Shared: return "shared";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "logistic") return ModelKind::Logistic;
  if (s == "case-nhpp") return ModelKind::CaseNhpp;
  if (s == "case-parametric") return ModelKind::CaseParametric;
  if (s == "shared") return ModelKind::Shared;
  throw ValidationError("unknown model '" + s + "'");
}

inline std::string to_string(Weighting w) { return w == Weighting::Unif ? "unif" : "lognorm"; }

inline Weighting parse_weighting(const std::string& s) {
  if (s == "unif" || s == "UNIF") return Weighting::Unif;
  if (s == "lognorm" || s == "LOGNORM") return Weighting::LogNorm;
  throw ValidationError("unknown weighting '" + s + "'");
}

/// Everything needed to re-run a fit. events1 holds the cases (case-control models) or
/// process 1 (shared model); events2 the controls or process 2.
///
/// covariates1: case covariates / process-1 covariates.
/// covariates2: parametric baseline covariates / process-2 covariates (unused otherwise).
struct RunConfig {
  ModelKind model{ModelKind::Shared};
  std::vector<std::string> covariates1;
  std::vector<std::string> covariates2;
  int intercept_process{2};  ///< shared model: which process carries the intercept
  Weighting weighting{Weighting::Unif};
  Priors priors;
  std::size_t grid_size{1600};
  std::size_t knots{49};
  KnotParameterization knot_parameterization{KnotParameterization::Preconditioned};
  std::optional<double> bandwidth;  ///< KDE baseline; Scott's rule when absent
  std::optional<double> phi;        ///< GP range; from the pooled events when absent
  MCMCConfig mcmc;
  std::uint64_t seed{1};

  void validate(const SpatialWindow& window) const {
    auto check_names = [&](const std::vector<std::string>& names) {
      for (const auto& n : names) (void)window.covariate_index(n);
    };
    check_names(covariates1);
    check_names(covariates2);
    if (knots < 1) throw ValidationError("knot count must be at least 1");
    if (grid_size < window.unit_count())
      throw ValidationError("grid size " + std::to_string(grid_size) + " is smaller than the unit count " +
                            std::to_string(window.unit_count()));
    if (intercept_process != 1 && intercept_process != 2) throw ValidationError("intercept_process must be 1 or 2");
    if (bandwidth && !(*bandwidth > 0.0)) throw ValidationError("bandwidth must be positive");
    if (phi && !(*phi > 0.0)) throw ValidationError("phi must be positive");
    if (!(priors.coef_sd > 0.0 && priors.sigma_shape > 0.0 && priors.sigma_scale > 0.0 && priors.log_delta_sd > 0.0))
      throw ValidationError("prior settings must be positive");
    if (model != ModelKind::Logistic) {
      MCMCConfig m = mcmc;
      m.seed = seed;
      m.validate();
    }
  }
};

struct ParameterDiagnostics {
  std::string name;
  double ess{};
  double mcse{};
  double accept_rate{};
  double proposal_sd{};
};

/// Intensities and shared component at the grid nodes; shared is NaN for case-control models.
struct GridPrediction {
  std::vector<Point> nodes;
  std::vector<double> lambda1, lambda2, shared;
};

struct FitResult {
  FitSummary summary;
  Chain chain;  ///< one row holding the MLE for logistic regression
  std::vector<ParameterDiagnostics> diagnostics;
  double phi{std::numeric_limits<double>::quiet_NaN()};
  std::size_t events1{}, events2{};
};

/// Deterministic stride subsample of at most `cap` points.
inline std::vector<Point> stride_subsample(std::span<const Point> pts, std::size_t cap) {
  if (pts.size() <= cap) return {pts.begin(), pts.end()};
  std::vector<Point> out;
  out.reserve(cap);
  for (std::size_t i = 0; i < cap; ++i) out.push_back(pts[i * pts.size() / cap]);
  return out;
}

inline constexpr std::size_t kPhiSubsample = 2000;

/// GP range from the pooled events of both processes.
inline double phi_from_events(const PointPattern& a, const PointPattern& b) {
  std::vector<Point> pooled(a.points);
  pooled.insert(pooled.end(), b.points.begin(), b.points.end());
  return fix_phi(stride_subsample(pooled, kPhiSubsample));
}

/// A configured model bound to its data.
class FittedModel {
 public:
  FittedModel(const SpatialWindow& window, RunConfig config, PointPattern events1, PointPattern events2)
      : window_(&window), config_(std::move(config)), e1_(std::move(events1)), e2_(std::move(events2)) {
    config_.validate(window);
    config_.mcmc.seed = config_.seed;
    if (e1_.empty()) throw ValidationError("first event pattern is empty");
    if (e2_.empty()) throw ValidationError("second event pattern is empty");
    for (const auto* pat : {&e1_, &e2_})
      for (const auto& p : pat->points) (void)window.locate_or_throw(p);
    grid_ = build_integration_grid(window, config_.grid_size);
    switch (config_.model) {
      case ModelKind::Logistic:
      case ModelKind::CaseNhpp: setup_kde_case(); break;
      case ModelKind::CaseParametric: setup_parametric_case(); break;
      case ModelKind::Shared: setup_shared(); break;
    }
  }

  const RunConfig& config() const { return config_; }
  const IntegrationGrid& grid() const { return grid_; }
  double phi() const { return phi_; }

  std::vector<std::string> parameter_names() const {
    if (shared_) return shared_->names();
    return names_;
  }

  FitResult fit() {
    FitResult out;
    out.phi = phi_;
    out.events1 = e1_.size();
    out.events2 = e2_.size();
    if (config_.model == ModelKind::Logistic) {
      const CovariateField field(*window_, config_.covariates1);
      const auto data = logistic_design(e1_, e2_, field);
      const auto lf = fit_logistic(data.design, data.labels, names_);
      out.summary = lf.summary;
      out.chain.names = names_;
      out.chain.draws = lf.coef.transpose();
      out.chain.seed = config_.seed;
      out.chain.config = config_.mcmc;
      return out;
    }
    out.chain = shared_ ? sample_shared() : sample_loglinear();
    out.summary = summarize(out.chain);
    out.diagnostics = diagnose(out.chain);
    return out;
  }

  /// Summary and WAIC from stored draws.
  FitSummary summarize(const Chain& chain) {
    FitSummary s;
    for (std::size_t j = 0; j < chain.names.size(); ++j) {
      const auto col = chain.column(j);
      s.parameters.push_back(summarize_draws(chain.names[j], col));
    }
    s.score_name = "WAIC";
    s.score = chain.draws.rows() >= 100 ? waic_of(chain.draws) : std::numeric_limits<double>::quiet_NaN();
    return s;
  }

  double waic_of(const Eigen::MatrixXd& draws) {
    WaicAccumulator acc(e1_.size() + (shared_ ? e2_.size() : 0));
    for (Eigen::Index d = 0; d < draws.rows(); ++d) {
      set_row(draws.row(d));
      const Eigen::VectorXd pw = shared_ ? shared_->pointwise() : loglinear_->pointwise();
      if (!pw.allFinite())
        throw NumericalError("non-finite pointwise log-likelihood term at draw " + std::to_string(d) +
                             "; the chain has diverged (check that both patterns have enough events)");
      acc.add(std::span<const double>(pw.data(), static_cast<std::size_t>(pw.size())));
    }
    return acc.value();
  }

  /// Posterior means over the draw rows.
  GridPrediction predict(const Eigen::MatrixXd& draws) {
    if (draws.rows() == 0) throw ValidationError("no draws to predict from");
    const auto n = static_cast<Eigen::Index>(grid_.size());
    Eigen::VectorXd l1 = Eigen::VectorXd::Zero(n), l2 = Eigen::VectorXd::Zero(n), sh = Eigen::VectorXd::Zero(n);
    for (Eigen::Index d = 0; d < draws.rows(); ++d) {
      const auto [a, b, c] = node_values(draws.row(d));
      l1 += a;
      l2 += b;
      sh += c;
    }
    const double r = 1.0 / static_cast<double>(draws.rows());
    GridPrediction out;
    out.nodes = grid_.nodes;
    out.lambda1.assign(l1.data(), l1.data() + n);
    out.lambda2.assign(l2.data(), l2.data() + n);
    out.shared.assign(sh.data(), sh.data() + n);
    for (Eigen::Index i = 0; i < n; ++i) {
      out.lambda1[static_cast<std::size_t>(i)] *= r;
      out.lambda2[static_cast<std::size_t>(i)] *= r;
      out.shared[static_cast<std::size_t>(i)] = shared_ ? out.shared[static_cast<std::size_t>(i)] * r
                                                        : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
  }

  std::vector<ParameterDiagnostics> diagnose(const Chain& chain) const {
    std::vector<ParameterDiagnostics> out;
    for (std::size_t j = 0; j < chain.names.size(); ++j) {
      const auto col = chain.column(j);
      ParameterDiagnostics d;
      d.name = chain.names[j];
      d.ess = col.size() >= 100 ? ess(col) : std::numeric_limits<double>::quiet_NaN();
      d.mcse = col.size() >= 100 ? mcse(col) : std::numeric_limits<double>::quiet_NaN();
      d.accept_rate = j < chain.accept_rates.size() ? chain.accept_rates[j] : std::numeric_limits<double>::quiet_NaN();
      d.proposal_sd = j < chain.proposal_sds.size() ? chain.proposal_sds[j] : std::numeric_limits<double>::quiet_NaN();
      out.push_back(d);
    }
    return out;
  }

 private:
  static std::vector<std::string> prefixed(const std::string& prefix, const std::vector<std::string>& names) {
    std::vector<std::string> out;
    for (const auto& n : names) out.push_back(prefix + n);
    return out;
  }

  void setup_kde_case() {
    const auto est = fit_kde(e2_, config_.bandwidth, window_->area());
    kde_nodes_ = eval_kde(est, grid_.nodes, KdeNormalization::Intensity);
    names_ = {kInterceptName};
    for (const auto& n : prefixed("beta.", config_.covariates1)) names_.push_back(n);
    if (config_.model == ModelKind::Logistic) {
      design1_.emplace(*window_, config_.covariates1, true);
      return;
    }
    design1_.emplace(*window_, config_.covariates1, true);
    const std::vector<const Design*> ds{&*design1_};
    LogLinearData data;
    data.names = names_;
    data.node_design = stack_designs(ds, grid_.units, false);
    data.node_offset = Eigen::Map<const Eigen::VectorXd>(kde_nodes_.data(), static_cast<Eigen::Index>(kde_nodes_.size()))
                           .array()
                           .log();
    data.node_weight = Eigen::Map<const Eigen::VectorXd>(grid_.weights.data(), static_cast<Eigen::Index>(grid_.size()));
    const auto units = locate_all(*window_, e1_.points);
    data.event_design = stack_designs(ds, units, false);
    const auto at_events = eval_kde(est, e1_.points, KdeNormalization::Intensity);
    data.event_offset = Eigen::Map<const Eigen::VectorXd>(at_events.data(), static_cast<Eigen::Index>(at_events.size()))
                            .array()
                            .log();
    make_loglinear(std::move(data));
  }

  void setup_parametric_case() {
    names_ = {"intercept_sum"};
    for (const auto& n : prefixed("beta.", config_.covariates1)) names_.push_back(n);
    for (const auto& n : prefixed("beta_control.", config_.covariates2)) names_.push_back(n);
    design1_.emplace(*window_, config_.covariates1, true);
    design2_.emplace(*window_, config_.covariates2, false);
    const std::vector<const Design*> ds{&*design1_, &*design2_};
    LogLinearData data;
    data.names = names_;
    data.node_design = stack_designs(ds, grid_.units, false);
    data.node_offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid_.size()));
    data.node_weight = Eigen::Map<const Eigen::VectorXd>(grid_.weights.data(), static_cast<Eigen::Index>(grid_.size()));
    const auto units = locate_all(*window_, e1_.points);
    data.event_design = stack_designs(ds, units, false);
    data.event_offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(e1_.size()));
    make_loglinear(std::move(data));
  }

  void make_loglinear(LogLinearData data) {
    Eigen::VectorXd init = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.dimension()));
    const Eigen::VectorXd mode = loglinear_mode(data, config_.priors);
    if (config_.mcmc.init == "mle") {
      init = mode;
    } else if (config_.mcmc.init == "prior-draw") {
      Rng rng(derive_seed(config_.seed, 3));
      std::normal_distribution<double> norm(0.0, config_.priors.coef_sd);
      for (Eigen::Index i = 0; i < init.size(); ++i) init(i) = norm(rng);
    } else if (config_.mcmc.init != "zero") {
      throw ValidationError("unknown initial state '" + config_.mcmc.init + "'");
    }
    loglinear_.emplace(std::move(data), config_.priors, init);
    loglinear_->precondition(mode);
  }

  void setup_shared() {
    design1_.emplace(*window_, config_.covariates1, config_.intercept_process == 1);
    design2_.emplace(*window_, config_.covariates2, config_.intercept_process == 2);
    phi_ = config_.phi ? *config_.phi : phi_from_events(e1_, e2_);
    pp_.emplace(build_knots(*window_, config_.knots), phi_);

    SharedComponentState init;
    init.weighting = config_.weighting;
    init.phi = phi_;
    init.knot_logvals = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pp_->size()));
    init.delta = config_.weighting == Weighting::Unif ? 0.5 : 1.0;
    init.sigma = 1.0;
    init.beta1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(design1_->dimension()));
    init.beta2 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(design2_->dimension()));
    if (config_.mcmc.init == "mle") {
      init.beta1 = process_mode(*design1_, e1_);
      init.beta2 = process_mode(*design2_, e2_);
    } else if (config_.mcmc.init == "prior-draw") {
      Rng rng(derive_seed(config_.seed, 3));
      std::normal_distribution<double> norm(0.0, 1.0);
      for (auto* b : {&init.beta1, &init.beta2})
        for (Eigen::Index i = 0; i < b->size(); ++i) (*b)(i) = config_.priors.coef_sd * norm(rng);
      std::gamma_distribution<double> gam(config_.priors.sigma_shape, 1.0 / config_.priors.sigma_scale);
      init.sigma = 1.0 / gam(rng);
      if (config_.weighting == Weighting::Unif) {
        init.delta = std::uniform_real_distribution<double>(1e-6, 1.0 - 1e-6)(rng);
      } else {
        init.delta = std::exp(config_.priors.log_delta_sd * norm(rng));
      }
      Eigen::VectorXd z(init.knot_logvals.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = norm(rng);
      const Eigen::VectorXd lz = pp_->factor().matrixL() * z;
      init.knot_logvals = init.sigma * lz;
    } else if (config_.mcmc.init != "zero") {
      throw ValidationError("unknown initial state '" + config_.mcmc.init + "'");
    }
    shared_.emplace(*design1_, *design2_, *pp_, grid_, e1_, e2_, config_.weighting, config_.priors, init,
                    config_.knot_parameterization);
  }

  Eigen::VectorXd process_mode(const Design& d, const PointPattern& events) const {
    const std::vector<const Design*> ds{&d};
    LogLinearData data;
    data.names = d.names();
    data.node_design = stack_designs(ds, grid_.units, false);
    data.node_offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid_.size()));
    data.node_weight = Eigen::Map<const Eigen::VectorXd>(grid_.weights.data(), static_cast<Eigen::Index>(grid_.size()));
    data.event_design = stack_designs(ds, locate_all(*window_, events.points), false);
    data.event_offset = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(events.size()));
    return loglinear_mode(data, config_.priors);
  }

  Chain sample_loglinear() { return run_mcmc(*loglinear_, config_.mcmc); }
  Chain sample_shared() { return run_mcmc(*shared_, config_.mcmc); }

  void set_row(const Eigen::RowVectorXd& row) {
    const auto want = static_cast<Eigen::Index>(parameter_names().size());
    if (row.size() != want)
      throw ValidationError("draw has " + std::to_string(row.size()) + " values, model expects " + std::to_string(want));
    if (shared_) {
      const Eigen::VectorXd v = row.transpose();
      shared_->set_natural(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
    } else {
      loglinear_->set_state(row.transpose());
    }
  }

  std::tuple<Eigen::VectorXd, Eigen::VectorXd, Eigen::VectorXd> node_values(const Eigen::RowVectorXd& row) {
    const auto n = static_cast<Eigen::Index>(grid_.size());
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
    if (shared_) {
      set_row(row);
      const auto st = shared_->state();
      const auto [w1, w2] = shared_exponents(st.weighting, st.delta);
      const Eigen::VectorXd s = shared_->node_shared();
      Eigen::VectorXd l1(n), l2(n);
      const Eigen::VectorXd eta1 = design1_->unit_predictors(st.beta1);
      const Eigen::VectorXd eta2 = design2_->unit_predictors(st.beta2);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto u = static_cast<Eigen::Index>(grid_.units[static_cast<std::size_t>(i)]);
        l1(i) = std::exp(w1 * s(i) + eta1(u));
        l2(i) = std::exp(w2 * s(i) + eta2(u));
      }
      return {l1, l2, s};
    }
    const Eigen::VectorXd theta = row.transpose();
    if (config_.model == ModelKind::CaseParametric) {
      const std::size_t p1 = design1_->dimension();
      const Eigen::VectorXd b1 = theta.head(static_cast<Eigen::Index>(p1));
      const Eigen::VectorXd bc = theta.tail(theta.size() - static_cast<Eigen::Index>(p1));
      const Eigen::VectorXd eta1 = design1_->unit_predictors(b1);
      const Eigen::VectorXd etac = design2_->unit_predictors(bc);
      Eigen::VectorXd l1(n), l2(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto u = static_cast<Eigen::Index>(grid_.units[static_cast<std::size_t>(i)]);
        l2(i) = std::exp(etac(u));
        l1(i) = std::exp(eta1(u) + etac(u));
      }
      return {l1, l2, zero};
    }
    // KDE baseline (NHPP fit or logistic odds)
    const Eigen::VectorXd eta = design1_->unit_predictors(theta);
    Eigen::VectorXd l1(n), l2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(i);
      l2(i) = kde_nodes_[j];
      l1(i) = kde_nodes_[j] * std::exp(eta(static_cast<Eigen::Index>(grid_.units[j])));
    }
    return {l1, l2, zero};
  }

  const SpatialWindow* window_;
  RunConfig config_;
  PointPattern e1_, e2_;
  IntegrationGrid grid_;
  std::vector<std::string> names_;
  std::optional<Design> design1_, design2_;
  std::vector<double> kde_nodes_;
  double phi_{std::numeric_limits<double>::quiet_NaN()};
  std::optional<PredictiveProcess> pp_;
  std::optional<LogLinearNhppTarget> loglinear_;
  std::optional<SharedComponentTarget> shared_;
};

}  // namespace ppshare
