#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"

using namespace ppshare;

namespace {

struct SharedData {
  SpatialWindow w = make_lattice_window(6, 6, CovariateProfile::Shared);
  Design d1{w, {"x1", "x2"}, false};
  Design d2{w, {"x3"}, true};
  IntegrationGrid grid = build_integration_grid(w, 144);
  PredictiveProcess pp{build_knots(w, 9), 0.3};
  PointPattern first, second;

  explicit SharedData(Weighting wt) {
    SharedSpec spec;
    spec.beta1 = Eigen::Vector2d(0.04, 0.03);
    spec.beta2 = Eigen::Vector2d(1.0, 0.1);
    spec.delta = wt == Weighting::Unif ? 0.3 : 0.8;
    spec.weighting = wt;
    spec.gp = GPParams{0.8, 0.3};
    const auto sim = simulate_shared_pair(d1, d2, spec, grid, 21);
    first = sim.first;
    second = sim.second;
  }

  SharedComponentState init(Weighting wt) const {
    SharedComponentState s;
    s.weighting = wt;
    s.delta = wt == Weighting::Unif ? 0.4 : 0.9;
    s.sigma = 0.7;
    s.phi = 0.3;
    s.beta1 = Eigen::Vector2d(0.03, 0.02);
    s.beta2 = Eigen::Vector2d(0.8, 0.1);
    s.knot_logvals = Eigen::VectorXd::LinSpaced(9, -0.5, 0.5);
    return s;
  }

  SharedComponentTarget target(Weighting wt, KnotParameterization kp) const {
    return SharedComponentTarget(d1, d2, pp, grid, first, second, wt, Priors{}, init(wt), kp);
  }
};

const std::vector<KnotParameterization> kAll{KnotParameterization::Direct, KnotParameterization::Whitened,
                                             KnotParameterization::Preconditioned};

std::string label(Weighting wt, KnotParameterization kp) { return to_string(wt) + "/" + to_string(kp); }

}  // namespace

TEST(SharedTarget, IncrementalDensityMatchesRefresh) {
  for (auto wt : {Weighting::Unif, Weighting::LogNorm}) {
    const SharedData data(wt);
    for (auto kp : kAll) {
      auto t = data.target(wt, kp);
      std::mt19937_64 rng(4);
      std::normal_distribution<double> z(0.0, 1.0);
      for (int step = 0; step < 300; ++step) {
        const std::size_t i = std::size_t(step) % t.dimension();
        t.propose(i, t.coordinate(i) + 0.05 * z(rng));
        if (step % 3 == 0) t.reject(); else t.accept();
      }
      const double incremental = t.log_density();
      t.refresh();
      EXPECT_NEAR(incremental, t.log_density(), 1e-8 * (1.0 + std::abs(incremental))) << label(wt, kp);
    }
  }
}

TEST(SharedTarget, LikelihoodMatchesModelFunction) {
  for (auto wt : {Weighting::Unif, Weighting::LogNorm}) {
    const SharedData data(wt);
    for (auto kp : kAll) {
      const auto t = data.target(wt, kp);
      const double ref = loglik_shared(t.state(), data.first, data.second, data.d1, data.d2, data.pp, data.grid).value;
      EXPECT_NEAR(t.loglik(), ref, 1e-8 * (1.0 + std::abs(ref))) << label(wt, kp);
      const Eigen::VectorXd pw = t.pointwise();
      EXPECT_EQ(std::size_t(pw.size()), data.first.size() + data.second.size());
      EXPECT_NEAR(pw.sum(), ref, 1e-8 * (1.0 + std::abs(ref))) << label(wt, kp);
    }
  }
}

TEST(SharedTarget, DirectDensityIsLikelihoodPlusPriorPlusJacobian) {
  for (auto wt : {Weighting::Unif, Weighting::LogNorm}) {
    const SharedData data(wt);
    const auto t = data.target(wt, KnotParameterization::Direct);
    const auto s = t.state();
    double expect = t.loglik() + log_prior(s, data.pp, Priors{}) + std::log(s.sigma);
    if (wt == Weighting::Unif) expect += std::log(s.delta) + std::log1p(-s.delta);
    EXPECT_NEAR(t.log_density(), expect, 1e-8 * std::abs(expect)) << to_string(wt);
  }
}

TEST(SharedTarget, ParameterizationsDifferByTheirJacobians) {
  // whitened and preconditioned densities equal the direct density plus k log(sigma) plus a
  // state-independent constant, so differences between two states must agree
  for (auto wt : {Weighting::Unif, Weighting::LogNorm}) {
    const SharedData data(wt);
    auto direct = data.target(wt, KnotParameterization::Direct);
    const auto a = direct.natural_values();
    auto b = a;
    b[0] += 0.01;
    b[3] -= 0.2;
    b[4] *= 1.3;                         // sigma
    b[5] = wt == Weighting::Unif ? 0.55 : 1.4;  // delta
    for (std::size_t i = 6; i < b.size(); ++i) b[i] += 0.1 * std::sin(double(i));
    const double k = double(data.pp.size());
    auto diff = [&](SharedComponentTarget& t) {
      t.set_natural(a);
      const double la = t.log_density();
      t.set_natural(b);
      return t.log_density() - la;
    };
    const double dd = diff(direct) + k * (std::log(b[4]) - std::log(a[4]));
    for (auto kp : {KnotParameterization::Whitened, KnotParameterization::Preconditioned}) {
      auto t = data.target(wt, kp);
      EXPECT_NEAR(diff(t), dd, 1e-7 * (1.0 + std::abs(dd))) << label(wt, kp);
    }
  }
}

TEST(SharedTarget, SetNaturalRoundTrip) {
  for (auto wt : {Weighting::Unif, Weighting::LogNorm}) {
    const SharedData data(wt);
    for (auto kp : kAll) {
      auto t = data.target(wt, kp);
      auto v = t.natural_values();
      v[1] += 0.005;
      v[4] = 0.9;
      t.set_natural(v);
      const auto back = t.natural_values();
      ASSERT_EQ(back.size(), v.size());
      for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(back[i], v[i], 1e-9 * (1.0 + std::abs(v[i]))) << label(wt, kp);
      // coordinates reproduce the state after a refresh
      t.refresh();
      const auto again = t.natural_values();
      for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(again[i], v[i], 1e-9 * (1.0 + std::abs(v[i])));
    }
  }
}

TEST(SharedTarget, NamesAndValidation) {
  const SharedData data(Weighting::Unif);
  const auto t = data.target(Weighting::Unif, KnotParameterization::Direct);
  const auto n = t.names();
  ASSERT_EQ(n.size(), 2u + 2u + 2u + 9u);
  EXPECT_EQ(n[0], "p1.x1");
  EXPECT_EQ(n[2], "p2.intercept");
  EXPECT_EQ(n[4], "sigma");
  EXPECT_EQ(n[5], "delta");
  EXPECT_EQ(n[6], "knot.0");
  EXPECT_THROW(SharedComponentTarget(data.d1, data.d2, data.pp, data.grid, PointPattern{}, data.second, Weighting::Unif,
                                     Priors{}, data.init(Weighting::Unif)),
               ValidationError);
  EXPECT_THROW(parse_knot_parameterization("rotated"), ValidationError);
}

TEST(LogLinearTarget, IncrementalDensityMatchesRefresh) {
  const auto w = make_lattice_window(8, 8);
  const Design d(w, {"x1", "x2"}, true);
  const auto g = build_integration_grid(w, 256);
  const auto ev = simulate_loglinear(d, Eigen::Vector3d(-6.0, 1.0, 0.5), g, 3);
  LogLinearData data;
  const std::vector<const Design*> ds{&d};
  const auto units = locate_all(w, ev.points);
  data.node_design = stack_designs(ds, g.units, false);
  data.event_design = stack_designs(ds, units, false);
  data.node_weight = Eigen::Map<const Eigen::VectorXd>(g.weights.data(), Eigen::Index(g.size()));
  data.node_offset = Eigen::VectorXd::Zero(Eigen::Index(g.size()));
  data.event_offset = Eigen::VectorXd::Zero(Eigen::Index(ev.size()));
  data.names = d.names();
  LogLinearNhppTarget t(data, Priors{}, loglinear_mode(data, Priors{}));
  ASSERT_TRUE(t.precondition(t.theta()));
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.0, 0.02);
  for (int s = 0; s < 60; ++s) {
    t.propose(std::size_t(s % 3), t.coordinate(std::size_t(s % 3)) + z(rng));
    t.accept();
  }
  const double inc = t.log_density();
  t.refresh();
  EXPECT_NEAR(inc, t.log_density(), 1e-9 * (1.0 + std::abs(inc)));
  EXPECT_NEAR(t.pointwise().sum(), t.loglik(), 1e-9 * (1.0 + std::abs(inc)));
}

TEST(LogLinearTarget, PreconditioningKeepsDensityAndDecorrelates) {
  const auto w = make_lattice_window(8, 8);
  const Design d(w, {"x1", "x2"}, true);
  const auto g = build_integration_grid(w, 256);
  const auto ev = simulate_loglinear(d, Eigen::Vector3d(-6.0, 1.0, 0.5), g, 4);
  LogLinearData data;
  const std::vector<const Design*> ds{&d};
  data.node_design = stack_designs(ds, g.units, false);
  data.event_design = stack_designs(ds, locate_all(w, ev.points), false);
  data.node_weight = Eigen::Map<const Eigen::VectorXd>(g.weights.data(), Eigen::Index(g.size()));
  data.node_offset = Eigen::VectorXd::Zero(Eigen::Index(g.size()));
  data.event_offset = Eigen::VectorXd::Zero(Eigen::Index(ev.size()));
  data.names = d.names();
  const Eigen::VectorXd mode = loglinear_mode(data, Priors{});
  const Eigen::Vector3d theta = mode + Eigen::Vector3d(0.05, -0.01, 0.02);
  LogLinearNhppTarget plain(data, Priors{}, theta), pre(data, Priors{}, theta);
  ASSERT_TRUE(pre.precondition(mode));
  EXPECT_NEAR(plain.log_density(), pre.log_density(), 1e-9);
  EXPECT_LT((pre.theta() - theta).norm(), 1e-10);

  // a step h in any sampler coordinate costs about h^2 / 2 at the mode
  pre.set_state(mode);
  const double at_mode = pre.log_density();
  for (std::size_t i = 0; i < 3; ++i) {
    const double lp = pre.propose(i, pre.coordinate(i) + 0.1);
    pre.reject();
    EXPECT_NEAR((at_mode - lp) / 0.005, 1.0, 0.05) << i;
  }
  const auto scales = pre.initial_scales();
  for (double s : scales) EXPECT_NEAR(s, 2.4, 0.3);
}
