#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"

using namespace ppshare;

namespace {

RunConfig short_config(ModelKind model, std::uint64_t seed = 5) {
  RunConfig c;
  c.model = model;
  c.grid_size = 400;
  c.knots = 9;
  c.mcmc.n_iter = 3000;
  c.mcmc.burn_in = 1000;
  c.seed = seed;
  return c;
}

struct CaseControlData {
  SpatialWindow w = make_lattice_window(10, 10);
  IntegrationGrid g = build_integration_grid(w, 400);
  PointPattern controls, cases;

  explicit CaseControlData(std::uint64_t seed, double b1 = 0.4) {
    const Design control(w, {"x3"}, true), casesd(w, {"x1"}, false);
    std::tie(controls, cases) =
        simulate_case_control(control, Eigen::Vector2d(2.0, 0.3), casesd, Eigen::VectorXd::Constant(1, b1), g, seed);
  }
};

struct SharedData {
  SpatialWindow w = make_lattice_window(10, 10, CovariateProfile::Shared);
  PointPattern first, second;

  explicit SharedData(std::uint64_t seed) {
    const Design d1(w, {"x1"}, false), d2(w, {"x3"}, true);
    const auto g = build_integration_grid(w, 400);
    SharedSpec spec;
    spec.beta1 = Eigen::VectorXd::Constant(1, 0.1);
    spec.beta2 = Eigen::Vector2d(1.0, 0.1);
    spec.delta = 0.4;
    spec.gp = GPParams{0.8, 0.3};
    const auto sim = simulate_shared_pair(d1, d2, spec, g, seed);
    first = sim.first;
    second = sim.second;
  }
};

}  // namespace

TEST(Fit, LogisticRecoversCaseEffect) {
  const CaseControlData data(1, 0.8);
  auto c = short_config(ModelKind::Logistic);
  c.covariates1 = {"x1"};
  FittedModel m(data.w, c, data.cases, data.controls);
  const auto r = m.fit();
  EXPECT_EQ(r.summary.score_name, "AIC");
  EXPECT_TRUE(r.summary.at("beta.x1").covers(0.8)) << r.summary.at("beta.x1").estimate;
  EXPECT_EQ(r.chain.draws.rows(), 1);
}

TEST(Fit, CaseNhppRuns) {
  const CaseControlData data(2);
  auto c = short_config(ModelKind::CaseNhpp);
  c.covariates1 = {"x1"};
  FittedModel m(data.w, c, data.cases, data.controls);
  const auto r = m.fit();
  EXPECT_EQ(r.chain.draws.rows(), 2000);
  EXPECT_EQ(m.parameter_names(), (std::vector<std::string>{"intercept", "beta.x1"}));
  EXPECT_TRUE(std::isfinite(r.summary.score));
  EXPECT_NEAR(r.summary.at("beta.x1").estimate, 0.4, 0.3);
}

TEST(Fit, CaseParametricRecoversTruth) {
  const CaseControlData data(3);
  auto c = short_config(ModelKind::CaseParametric);
  c.covariates1 = {"x1"};
  c.covariates2 = {"x3"};
  FittedModel m(data.w, c, data.cases, data.controls);
  const auto r = m.fit();
  EXPECT_TRUE(r.summary.at("beta.x1").covers(0.4));
  EXPECT_TRUE(r.summary.at("beta_control.x3").covers(0.3));
  EXPECT_TRUE(r.summary.at("intercept_sum").covers(2.0));
  for (const auto& d : r.diagnostics) EXPECT_GT(d.ess, 100.0) << d.name;
}

TEST(Fit, SharedModelRunsAndPredicts) {
  const SharedData data(4);
  auto c = short_config(ModelKind::Shared);
  c.covariates1 = {"x1"};
  c.covariates2 = {"x3"};
  FittedModel m(data.w, c, data.first, data.second);
  const auto r = m.fit();
  EXPECT_EQ(r.chain.names.size(), 1u + 2u + 2u + 9u);
  EXPECT_GT(r.phi, 0.0);
  const double delta = r.summary.at("delta").estimate;
  EXPECT_GT(delta, 0.0);
  EXPECT_LT(delta, 1.0);
  EXPECT_TRUE(std::isfinite(r.summary.score));
  const auto pred = m.predict(r.chain.draws.topRows(100));
  ASSERT_EQ(pred.nodes.size(), m.grid().size());
  for (std::size_t i = 0; i < pred.nodes.size(); ++i) {
    EXPECT_GT(pred.lambda1[i], 0.0);
    EXPECT_GT(pred.lambda2[i], 0.0);
    EXPECT_TRUE(std::isfinite(pred.shared[i]));
  }
  // quadrature of the fitted process-2 intensity is close to its event count
  double n2 = 0.0;
  for (std::size_t i = 0; i < pred.nodes.size(); ++i) n2 += m.grid().weights[i] * pred.lambda2[i];
  EXPECT_NEAR(n2 / double(data.second.size()), 1.0, 0.2);
}

TEST(Fit, SameSeedIsBitIdentical) {
  const SharedData data(6);
  auto c = short_config(ModelKind::Shared, 17);
  c.covariates1 = {"x1"};
  c.covariates2 = {"x3"};
  c.mcmc.n_iter = 600;
  c.mcmc.burn_in = 200;
  FittedModel a(data.w, c, data.first, data.second), b(data.w, c, data.first, data.second);
  EXPECT_EQ(a.fit().chain.draws, b.fit().chain.draws);
  c.seed = 18;
  FittedModel d(data.w, c, data.first, data.second);
  EXPECT_NE(a.fit().chain.draws, d.fit().chain.draws);
}

TEST(Fit, AllParameterizationsAgreeOnDelta) {
  const SharedData data(7);
  std::vector<double> means;
  for (auto kp : {KnotParameterization::Whitened, KnotParameterization::Preconditioned}) {
    auto c = short_config(ModelKind::Shared);
    c.covariates1 = {"x1"};
    c.covariates2 = {"x3"};
    c.knot_parameterization = kp;
    c.mcmc.n_iter = 8000;
    c.mcmc.burn_in = 3000;
    FittedModel m(data.w, c, data.first, data.second);
    means.push_back(m.fit().summary.at("delta").estimate);
  }
  EXPECT_NEAR(means[0], means[1], 0.1);
}

TEST(Fit, WaicPrefersTrueCovariate) {
  int wins = 0;
  const int reps = 10;
  for (int s = 0; s < reps; ++s) {
    const CaseControlData data(100 + std::uint64_t(s), 0.5);
    double score[2];
    for (int k = 0; k < 2; ++k) {
      auto c = short_config(ModelKind::CaseParametric, 40 + std::uint64_t(s));
      c.covariates1 = {k == 0 ? "x1" : "noise"};
      c.covariates2 = {"x3"};
      c.mcmc.n_iter = 2000;
      c.mcmc.burn_in = 500;
      FittedModel m(data.w, c, data.cases, data.controls);
      score[k] = m.fit().summary.score;
    }
    wins += score[0] < score[1];
  }
  EXPECT_GE(wins, 8);
}

TEST(Fit, InvalidInputs) {
  const CaseControlData data(8);
  auto c = short_config(ModelKind::CaseNhpp);
  c.covariates1 = {"nope"};
  EXPECT_THROW(FittedModel(data.w, c, data.cases, data.controls), ValidationError);
  c.covariates1 = {"x1"};
  EXPECT_THROW(FittedModel(data.w, c, PointPattern{}, data.controls), ValidationError);
  PointPattern outside;
  outside.points = {{2.0, 2.0}};
  EXPECT_THROW(FittedModel(data.w, c, outside, data.controls), DomainError);
  c.grid_size = 10;
  EXPECT_THROW(FittedModel(data.w, c, data.cases, data.controls), ValidationError);
}
