#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"

using namespace ppshare;

TEST(PredictiveProcess, InterpolatesAtKnots) {
  const auto knots = build_knots(fixtures::unit_square(), 16);
  Eigen::VectorXd v(16);
  for (Eigen::Index i = 0; i < 16; ++i) v(i) = std::sin(double(i)) * 1.3;
  const auto at = pp_transform(v, knots, knots.knots, GPParams{1.0, 0.4});
  for (Eigen::Index i = 0; i < 16; ++i) EXPECT_NEAR(at(i), v(i), 1e-8);
}

TEST(PredictiveProcess, ZeroKnotsGiveZeroSurface) {
  const auto knots = build_knots(fixtures::unit_square(), 9);
  const std::vector<Point> targets{{0.1, 0.1}, {0.77, 0.3}, {0.5, 0.99}};
  const auto at = pp_transform(Eigen::VectorXd::Zero(9), knots, targets, GPParams{2.0, 0.3});
  for (Eigen::Index i = 0; i < at.size(); ++i) EXPECT_EQ(at(i), 0.0);
}

TEST(PredictiveProcess, SingleKnotDecaysExponentially) {
  const KnotSet one{{{0.5, 0.5}}};
  const double phi = 0.25;
  const std::vector<Point> targets{{0.5, 0.5}, {0.8, 0.5}, {0.1, 0.2}};
  const auto at = pp_transform(Eigen::VectorXd::Constant(1, 2.0), one, targets, GPParams{1.0, phi});
  for (std::size_t i = 0; i < targets.size(); ++i)
    EXPECT_NEAR(at(Eigen::Index(i)), 2.0 * std::exp(-distance(targets[i], {0.5, 0.5}) / phi), 1e-12);
}

TEST(PredictiveProcess, RejectsBadInput) {
  EXPECT_THROW(PredictiveProcess(KnotSet{{{0, 0}, {0, 0}}}, 0.3), ValidationError);
  EXPECT_THROW(PredictiveProcess(KnotSet{}, 0.3), ValidationError);
  EXPECT_THROW(PredictiveProcess(KnotSet{{{0, 0}}}, 0.0), ValidationError);
  const PredictiveProcess pp(build_knots(fixtures::unit_square(), 4), 0.3);
  EXPECT_THROW(pp.transform(Eigen::VectorXd::Zero(3), pp.knots().knots), ValidationError);
}

TEST(PredictiveProcess, CorrelationInverseAndLogDet) {
  const PredictiveProcess pp(build_knots(fixtures::unit_square(), 9), 0.3);
  const Eigen::MatrixXd r = correlation_matrix(pp.knots().knots, 0.3);
  EXPECT_TRUE((r * pp.correlation_inverse()).isIdentity(1e-9));
  EXPECT_NEAR(pp.log_det_correlation(), std::log(r.determinant()), 1e-9);
}

class SharedModelTest : public ::testing::Test {
 protected:
  SpatialWindow w = fixtures::unit_square({1.0, 2.0});
  Design d1{w, {"x1"}, false};
  Design d2{w, {"x2"}, true};
  PredictiveProcess pp{build_knots(w, 9), 0.3};
  IntegrationGrid grid = build_integration_grid(w, 400);

  SharedComponentState state(Weighting wt, double delta) {
    SharedComponentState s;
    s.weighting = wt;
    s.delta = delta;
    s.sigma = 1.0;
    s.phi = 0.3;
    s.knot_logvals = Eigen::VectorXd::Zero(9);
    s.beta1 = Eigen::VectorXd::Zero(1);
    s.beta2 = Eigen::VectorXd::Zero(2);
    return s;
  }
};

TEST_F(SharedModelTest, ZeroEverythingGivesUnitIntensities) {
  const std::vector<Point> pts{{0.2, 0.3}, {0.9, 0.9}};
  for (auto wt : {Weighting::Unif, Weighting::LogNorm}) {
    const auto [l1, l2] = shared_intensities(state(wt, 0.4), d1, d2, pp, pts);
    for (double v : l1) EXPECT_DOUBLE_EQ(v, 1.0);
    for (double v : l2) EXPECT_DOUBLE_EQ(v, 1.0);
  }
}

TEST_F(SharedModelTest, ExponentsOfSharedComponent) {
  auto s = state(Weighting::Unif, 0.25);
  const std::vector<double> log_shared{std::log(16.0)};
  const std::vector<std::size_t> units{0};
  auto [l1, l2] = shared_intensities(s, d1, d2, log_shared, units);
  EXPECT_NEAR(l1[0], 2.0, 1e-12);   // 16^0.25
  EXPECT_NEAR(l2[0], 8.0, 1e-12);   // 16^0.75
  s.weighting = Weighting::LogNorm;
  s.delta = 0.5;
  std::tie(l1, l2) = shared_intensities(s, d1, d2, log_shared, units);
  EXPECT_NEAR(l1[0], 4.0, 1e-12);
  EXPECT_NEAR(l2[0], 256.0, 1e-9);
  s.beta1(0) = 0.5;       // x1 = 1
  s.beta2 << 1.0, -0.25;  // intercept + x2 = 2
  std::tie(l1, l2) = shared_intensities(s, d1, d2, log_shared, units);
  EXPECT_NEAR(l1[0], 4.0 * std::exp(0.5), 1e-12);
  EXPECT_NEAR(l2[0], 256.0 * std::exp(0.5), 1e-9);
}

TEST_F(SharedModelTest, EmptyPatternsIntegrateUnitIntensity) {
  const auto ll = loglik_shared(state(Weighting::Unif, 0.5), {}, {}, d1, d2, pp, grid);
  EXPECT_NEAR(ll.value, -2.0 * w.area(), 1e-12);
}

TEST_F(SharedModelTest, SingleEventConstantIntensity) {
  auto s = state(Weighting::Unif, 0.5);
  const double c = 3.0;
  s.beta2(0) = std::log(c);
  s.beta1(0) = std::log(c);  // x1 = 1
  PointPattern one;
  one.points = {{0.4, 0.6}};
  const auto ll = loglik_shared(s, one, {}, d1, d2, pp, grid);
  EXPECT_NEAR(ll.value, std::log(c) - 2.0 * c * w.area(), 1e-12);
  EXPECT_EQ(ll.point_terms.size(), 2u);
  EXPECT_NEAR(ll.integral_terms[0], c, 1e-12);
}

TEST_F(SharedModelTest, EventOutsideWindowIsADomainError) {
  PointPattern out;
  out.points = {{1.5, 0.5}};
  EXPECT_THROW(loglik_shared(state(Weighting::Unif, 0.5), out, {}, d1, d2, pp, grid), DomainError);
}

TEST_F(SharedModelTest, InvalidStateIsRejected) {
  auto s = state(Weighting::Unif, 1.5);
  EXPECT_THROW(loglik_shared(s, {}, {}, d1, d2, pp, grid), ValidationError);
  s = state(Weighting::LogNorm, -0.1);
  EXPECT_THROW(loglik_shared(s, {}, {}, d1, d2, pp, grid), ValidationError);
  s = state(Weighting::Unif, 0.5);
  s.knot_logvals = Eigen::VectorXd::Zero(4);
  EXPECT_THROW(loglik_shared(s, {}, {}, d1, d2, pp, grid), ValidationError);
}

TEST(Reparameterization, CaseControlFormMatchesDirectIntensity) {
  const auto w = make_lattice_window(8, 8, CovariateProfile::Shared);
  const Design d1(w, {"x1", "x2"}, false), d2(w, {"x3"}, true);
  const PredictiveProcess pp(build_knots(w, 16), 0.3);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Point> pts;
  for (int i = 0; i < 50; ++i) pts.push_back({u(rng), u(rng)});
  const auto units = locate_all(w, pts);
  for (int rep = 0; rep < 50; ++rep) {
    SharedComponentState s;
    s.weighting = Weighting::Unif;
    s.delta = 0.05 + 0.9 * u(rng);
    s.sigma = 1.0;
    s.phi = 0.3;
    s.knot_logvals = Eigen::VectorXd::NullaryExpr(16, [&] { return z(rng); });
    s.beta1 = Eigen::Vector2d(0.02 * z(rng), 0.02 * z(rng));
    s.beta2 = Eigen::Vector2d(z(rng), 0.05 * z(rng));
    const auto [l1, l2] = shared_intensities(s, d1, d2, pp, pts);
    const auto alt = lambda1_from_second_process(s, d1, d2, l2, units);
    for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_NEAR(alt[i] / l1[i], 1.0, 1e-10);
  }
}

TEST(CaseControlModel, BaselineScaleIsAbsorbedByAlpha) {
  const auto w = make_lattice_window(6, 6);
  const Design cases(w, {"x1"}, false), control(w, {"x3"}, false);
  const auto g = build_integration_grid(w, 144);
  PointPattern pts;
  pts.points = {{0.1, 0.1}, {0.5, 0.7}, {0.93, 0.21}};
  CaseControlState s{0.3, Eigen::VectorXd::Constant(1, 0.2), BaselineKind::Parametric, Eigen::VectorXd::Constant(1, 0.1)};
  const auto base = parametric_baseline(control, s.beta_control);
  const double c = 7.5;
  const BaselineFn scaled = [&](const Point& p, std::size_t u) { return c * base(p, u); };
  auto shifted = s;
  shifted.alpha += std::log(c);
  EXPECT_NEAR(loglik_case_nhpp(s, pts, cases, g, scaled).value, loglik_case_nhpp(shifted, pts, cases, g, base).value,
              1e-10);
}

TEST(CaseControlModel, DesignWithInterceptIsRejected) {
  const auto w = make_lattice_window(4, 4);
  const Design with(w, {"x1"}, true);
  const auto g = build_integration_grid(w, 16);
  EXPECT_THROW(parametric_baseline(with, Eigen::Vector2d::Zero()), ValidationError);
  EXPECT_THROW(loglik_case_nhpp(CaseControlState{0.0, Eigen::Vector2d::Zero(), BaselineKind::Kde, {}}, {}, with, g,
                                [](const Point&, std::size_t) { return 1.0; }),
               ValidationError);
}

TEST(CaseControlModel, LogisticInterceptOnlyMatchesCountRatio) {
  const auto w = fixtures::unit_square({1.0, 1.0});
  const CovariateField field(w, {});
  PointPattern cases, controls;
  cases.points.assign(40, {0.5, 0.5});
  controls.points.assign(160, {0.2, 0.2});
  const auto data = logistic_design(cases, controls, field);
  EXPECT_EQ(data.design.cols(), 1);
  EXPECT_EQ(data.labels.sum(), 40.0);
  const auto fit = fit_logistic(data.design, data.labels, data.names);
  EXPECT_NEAR(fit.coef(0), std::log(40.0 / 160.0), 1e-8);
}

TEST(Priors, InverseGammaMode) {
  // mode of IG(a, b) is b / (a + 1)
  double best = 0.0, arg = 0.0;
  for (int i = 1; i < 100000; ++i) {
    const double x = i * 1e-5;
    const double v = stats::inverse_gamma_logpdf(x, 2.0, 0.5);
    if (v > best || i == 1) best = v, arg = x;
  }
  EXPECT_NEAR(arg, 1.0 / 6.0, 1e-4);
  EXPECT_EQ(stats::inverse_gamma_logpdf(-1.0, 2.0, 0.5), stats::kNegInf);
}

TEST(Priors, GpDensityAtZero) {
  EXPECT_NEAR(gp_log_density(0.0, 0.0, 4, 1.0), -2.0 * std::log(2.0 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(gp_log_density(0.0, 0.7, 3, 2.0),
              -1.5 * std::log(2.0 * std::numbers::pi) - 3.0 * std::log(2.0) - 0.35, 1e-12);
}

TEST(Priors, SharedPriorSupport) {
  const PredictiveProcess pp(build_knots(fixtures::unit_square(), 4), 0.3);
  SharedComponentState s;
  s.knot_logvals = Eigen::VectorXd::Zero(4);
  s.beta1 = Eigen::VectorXd::Zero(1);
  s.beta2 = Eigen::VectorXd::Zero(1);
  const Priors pr;
  s.delta = 1.2;
  EXPECT_EQ(log_prior(s, pp, pr), stats::kNegInf);
  s.weighting = Weighting::LogNorm;
  EXPECT_TRUE(std::isfinite(log_prior(s, pp, pr)));
  s.sigma = 0.0;
  EXPECT_EQ(log_prior(s, pp, pr), stats::kNegInf);
  // log-normal delta prior is symmetric in log delta
  s.sigma = 1.0;
  s.delta = 2.0;
  const double a = log_prior(s, pp, pr);
  s.delta = 0.5;
  EXPECT_NEAR(a, log_prior(s, pp, pr), 1e-12);
}
