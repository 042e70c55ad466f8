#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"

using namespace ppshare;

namespace {

std::string write_file(const std::string& name, const std::string& body) {
  const auto path = fixtures::temp_path(name);
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST(Events, MissingCoordinatesAreDroppedAndCounted) {
  const auto path = write_file("drop.csv", "id,x,y\n1,0.1,0.2\n2,,0.3\n3,0.4,NA\n4,0.5,0.6\n");
  const auto ev = io::load_events(path);
  EXPECT_EQ(ev.rows, 4u);
  EXPECT_EQ(ev.dropped, 2u);
  ASSERT_EQ(ev.pattern.size(), 2u);
  EXPECT_EQ(ev.pattern.points[1], (Point{0.5, 0.6}));
}

TEST(Events, HeaderOnlyOrMissingColumnsIsAnError) {
  EXPECT_THROW(io::load_events(write_file("header.csv", "x,y\n")), ValidationError);
  EXPECT_THROW(io::load_events(write_file("empty.csv", "")), ValidationError);
  EXPECT_THROW(io::load_events(write_file("cols.csv", "a,b\n1,2\n")), ValidationError);
  EXPECT_THROW(io::load_events(fixtures::temp_path("does_not_exist.csv")), ValidationError);
}

TEST(Events, MissingShareFixture) {
  // 188 of 1000 rows lack a coordinate
  std::string body = "x,y,type\n";
  for (int i = 0; i < 1000; ++i) {
    const bool missing = i % 1000 < 188;
    body += (missing ? std::string() : std::to_string(0.001 * i)) + "," + std::to_string(0.5) + ",theft\n";
  }
  const auto ev = io::load_events(write_file("missing.csv", body));
  EXPECT_EQ(ev.rows, 1000u);
  EXPECT_EQ(ev.dropped, 188u);
  EXPECT_NEAR(double(ev.dropped) / double(ev.rows), 0.188, 1e-12);
}

TEST(Events, SaveLoadRoundTrip) {
  PointPattern p;
  p.points = {{0.123456789012345, 0.9}, {1e-17, 0.3333333333333333}};
  const auto path = fixtures::temp_path("rt.csv");
  io::save_pattern(p, path);
  EXPECT_EQ(io::load_events(path).pattern.points, p.points);
}

TEST(Window, JsonRoundTrip) {
  const auto w = fixtures::l_shape();
  const auto path = fixtures::temp_path("window.json");
  io::save_window(w, path);
  const auto back = io::load_window(path);
  ASSERT_EQ(back.unit_count(), w.unit_count());
  EXPECT_EQ(back.covariate_names(), w.covariate_names());
  for (std::size_t i = 0; i < w.unit_count(); ++i) {
    EXPECT_EQ(back.unit(i).id, w.unit(i).id);
    EXPECT_EQ(back.unit(i).covariates, w.unit(i).covariates);
    EXPECT_DOUBLE_EQ(back.unit(i).area, w.unit(i).area);
  }
}

TEST(Window, LatticeSpecAndErrors) {
  EXPECT_EQ(io::load_window("unit-square:4x3").unit_count(), 12u);
  EXPECT_EQ(io::load_window("unit-square:4x3:shared").unit(0).covariates,
            make_lattice_window(4, 3, CovariateProfile::Shared).unit(0).covariates);
  EXPECT_THROW(io::load_window("unit-square:4by3"), ValidationError);
  EXPECT_THROW(io::load_window(write_file("bad.json", "{\"boundary\": 3}")), ValidationError);
  EXPECT_THROW(io::load_window(write_file("notjson.json", "{{")), ValidationError);
}

TEST(Config, RoundTrip) {
  RunConfig c;
  c.model = ModelKind::CaseParametric;
  c.covariates1 = {"x1", "x2"};
  c.covariates2 = {"x3"};
  c.weighting = Weighting::LogNorm;
  c.priors.coef_sd = 5.0;
  c.grid_size = 900;
  c.knots = 25;
  c.knot_parameterization = KnotParameterization::Whitened;
  c.bandwidth = 0.07;
  c.mcmc.n_iter = 1234;
  c.mcmc.burn_in = 200;
  c.mcmc.thin = 2;
  c.seed = 99;
  const auto j = io::config_to_json(c);
  const auto back = io::config_from_json(j);
  EXPECT_EQ(io::config_to_json(back), j);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.mcmc.seed, 99u);
  EXPECT_FALSE(back.phi.has_value());
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(io::config_from_json(nlohmann::json{{"modle", "shared"}}), ValidationError);
  EXPECT_THROW(io::config_from_json(nlohmann::json{{"mcmc", {{"iters", 5}}}}), ValidationError);
  EXPECT_THROW(io::config_from_json(nlohmann::json{{"model", "probit"}}), ValidationError);
  EXPECT_THROW(io::config_from_json(nlohmann::json{{"knots", "many"}}), ValidationError);
  EXPECT_NO_THROW(io::config_from_json(nlohmann::json{{"window", "w.json"}, {"model", "logistic"}}));
}

TEST(Chain, SaveLoadRoundTrip) {
  Chain c;
  c.names = {"a", "b"};
  c.draws.resize(3, 2);
  c.draws << 0.1, -2.0, 1.0 / 3.0, 4e-300, 5.5, 6.0;
  const auto path = fixtures::temp_path("chain.csv");
  io::save_chain(c, path);
  const auto back = io::load_chain(path);
  EXPECT_EQ(back.names, c.names);
  EXPECT_EQ(back.draws, c.draws);
  EXPECT_THROW(io::load_chain(write_file("badchain.csv", "a,b\n1\n")), ValidationError);
}

TEST(Summary, NonFiniteBecomesNull) {
  FitSummary s;
  s.parameters.push_back({"a", 1.0, 0.5, 0.0, 2.0});
  const auto j = io::summary_to_json(s);
  EXPECT_TRUE(j.at("score").is_null());
  EXPECT_EQ(j.at("parameters")[0].at("name"), "a");
}
