#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ppshare/ppshare.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ppshare;

namespace {

void print_summary(const FitSummary& s, const std::vector<ParameterDiagnostics>& diag, std::size_t max_rows = 40) {
  std::printf("%-22s %12s %12s %12s %12s %9s\n", "parameter", "estimate", "spread", "lower", "upper", "ESS");
  for (std::size_t i = 0; i < s.parameters.size() && i < max_rows; ++i) {
    const auto& p = s.parameters[i];
    const double e = i < diag.size() ? diag[i].ess : stats::kNaN;
    std::printf("%-22s %12.5g %12.5g %12.5g %12.5g %9.1f\n", p.name.c_str(), p.estimate, p.spread, p.lower, p.upper, e);
  }
  if (s.parameters.size() > max_rows) std::printf("... %zu more rows in summary.json\n", s.parameters.size() - max_rows);
  if (std::isfinite(s.score)) std::printf("%s: %.4f\n", s.score_name.c_str(), s.score);
}

struct RunInputs {
  std::string window, events1, events2;
};

/// Fully resolved configuration plus input locations, as written to every run directory.
json run_echo(const RunConfig& cfg, const RunInputs& in) {
  json j = io::config_to_json(cfg);
  j["window"] = in.window;
  j["events1"] = in.events1;
  j["events2"] = in.events2;
  return j;
}

std::string absolute_or_spec(const std::string& s) {
  if (s.rfind("unit-square:", 0) == 0) return s;
  return fs::absolute(s).lexically_normal().string();
}

struct LoadedRun {
  RunConfig config;
  RunInputs inputs;
  SpatialWindow window;
  PointPattern events1, events2;
};

LoadedRun load_run(const fs::path& dir) {
  const json j = io::read_json(dir / "config.json");
  for (const char* key : {"window", "events1", "events2"})
    if (!j.contains(key) || !j.at(key).is_string())
      throw ValidationError((dir / "config.json").string() + " lacks '" + key + "'");
  RunInputs in{j.at("window").get<std::string>(), j.at("events1").get<std::string>(), j.at("events2").get<std::string>()};
  SpatialWindow window = io::load_window(in.window);
  PointPattern e1 = io::load_events(in.events1).pattern;
  PointPattern e2 = io::load_events(in.events2).pattern;
  return {io::config_from_json(j), std::move(in), std::move(window), std::move(e1), std::move(e2)};
}

void report_dropped(const std::string& path, const io::LoadedEvents& e) {
  if (e.dropped > 0) std::fprintf(stderr, "%s: dropped: %zu of %zu rows\n", path.c_str(), e.dropped, e.rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bivariate spatial point-process models: simulation, fitting and diagnostics"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a case-control or shared-component data set on the study lattice");
  std::string sim_scenario = "shared", sim_weighting = "unif", sim_out;
  int sim_row = 1;
  std::uint64_t sim_seed = 1;
  sim->add_option("--scenario", sim_scenario, "case-control | shared")->check(CLI::IsMember({"case-control", "shared"}));
  sim->add_option("--row", sim_row, "case-control truth row (1 or 2)")->check(CLI::Range(1, 2));
  sim->add_option("--weighting", sim_weighting, "shared weighting: unif | lognorm")->check(CLI::IsMember({"unif", "lognorm"}));
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--out", sim_out, "output directory")->required();

  // kde
  auto* kde = app.add_subcommand("kde", "Kernel intensity estimate at the integration-grid nodes");
  std::string kde_events, kde_window, kde_out, kde_norm = "intensity";
  std::optional<double> kde_bw;
  std::size_t kde_grid = 1600;
  kde->add_option("--events", kde_events, "event CSV with x,y header")->required();
  kde->add_option("--window", kde_window, "window JSON or unit-square:NxM[:profile]")->required();
  kde->add_option("--bandwidth", kde_bw, "Gaussian kernel sd; Scott's rule when omitted");
  kde->add_option("--grid-size", kde_grid, "integration grid size");
  kde->add_option("--normalization", kde_norm, "density | intensity")->check(CLI::IsMember({"density", "intensity"}));
  kde->add_option("--out", kde_out, "output CSV (x,y,value)")->required();

  // fit
  auto* fitc = app.add_subcommand("fit", "Fit a model and write chain, summary and diagnostics");
  std::string fit_config, fit_model, fit_e1, fit_e2, fit_window, fit_out, fit_param;
  std::optional<std::uint64_t> fit_seed;
  std::optional<std::size_t> fit_iter, fit_burn, fit_knots;
  fitc->add_option("--config", fit_config, "run configuration JSON");
  fitc->add_option("--model", fit_model, "logistic | case-nhpp | case-parametric | shared");
  fitc->add_option("--events1", fit_e1, "cases (case-control) or process-1 events");
  fitc->add_option("--events2", fit_e2, "controls (case-control) or process-2 events");
  fitc->add_option("--window", fit_window, "window JSON or unit-square:NxM[:profile]");
  fitc->add_option("--seed", fit_seed, "random seed");
  fitc->add_option("--iter", fit_iter, "MCMC iterations");
  fitc->add_option("--burn-in", fit_burn, "MCMC burn-in");
  fitc->add_option("--knots", fit_knots, "knot count (shared model)");
  fitc->add_option("--knot-parameterization", fit_param, "direct | whitened | preconditioned");
  fitc->add_option("--out", fit_out, "output directory")->required();

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "ESS and MCSE for a stored chain");
  std::string diag_run, diag_out;
  double diag_min_ess = 100.0;
  diag->add_option("--run", diag_run, "run directory containing chain.csv")->required();
  diag->add_option("--min-ess", diag_min_ess, "flag parameters below this ESS");
  diag->add_option("--out", diag_out, "optional JSON output");

  // predict-grid
  auto* pred = app.add_subcommand("predict-grid", "Posterior-mean intensities and shared component at the grid nodes");
  std::string pred_run, pred_out;
  pred->add_option("--run", pred_run, "run directory written by fit")->required();
  pred->add_option("--out", pred_out, "output CSV; default <run>/grid.csv");

  // reproduce
  auto* repro = app.add_subcommand("reproduce", "Re-run a simulated table and check it against the acceptance criteria");
  int repro_table = 1;
  scenarios::ReproduceOptions ropt;
  std::string repro_out;
  bool no_nhpp = false;
  repro->add_option("--table", repro_table, "1, 2 or 3")->required()->check(CLI::Range(1, 3));
  repro->add_option("--seed", ropt.seed, "base seed");
  repro->add_option("--replicates", ropt.replicates, "replicates per configuration");
  repro->add_option("--iter", ropt.n_iter, "MCMC iterations");
  repro->add_option("--burn-in", ropt.burn_in, "MCMC burn-in");
  repro->add_flag("--no-nhpp", no_nhpp, "table 1: skip the NHPP route");
  repro->add_option("--out", repro_out, "directory for tableN.txt and tableN.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sim) {
      fs::create_directories(sim_out);
      const fs::path out(sim_out);
      json truth;
      if (sim_scenario == "case-control") {
        const scenarios::CaseControlWorld w;
        const auto t = scenarios::table1_truth(sim_row);
        const auto data = scenarios::simulate_case_control_data(w, t, sim_seed);
        io::save_window(w.window, out / "window.json");
        io::save_pattern(data.cases, out / "events1.csv");
        io::save_pattern(data.controls, out / "events2.csv");
        truth = {{"scenario", "case-control"},
                 {"beta", {{"intercept", t.beta[0]}, {"x1", t.beta[1]}, {"x2", t.beta[2]}}},
                 {"control", {{"intercept", t.control[0]}, {"x3", t.control[1]}}},
                 {"cases", data.cases.size()},
                 {"controls", data.controls.size()}};
      } else {
        const scenarios::SharedWorld w;
        const auto spec = scenarios::table3_truth(parse_weighting(sim_weighting), w.truth_phi);
        const auto [s, redraws] = scenarios::simulate_shared_capped(w, spec, sim_seed);
        io::save_window(w.window, out / "window.json");
        io::save_pattern(s.first, out / "events1.csv");
        io::save_pattern(s.second, out / "events2.csv");
        GridPrediction g;
        g.nodes = w.grid.nodes;
        g.shared = s.log_shared;
        const auto [w1, w2] = shared_exponents(spec.weighting, spec.delta);
        const Eigen::VectorXd eta1 = w.d1.unit_predictors(spec.beta1), eta2 = w.d2.unit_predictors(spec.beta2);
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
          const auto u = static_cast<Eigen::Index>(w.grid.units[i]);
          g.lambda1.push_back(std::exp(w1 * s.log_shared[i] + eta1(u)));
          g.lambda2.push_back(std::exp(w2 * s.log_shared[i] + eta2(u)));
        }
        io::save_prediction(g, out / "truth_grid.csv");
        truth = {{"scenario", "shared"},
                 {"weighting", sim_weighting},
                 {"p1", {{"x1", spec.beta1(0)}, {"x2", spec.beta1(1)}}},
                 {"p2", {{"intercept", spec.beta2(0)}, {"x3", spec.beta2(1)}}},
                 {"delta", spec.delta},
                 {"sigma", spec.gp.sigma},
                 {"phi", spec.gp.phi},
                 {"surface_redraws", redraws},
                 {"events1", s.first.size()},
                 {"events2", s.second.size()}};
      }
      truth["seed"] = sim_seed;
      io::write_json(truth, out / "truth.json");
      std::printf("wrote %s (events1 %s, events2 %s)\n", sim_out.c_str(), truth.value("events1", truth.value("cases", json())).dump().c_str(),
                  truth.value("events2", truth.value("controls", json())).dump().c_str());
      return 0;
    }

    if (*kde) {
      const auto window = io::load_window(kde_window);
      const auto ev = io::load_events(kde_events);
      report_dropped(kde_events, ev);
      const auto grid = build_integration_grid(window, kde_grid);
      const auto est = fit_kde(ev.pattern, kde_bw, window.area());
      const auto vals = eval_kde(est, grid.nodes,
                                 kde_norm == "density" ? KdeNormalization::Density : KdeNormalization::Intensity);
      auto out = std::ofstream(kde_out);
      if (!out) throw ValidationError("cannot write '" + kde_out + "'");
      out << "x,y,value\n";
      char buf[96];
      for (std::size_t i = 0; i < vals.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", grid.nodes[i].x, grid.nodes[i].y, vals[i]);
        out << buf;
      }
      std::printf("bandwidth %.6g, %zu nodes written to %s\n", est.bandwidth, vals.size(), kde_out.c_str());
      return 0;
    }

    if (*fitc) {
      json j = fit_config.empty() ? json::object() : io::read_json(fit_config);
      RunConfig cfg = io::config_from_json(j);
      // paths inside a config file are relative to that file
      const fs::path base = fit_config.empty() ? fs::current_path() : fs::absolute(fit_config).parent_path();
      auto from_file = [&](const char* key) -> std::string {
        if (!j.contains(key)) return {};
        const std::string v = j.at(key).get<std::string>();
        if (v.rfind("unit-square:", 0) == 0) return v;
        const fs::path p(v);
        return (p.is_absolute() ? p : base / p).lexically_normal().string();
      };
      RunInputs in{fit_window.empty() ? from_file("window") : absolute_or_spec(fit_window),
                   fit_e1.empty() ? from_file("events1") : absolute_or_spec(fit_e1),
                   fit_e2.empty() ? from_file("events2") : absolute_or_spec(fit_e2)};
      if (in.window.empty() || in.events1.empty() || in.events2.empty())
        throw ValidationError("fit needs a window and two event files (flags or config keys)");
      if (!fit_model.empty()) cfg.model = parse_model_kind(fit_model);
      if (fit_seed) cfg.seed = *fit_seed;
      if (fit_iter) cfg.mcmc.n_iter = *fit_iter;
      if (fit_burn) cfg.mcmc.burn_in = *fit_burn;
      if (fit_iter && !fit_burn) cfg.mcmc.burn_in = *fit_iter / 2;
      if (fit_knots) cfg.knots = *fit_knots;
      if (!fit_param.empty()) cfg.knot_parameterization = parse_knot_parameterization(fit_param);
      cfg.mcmc.seed = cfg.seed;

      const auto window = io::load_window(in.window);
      const auto e1 = io::load_events(in.events1);
      const auto e2 = io::load_events(in.events2);
      report_dropped(in.events1, e1);
      report_dropped(in.events2, e2);
      FittedModel model(window, cfg, e1.pattern, e2.pattern);
      if (cfg.model == ModelKind::Shared && !cfg.phi) cfg.phi = model.phi();
      const fs::path out(fit_out);
      fs::create_directories(out);
      io::write_json(run_echo(cfg, in), out / "config.json");
      const auto res = model.fit();
      io::save_chain(res.chain, out / "chain.csv");
      json summary = io::summary_to_json(res.summary);
      summary["events1"] = res.events1;
      summary["events2"] = res.events2;
      summary["dropped1"] = e1.dropped;
      summary["dropped2"] = e2.dropped;
      if (std::isfinite(res.phi)) summary["phi"] = res.phi;
      io::write_json(summary, out / "summary.json");
      io::write_json(io::diagnostics_to_json(res.diagnostics, res.chain.warnings), out / "diagnostics.json");
      print_summary(res.summary, res.diagnostics);
      for (const auto& w : res.chain.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      return 0;
    }

    if (*diag) {
      const Chain chain = io::load_chain(fs::path(diag_run) / "chain.csv");
      if (chain.draws.rows() < 100) throw ValidationError("need at least 100 draws for ESS and MCSE");
      json params = json::array();
      std::printf("%-22s %10s %12s %12s\n", "parameter", "ESS", "MCSE", "mean");
      std::size_t low = 0;
      for (std::size_t j = 0; j < chain.names.size(); ++j) {
        const auto col = chain.column(j);
        const double e = ess(col), m = mcse(col);
        const bool flag = e < diag_min_ess;
        low += flag;
        std::printf("%-22s %10.1f %12.4g %12.5g%s\n", chain.names[j].c_str(), e, m, stats::mean(col), flag ? "  low ESS" : "");
        params.push_back({{"name", chain.names[j]}, {"ess", e}, {"mcse", m}, {"mean", stats::mean(col)}, {"low_ess", flag}});
      }
      std::printf("%zu draws; %zu parameters below ESS %.0f\n", static_cast<std::size_t>(chain.draws.rows()), low, diag_min_ess);
      if (!diag_out.empty()) io::write_json({{"draws", chain.draws.rows()}, {"parameters", params}}, diag_out);
      return 0;
    }

    if (*pred) {
      const fs::path dir(pred_run);
      auto run = load_run(dir);
      const Chain chain = io::load_chain(dir / "chain.csv");
      FittedModel model(run.window, run.config, run.events1, run.events2);
      const auto names = model.parameter_names();
      if (run.config.model != ModelKind::Logistic && names != chain.names)
        throw ValidationError("chain columns do not match the configured model");
      const auto g = model.predict(chain.draws);
      const fs::path out = pred_out.empty() ? dir / "grid.csv" : fs::path(pred_out);
      io::save_prediction(g, out);
      std::printf("%zu nodes written to %s\n", g.nodes.size(), out.string().c_str());
      return 0;
    }

    if (*repro) {
      ropt.nhpp_route = !no_nhpp;
      const auto rep = scenarios::reproduce_table(repro_table, ropt);
      std::printf("%s", rep.text.c_str());
      for (const auto& c : rep.criteria) std::printf("%s\n", scenarios::criterion_line(c).c_str());
      if (!repro_out.empty()) {
        const fs::path out(repro_out);
        fs::create_directories(out);
        const std::string stem = "table" + std::to_string(repro_table);
        std::ofstream(out / (stem + ".txt")) << rep.text;
        io::write_json(scenarios::report_json(rep), out / (stem + ".json"));
      }
      return 0;
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
