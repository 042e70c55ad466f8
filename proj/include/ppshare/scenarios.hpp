#pragma once

// Simulation studies on the unit-square lattices: truth settings, replicate runners and the
// pass/fail checks applied to batches of replicates.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "ppshare/errors.hpp"
#include "ppshare/fit.hpp"
#include "ppshare/geometry.hpp"
#include "ppshare/logistic.hpp"
#include "ppshare/model.hpp"
#include "ppshare/random.hpp"
#include "ppshare/simulate.hpp"
#include "ppshare/stats.hpp"

namespace ppshare::scenarios {

/// PPSHARE_THREADS if set to a positive integer, else the hardware concurrency.
inline std::size_t worker_count() {
  if (const char* env = std::getenv("PPSHARE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// f(0..n-1) on up to worker_count() threads; results in index order. The exception of the
/// lowest failing index is rethrown.
template <typename F>
auto parallel_map(std::size_t n, F f) -> std::vector<decltype(f(std::size_t{}))> {
  using R = decltype(f(std::size_t{}));
  std::vector<std::optional<R>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(f(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t k = std::min(worker_count(), std::max<std::size_t>(n, 1));
  if (k <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < k; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline constexpr std::size_t kLatticeCells = 20;
inline constexpr std::size_t kGridNodes = 1600;
inline constexpr std::size_t kKnots = 49;
inline constexpr double kSharedCountCap = 30000.0;
inline constexpr double kSharedCountFloor = 10.0;
inline constexpr int kMaxSurfaceDraws = 200;

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------------------------
// Case-control studies

struct CaseControlTruth {
  std::array<double, 3> beta;     ///< intercept, x1, x2
  std::array<double, 2> control;  ///< intercept, x3
  double intercept_sum() const { return beta[0] + control[0]; }
};

inline CaseControlTruth table1_truth(int row) {
  if (row == 1) return {{-10.0, 1.7, 0.8}, {4.2, 0.7}};
  if (row == 2) return {{-10.0, 2.1, -0.1}, {4.2, 0.7}};
  throw ValidationError("table 1 has rows 1 and 2");
}

inline CaseControlTruth table2_truth() { return table1_truth(2); }

/// Lattice, grid and designs shared by every replicate. Not copyable: designs point at the window.
struct CaseControlWorld {
  SpatialWindow window;
  IntegrationGrid grid;
  Design control_design;
  Design case_design;

  CaseControlWorld()
      : window(make_lattice_window(kLatticeCells, kLatticeCells, CovariateProfile::CaseControl)),
        grid(build_integration_grid(window, kGridNodes)),
        control_design(window, {"x3"}, true),
        case_design(window, {"x1", "x2"}, true) {}
  CaseControlWorld(const CaseControlWorld&) = delete;
  CaseControlWorld& operator=(const CaseControlWorld&) = delete;
};

struct CaseControlData {
  PointPattern cases;
  PointPattern controls;
};

inline CaseControlData simulate_case_control_data(const CaseControlWorld& w, const CaseControlTruth& t,
                                                  std::uint64_t seed) {
  const Eigen::Vector2d control(t.control[0], t.control[1]);
  const Eigen::Vector3d beta(t.beta[0], t.beta[1], t.beta[2]);
  auto [controls, cases] = simulate_case_control(w.control_design, control, w.case_design, beta, w.grid, seed);
  return {std::move(cases), std::move(controls)};
}

inline MCMCConfig default_mcmc(std::uint64_t seed) {
  MCMCConfig m;
  m.n_iter = 20000;
  m.burn_in = 10000;
  m.seed = seed;
  return m;
}

struct Table1Replicate {
  std::uint64_t seed{};
  std::size_t n_cases{}, n_controls{};
  FitSummary logistic;
  std::optional<FitSummary> nhpp;  ///< Bayesian NHPP with KDE baseline, when requested
  double seconds{};
};

inline Table1Replicate run_table1_replicate(const CaseControlWorld& w, int row, std::uint64_t seed,
                                            std::optional<MCMCConfig> nhpp = std::nullopt) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = simulate_case_control_data(w, table1_truth(row), derive_seed(seed, 1));
  Table1Replicate r;
  r.seed = seed;
  r.n_cases = data.cases.size();
  r.n_controls = data.controls.size();
  RunConfig cfg;
  cfg.model = ModelKind::Logistic;
  cfg.covariates1 = {"x1", "x2"};
  cfg.grid_size = kGridNodes;
  cfg.seed = derive_seed(seed, 2);
  r.logistic = FittedModel(w.window, cfg, data.cases, data.controls).fit().summary;
  if (nhpp) {
    cfg.model = ModelKind::CaseNhpp;
    cfg.mcmc = *nhpp;
    r.nhpp = FittedModel(w.window, cfg, data.cases, data.controls).fit().summary;
  }
  r.seconds = seconds_since(t0);
  return r;
}

struct Table2Replicate {
  std::uint64_t seed{};
  std::size_t n_cases{}, n_controls{};
  FitSummary fit;
  double seconds{};
};

/// Case-only NHPP with the closed-form baseline exp(x3 b_c); the two intercepts enter as one sum.
inline Table2Replicate run_table2_replicate(const CaseControlWorld& w, std::uint64_t seed, const MCMCConfig& mcmc) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = simulate_case_control_data(w, table2_truth(), derive_seed(seed, 1));
  RunConfig cfg;
  cfg.model = ModelKind::CaseParametric;
  cfg.covariates1 = {"x1", "x2"};
  cfg.covariates2 = {"x3"};
  cfg.grid_size = kGridNodes;
  cfg.mcmc = mcmc;
  cfg.seed = derive_seed(seed, 2);
  Table2Replicate r;
  r.seed = seed;
  r.n_cases = data.cases.size();
  r.n_controls = data.controls.size();
  r.fit = FittedModel(w.window, cfg, data.cases, data.controls).fit().summary;
  r.seconds = seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------------------------
// Shared-component study

struct SharedWorld {
  SpatialWindow window;
  IntegrationGrid grid;
  Design d1;
  Design d2;
  double truth_phi;

  SharedWorld()
      : window(make_lattice_window(kLatticeCells, kLatticeCells, CovariateProfile::Shared)),
        grid(build_integration_grid(window, kGridNodes)),
        d1(window, {"x1", "x2"}, false),
        d2(window, {"x3"}, true),
        truth_phi(fix_phi(grid.nodes)) {}
  SharedWorld(const SharedWorld&) = delete;
  SharedWorld& operator=(const SharedWorld&) = delete;
};

inline SharedSpec table3_truth(Weighting weighting, double phi) {
  SharedSpec s;
  s.beta1 = Eigen::Vector2d(0.12, 0.06);
  s.beta2 = Eigen::Vector2d(0.1, 0.25);
  s.delta = 0.3;
  s.weighting = weighting;
  s.gp = GPParams{1.7, phi};
  return s;
}

/// Surfaces whose expected count in either process falls outside [floor, cap] are redrawn.
inline std::pair<SharedSimulation, int> simulate_shared_capped(const SharedWorld& w, const SharedSpec& spec,
                                                              std::uint64_t seed, double cap = kSharedCountCap,
                                                              double floor = kSharedCountFloor) {
  for (int attempt = 0; attempt < kMaxSurfaceDraws; ++attempt) {
    auto g = draw_gp(w.grid.nodes, spec.gp, derive_seed(seed, 100 + static_cast<std::uint64_t>(attempt)));
    const auto [c1, c2] = shared_expected_counts(spec, w.d1, w.d2, g, w.grid);
    if (c1 <= cap && c2 <= cap && c1 >= floor && c2 >= floor)
      return {thin_shared_pair(w.d1, w.d2, spec, w.grid, std::move(g), seed), attempt};
  }
  throw NumericalError("no shared surface with expected counts in [" + std::to_string(floor) + ", " +
                       std::to_string(cap) + "] after " + std::to_string(kMaxSurfaceDraws) + " draws");
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double ma = stats::mean(a), mb = stats::mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

struct Table3Replicate {
  std::uint64_t seed{};
  Weighting weighting{};
  std::size_t n1{}, n2{};
  int redraws{};
  double phi{};
  FitSummary fit;
  std::vector<std::string> warnings;
  double shared_correlation{};  ///< true vs posterior-mean log shared component on the grid
  double seconds{};
};

inline Table3Replicate run_table3_replicate(const SharedWorld& w, Weighting weighting, std::uint64_t seed,
                                            const MCMCConfig& mcmc, std::size_t knots = kKnots) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = table3_truth(weighting, w.truth_phi);
  auto [sim, redraws] = simulate_shared_capped(w, spec, derive_seed(seed, 1));
  RunConfig cfg;
  cfg.model = ModelKind::Shared;
  cfg.covariates1 = {"x1", "x2"};
  cfg.covariates2 = {"x3"};
  cfg.intercept_process = 2;
  cfg.weighting = weighting;
  cfg.grid_size = kGridNodes;
  cfg.knots = knots;
  cfg.phi = w.truth_phi;
  cfg.mcmc = mcmc;
  cfg.seed = derive_seed(seed, 2);
  FittedModel model(w.window, cfg, sim.first, sim.second);
  const auto res = model.fit();
  Table3Replicate r;
  r.seed = seed;
  r.weighting = weighting;
  r.n1 = sim.first.size();
  r.n2 = sim.second.size();
  r.redraws = redraws;
  r.phi = res.phi;
  r.fit = res.summary;
  r.warnings = res.chain.warnings;
  const auto pred = model.predict(res.chain.draws);
  r.shared_correlation = pearson(sim.log_shared, pred.shared);
  r.seconds = seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------------------------
// Checks over replicate batches

struct CriterionResult {
  int id{};
  std::string title;
  bool pass{};
  std::string detail;
};

inline std::uint64_t replicate_seed(std::uint64_t base, std::size_t r) { return derive_seed(base, 1000 + r); }

inline std::vector<Table1Replicate> table1_batch(const CaseControlWorld& w, int row, std::size_t n, std::uint64_t seed,
                                                 std::optional<MCMCConfig> nhpp = std::nullopt) {
  return parallel_map(n, [&](std::size_t r) {
    std::optional<MCMCConfig> m = nhpp;
    if (m) m->seed = replicate_seed(seed, r);
    return run_table1_replicate(w, row, replicate_seed(seed, r), m);
  });
}

inline std::vector<Table2Replicate> table2_batch(const CaseControlWorld& w, std::size_t n, std::uint64_t seed,
                                                 const MCMCConfig& mcmc) {
  return parallel_map(n, [&](std::size_t r) { return run_table2_replicate(w, replicate_seed(seed, r), mcmc); });
}

inline std::vector<Table3Replicate> table3_batch(const SharedWorld& w, Weighting weighting, std::size_t n,
                                                 std::uint64_t seed, const MCMCConfig& mcmc) {
  return parallel_map(n, [&](std::size_t r) { return run_table3_replicate(w, weighting, replicate_seed(seed, r), mcmc); });
}

inline CriterionResult check_table1_recovery(const std::vector<Table1Replicate>& reps, double seconds) {
  const auto t = table1_truth(1);
  std::size_t ok = 0;
  for (const auto& r : reps) {
    const auto& s = r.logistic;
    if (s.at("beta.x1").covers(t.beta[1]) && s.at("beta.x2").covers(t.beta[2]) &&
        std::abs(s.at(kInterceptName).estimate - t.beta[0]) < 0.5)
      ++ok;
  }
  std::ostringstream os;
  os << ok << "/" << reps.size() << " replicates recover (b1, b2 covered, |b0 + 10| < 0.5); need 18/20; "
     << seconds << " s";
  return {1, "Table 1 positive-coefficient recovery", ok * 20 >= 18 * reps.size() && seconds < 120.0, os.str()};
}

inline CriterionResult check_table1_failure_mode(const std::vector<Table1Replicate>& reps) {
  const auto t = table1_truth(2);
  std::size_t ok = 0;
  std::vector<double> b0;
  for (const auto& r : reps) {
    const auto& s = r.logistic;
    b0.push_back(s.at(kInterceptName).estimate);
    if (s.at(kInterceptName).estimate - t.beta[0] >= 2.0 && std::abs(s.at("beta.x1").estimate - t.beta[1]) < 0.2) ++ok;
  }
  std::ostringstream os;
  os << ok << "/" << reps.size() << " replicates show b0 biased up by >= 2 with b1 within 0.2; need 15/20; median b0 "
     << stats::quantile(b0, 0.5);
  return {2, "Table 1 logistic intercept failure mode", ok * 20 >= 15 * reps.size(), os.str()};
}

inline CriterionResult check_table2(const std::vector<Table2Replicate>& reps) {
  const auto t = table2_truth();
  std::size_t ok = 0;
  double slowest = 0.0;
  for (const auto& r : reps) {
    const auto& s = r.fit;
    if (s.at("intercept_sum").covers(t.intercept_sum()) && s.at("beta.x1").covers(t.beta[1]) &&
        s.at("beta.x2").covers(t.beta[2]) && s.at("beta_control.x3").covers(t.control[1]))
      ++ok;
    slowest = std::max(slowest, r.seconds);
  }
  std::ostringstream os;
  os << ok << "/" << reps.size() << " replicates cover all four; need 16/20; slowest replicate " << slowest << " s";
  return {3, "Table 2 joint parametric case-control fit", ok * 20 >= 16 * reps.size() && slowest < 600.0, os.str()};
}

inline const std::array<const char*, 6> kTable3Names{"p1.x1", "p1.x2", "p2.intercept", "p2.x3", "delta", "sigma"};

inline std::array<double, 6> table3_truth_values() { return {0.12, 0.06, 0.1, 0.25, 0.3, 1.7}; }

inline CriterionResult check_table3(const std::vector<Table3Replicate>& unif, const std::vector<Table3Replicate>& lognorm) {
  const auto truth = table3_truth_values();
  std::size_t ok = 0;
  std::vector<double> widths;
  for (const auto& r : unif) {
    bool all = true;
    for (std::size_t j = 0; j < 6; ++j) all = all && r.fit.at(kTable3Names[j]).covers(truth[j]);
    widths.push_back(r.fit.at("delta").width());
    if (all) ++ok;
  }
  auto misses = [&](const std::vector<Table3Replicate>& reps) {
    std::size_t m = 0;
    for (const auto& r : reps)
      if (!r.fit.at("p2.intercept").covers(truth[2]) || !r.fit.at("sigma").covers(truth[5])) ++m;
    return m;
  };
  const std::size_t miss_u = misses(unif), miss_l = misses(lognorm);
  const double median_width = widths.empty() ? stats::kNaN : stats::quantile(widths, 0.5);
  const bool cover_ok = ok * 20 >= 14 * unif.size();
  const bool width_ok = median_width <= 0.15;
  const bool degrade_ok = miss_l > miss_u;
  std::ostringstream os;
  os << "UNIF all six covered in " << ok << "/" << unif.size() << " (need 14/20) " << (cover_ok ? "ok" : "FAIL")
     << "; median delta width " << median_width << " (need <= 0.15) " << (width_ok ? "ok" : "FAIL")
     << "; intercept-or-sigma misses UNIF " << miss_u << "/" << unif.size() << " vs LOGNORM " << miss_l << "/"
     << lognorm.size() << " " << (degrade_ok ? "ok" : "FAIL");
  return {4, "Table 3 shared-component recovery", cover_ok && width_ok && degrade_ok, os.str()};
}

inline CriterionResult check_shared_surface(const std::vector<Table3Replicate>& reps) {
  std::vector<double> c;
  for (const auto& r : reps) c.push_back(r.shared_correlation);
  const double med = stats::quantile(c, 0.5);
  std::ostringstream os;
  os << "median correlation " << med << " over " << c.size() << " replicates (need >= 0.7)";
  return {5, "Shared-surface recovery", med >= 0.7, os.str()};
}

// ---------------------------------------------------------------------------------------------
// Reports

inline std::string format_interval(const ParameterSummary& p) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%8.3f (%7.3f, %7.3f)", p.estimate, p.lower, p.upper);
  return buf;
}

/// Per-parameter mean estimate, mean interval bounds and coverage over replicates.
inline std::string coverage_table(const std::vector<const FitSummary*>& fits, const std::vector<std::string>& names,
                                  const std::vector<double>& truth) {
  std::ostringstream os;
  char line[200];
  std::snprintf(line, sizeof line, "%-18s %8s %30s %9s\n", "parameter", "truth", "mean est (mean 95% interval)",
                "coverage");
  os << line;
  for (std::size_t j = 0; j < names.size(); ++j) {
    double est = 0.0, lo = 0.0, hi = 0.0;
    std::size_t cov = 0;
    for (const auto* f : fits) {
      const auto& p = f->at(names[j]);
      est += p.estimate;
      lo += p.lower;
      hi += p.upper;
      if (p.covers(truth[j])) ++cov;
    }
    const double n = static_cast<double>(fits.size());
    const ParameterSummary avg{names[j], est / n, 0.0, lo / n, hi / n};
    std::snprintf(line, sizeof line, "%-18s %8.3f %30s %4zu/%-4zu\n", names[j].c_str(), truth[j],
                  format_interval(avg).c_str(), cov, fits.size());
    os << line;
  }
  return os.str();
}

}  // namespace ppshare::scenarios
