#pragma once

// Reproduction of the simulated tables: replicate batches, text tables, JSON and criterion checks.

#include <chrono>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppshare/io.hpp"
#include "ppshare/scenarios.hpp"

namespace ppshare::scenarios {

struct ReproduceOptions {
  std::uint64_t seed{1};
  std::size_t replicates{20};
  std::size_t surface_replicates{10};  ///< Table 3: replicates entering the surface check
  std::size_t n_iter{20000};
  std::size_t burn_in{10000};
  bool nhpp_route{true};  ///< Table 1: also fit the NHPP model with a KDE baseline
};

struct TableReport {
  int table{};
  std::string text;
  nlohmann::json data;
  std::vector<CriterionResult> criteria;

  bool all_pass() const {
    for (const auto& c : criteria)
      if (!c.pass) return false;
    return true;
  }
};

inline std::string criterion_line(const CriterionResult& c) {
  return std::string(c.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(c.id) + " (" + c.title + "): " +
         c.detail;
}

inline nlohmann::json criterion_json(const CriterionResult& c) {
  return {{"id", c.id}, {"title", c.title}, {"pass", c.pass}, {"detail", c.detail}};
}

inline MCMCConfig reproduce_mcmc(const ReproduceOptions& o) {
  MCMCConfig m = default_mcmc(o.seed);
  m.n_iter = o.n_iter;
  m.burn_in = o.burn_in;
  return m;
}

template <class Rep, class Get>
std::vector<const FitSummary*> summaries_of(const std::vector<Rep>& reps, Get get) {
  std::vector<const FitSummary*> out;
  for (const auto& r : reps) out.push_back(get(r));
  return out;
}

inline TableReport reproduce_table1(const ReproduceOptions& o) {
  TableReport rep;
  rep.table = 1;
  const CaseControlWorld w;
  const std::vector<std::string> names{std::string(kInterceptName), "beta.x1", "beta.x2"};
  std::ostringstream text;
  const auto t0 = std::chrono::steady_clock::now();
  const auto row1 = table1_batch(w, 1, o.replicates, o.seed);
  const auto row2 = table1_batch(w, 2, o.replicates, derive_seed(o.seed, 2));
  const double seconds = seconds_since(t0);
  rep.criteria.push_back(check_table1_recovery(row1, seconds));
  rep.criteria.push_back(check_table1_failure_mode(row2));

  nlohmann::json rows = nlohmann::json::array();
  for (int row = 1; row <= 2; ++row) {
    const auto& reps = row == 1 ? row1 : row2;
    const auto t = table1_truth(row);
    const std::vector<double> truth{t.beta[0], t.beta[1], t.beta[2]};
    text << "Table 1, row " << row << ": logistic regression, " << reps.size() << " replicates\n"
         << coverage_table(summaries_of(reps, [](const Table1Replicate& r) { return &r.logistic; }), names, truth)
         << "\n";
    nlohmann::json jr = {{"row", row}, {"truth", truth}, {"replicates", nlohmann::json::array()}};
    for (const auto& r : reps)
      jr["replicates"].push_back({{"seed", r.seed},
                                  {"cases", r.n_cases},
                                  {"controls", r.n_controls},
                                  {"logistic", io::summary_to_json(r.logistic)}});
    rows.push_back(std::move(jr));
  }
  if (o.nhpp_route) {
    const auto nhpp = table1_batch(w, 2, o.replicates, derive_seed(o.seed, 2), reproduce_mcmc(o));
    const auto t = table1_truth(2);
    text << "Table 1, row 2: NHPP with KDE baseline (intercept absorbs the baseline scale), " << nhpp.size()
         << " replicates\n"
         << coverage_table(summaries_of(nhpp, [](const Table1Replicate& r) { return &*r.nhpp; }), names,
                           {t.beta[0], t.beta[1], t.beta[2]})
         << "\n";
    nlohmann::json jn = nlohmann::json::array();
    for (const auto& r : nhpp) jn.push_back({{"seed", r.seed}, {"nhpp", io::summary_to_json(*r.nhpp)}});
    rep.data["nhpp_row2"] = std::move(jn);
  }
  rep.data["rows"] = std::move(rows);
  rep.text = text.str();
  return rep;
}

inline TableReport reproduce_table2(const ReproduceOptions& o) {
  TableReport rep;
  rep.table = 2;
  const CaseControlWorld w;
  const auto reps = table2_batch(w, o.replicates, o.seed, reproduce_mcmc(o));
  rep.criteria.push_back(check_table2(reps));
  const auto t = table2_truth();
  const std::vector<std::string> names{"intercept_sum", "beta.x1", "beta.x2", "beta_control.x3"};
  const std::vector<double> truth{t.intercept_sum(), t.beta[1], t.beta[2], t.control[1]};
  rep.text = "Table 2: parametric case-control model, " + std::to_string(reps.size()) + " replicates\n" +
             coverage_table(summaries_of(reps, [](const Table2Replicate& r) { return &r.fit; }), names, truth);
  nlohmann::json jr = nlohmann::json::array();
  for (const auto& r : reps)
    jr.push_back({{"seed", r.seed},
                  {"cases", r.n_cases},
                  {"controls", r.n_controls},
                  {"seconds", r.seconds},
                  {"fit", io::summary_to_json(r.fit)}});
  rep.data = {{"truth", truth}, {"names", names}, {"replicates", std::move(jr)}};
  return rep;
}

inline TableReport reproduce_table3(const ReproduceOptions& o) {
  TableReport rep;
  rep.table = 3;
  const SharedWorld w;
  const auto mcmc = reproduce_mcmc(o);
  const auto unif = table3_batch(w, Weighting::Unif, o.replicates, o.seed, mcmc);
  const auto lognorm = table3_batch(w, Weighting::LogNorm, o.replicates, derive_seed(o.seed, 3), mcmc);
  rep.criteria.push_back(check_table3(unif, lognorm));
  const std::vector<Table3Replicate> surface(unif.begin(),
                                             unif.begin() + static_cast<std::ptrdiff_t>(std::min(o.surface_replicates, unif.size())));
  rep.criteria.push_back(check_shared_surface(surface));

  const auto tv = table3_truth_values();
  const std::vector<double> truth(tv.begin(), tv.end());
  const std::vector<std::string> names(kTable3Names.begin(), kTable3Names.end());
  std::ostringstream text;
  nlohmann::json runs;
  for (const auto* reps : {&unif, &lognorm}) {
    const std::string label = to_string(reps->front().weighting);
    text << "Table 3, " << label << " weighting: shared-component model, " << reps->size() << " replicates\n"
         << coverage_table(summaries_of(*reps, [](const Table3Replicate& r) { return &r.fit; }), names, truth)
         << "\n";
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& r : *reps)
      jr.push_back({{"seed", r.seed},
                    {"events1", r.n1},
                    {"events2", r.n2},
                    {"surface_redraws", r.redraws},
                    {"phi", r.phi},
                    {"shared_correlation", r.shared_correlation},
                    {"seconds", r.seconds},
                    {"warnings", r.warnings},
                    {"fit", io::summary_to_json(r.fit)}});
    runs[label] = std::move(jr);
  }
  rep.text = text.str();
  rep.data = {{"truth", truth}, {"names", names}, {"runs", std::move(runs)}};
  return rep;
}

inline TableReport reproduce_table(int table, const ReproduceOptions& o) {
  switch (table) {
    case 1: return reproduce_table1(o);
    case 2: return reproduce_table2(o);
    case 3: return reproduce_table3(o);
    default: throw ValidationError("table must be 1, 2 or 3");
  }
}

inline nlohmann::json report_json(const TableReport& r) {
  nlohmann::json j = r.data;
  j["table"] = r.table;
  j["criteria"] = nlohmann::json::array();
  for (const auto& c : r.criteria) j["criteria"].push_back(criterion_json(c));
  return j;
}

}  // namespace ppshare::scenarios
