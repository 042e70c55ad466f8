#pragma once

// File formats: x,y event CSVs, window and run-config JSON, chain CSV and summary JSON.

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ppshare/errors.hpp"
#include "ppshare/fit.hpp"
#include "ppshare/geometry.hpp"

namespace ppshare::io {

using nlohmann::json;

struct LoadedEvents {
  PointPattern pattern;
  std::size_t rows{};     ///< non-empty data rows read
  std::size_t dropped{};  ///< rows with missing or non-numeric coordinates
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

/// Whole-field finite double, or nothing.
inline std::optional<double> parse_double(const std::string& field) {
  const std::string s = trim(field);
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  return out;
}

inline Polygon polygon_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + " must be an array of [x, y] pairs");
  Polygon poly;
  for (const auto& v : j) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw ValidationError(what + " must be an array of [x, y] pairs");
    poly.push_back({v[0].get<double>(), v[1].get<double>()});
  }
  return poly;
}

inline json polygon_to_json(const Polygon& poly) {
  json a = json::array();
  for (const auto& p : poly) a.push_back({p.x, p.y});
  return a;
}

inline json maybe_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

/// Reads an event CSV whose header names columns `x` and `y` (others ignored).
inline LoadedEvents load_events(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("'" + path.string() + "' is empty (missing x,y header)");
  const auto header = detail::split_csv(line);
  std::ptrdiff_t ix = -1, iy = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto h = detail::trim(header[i]);
    if (h == "x" && ix < 0) ix = static_cast<std::ptrdiff_t>(i);
    if (h == "y" && iy < 0) iy = static_cast<std::ptrdiff_t>(i);
  }
  if (ix < 0 || iy < 0) throw ValidationError("'" + path.string() + "': header must contain columns x and y");
  LoadedEvents out;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty() || detail::trim(line) == "\r") continue;
    ++out.rows;
    const auto f = detail::split_csv(line);
    const auto need = static_cast<std::size_t>(std::max(ix, iy));
    std::optional<double> x, y;
    if (f.size() > need) {
      x = detail::parse_double(f[static_cast<std::size_t>(ix)]);
      y = detail::parse_double(f[static_cast<std::size_t>(iy)]);
    }
    if (x && y) {
      out.pattern.points.push_back({*x, *y});
    } else {
      ++out.dropped;
    }
  }
  if (out.pattern.empty()) throw ValidationError("'" + path.string() + "' has no rows with valid coordinates");
  return out;
}

inline void save_pattern(const PointPattern& pattern, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "x,y\n";
  for (const auto& p : pattern.points) out << detail::format_double(p.x) << ',' << detail::format_double(p.y) << '\n';
}

// ---------------------------------------------------------------------------------------------
// Windows

inline json window_to_json(const SpatialWindow& w) {
  json j;
  j["boundary"] = detail::polygon_to_json(w.boundary());
  j["covariate_names"] = w.covariate_names();
  json units = json::array();
  for (const auto& u : w.units())
    units.push_back({{"id", u.id}, {"polygon", detail::polygon_to_json(u.polygon)}, {"covariates", u.covariates}});
  j["units"] = std::move(units);
  return j;
}

inline SpatialWindow window_from_json(const json& j) {
  try {
    const Polygon boundary = detail::polygon_from_json(j.at("boundary"), "boundary");
    const auto names = j.at("covariate_names").get<std::vector<std::string>>();
    std::vector<AreaUnit> units;
    for (const auto& u : j.at("units")) {
      AreaUnit a;
      a.id = u.at("id").get<std::string>();
      a.polygon = detail::polygon_from_json(u.at("polygon"), "unit polygon");
      a.covariates = u.at("covariates").get<std::vector<double>>();
      units.push_back(std::move(a));
    }
    return SpatialWindow(boundary, std::move(units), names);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed window JSON: ") + e.what());
  }
}

/// A JSON file, or `unit-square:NxM` / `unit-square:NxM:shared` for the synthetic lattices.
inline SpatialWindow load_window(const std::string& spec) {
  const std::string prefix = "unit-square:";
  if (spec.rfind(prefix, 0) == 0) {
    std::string rest = spec.substr(prefix.size());
    auto profile = CovariateProfile::CaseControl;
    if (const auto c = rest.find(':'); c != std::string::npos) {
      const auto p = rest.substr(c + 1);
      if (p == "shared") profile = CovariateProfile::Shared;
      else if (p != "case-control") throw ValidationError("unknown lattice profile '" + p + "'");
      rest = rest.substr(0, c);
    }
    std::size_t nx = 0, ny = 0;
    char x = 0;
    std::istringstream is(rest);
    if (!(is >> nx >> x >> ny) || x != 'x' || !is.eof()) throw ValidationError("expected unit-square:NxM, got '" + spec + "'");
    return make_lattice_window(nx, ny, profile);
  }
  auto in = detail::open_in(spec);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("'" + spec + "' is not valid JSON: " + e.what());
  }
  return window_from_json(j);
}

inline void save_window(const SpatialWindow& w, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << window_to_json(w).dump(1) << '\n';
}

// ---------------------------------------------------------------------------------------------
// Run configuration

inline json config_to_json(const RunConfig& c) {
  json j;
  j["model"] = to_string(c.model);
  j["covariates1"] = c.covariates1;
  j["covariates2"] = c.covariates2;
  j["intercept_process"] = c.intercept_process;
  j["weighting"] = to_string(c.weighting);
  j["priors"] = {{"coef_sd", c.priors.coef_sd},
                 {"sigma_shape", c.priors.sigma_shape},
                 {"sigma_scale", c.priors.sigma_scale},
                 {"log_delta_sd", c.priors.log_delta_sd}};
  j["grid_size"] = c.grid_size;
  j["knots"] = c.knots;
  j["knot_parameterization"] = to_string(c.knot_parameterization);
  j["bandwidth"] = c.bandwidth ? json(*c.bandwidth) : json(nullptr);
  j["phi"] = c.phi ? json(*c.phi) : json(nullptr);
  j["mcmc"] = {{"n_iter", c.mcmc.n_iter},
               {"burn_in", c.mcmc.burn_in},
               {"thin", c.mcmc.thin},
               {"adapt_interval", c.mcmc.adapt_interval},
               {"target_accept", c.mcmc.target_accept},
               {"init", c.mcmc.init}};
  j["seed"] = c.seed;
  return j;
}

namespace detail {

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* n : known) ok = ok || k == n;
    if (!ok) throw ValidationError("unknown key '" + k + "' in " + where);
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& dst) {
  if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

}  // namespace detail

/// Missing keys keep their defaults; keys listed in `extra` are tolerated and ignored.
inline RunConfig config_from_json(const json& j, std::initializer_list<const char*> extra = {"window", "events1", "events2"}) {
  if (!j.is_object()) throw ValidationError("run config must be a JSON object");
  try {
    for (const auto& [k, v] : j.items()) {
      static const char* known[] = {"model", "covariates1", "covariates2", "intercept_process", "weighting", "priors",
                                    "grid_size", "knots", "knot_parameterization", "bandwidth", "phi", "mcmc", "seed"};
      bool ok = false;
      for (const char* n : known) ok = ok || k == n;
      for (const char* n : extra) ok = ok || k == n;
      if (!ok) throw ValidationError("unknown key '" + k + "' in run config");
    }
    RunConfig c;
    if (j.contains("model")) c.model = parse_model_kind(j.at("model").get<std::string>());
    detail::read_if(j, "covariates1", c.covariates1);
    detail::read_if(j, "covariates2", c.covariates2);
    detail::read_if(j, "intercept_process", c.intercept_process);
    if (j.contains("weighting")) c.weighting = parse_weighting(j.at("weighting").get<std::string>());
    if (j.contains("priors")) {
      const auto& p = j.at("priors");
      detail::reject_unknown(p, {"coef_sd", "sigma_shape", "sigma_scale", "log_delta_sd"}, "priors");
      detail::read_if(p, "coef_sd", c.priors.coef_sd);
      detail::read_if(p, "sigma_shape", c.priors.sigma_shape);
      detail::read_if(p, "sigma_scale", c.priors.sigma_scale);
      detail::read_if(p, "log_delta_sd", c.priors.log_delta_sd);
    }
    detail::read_if(j, "grid_size", c.grid_size);
    detail::read_if(j, "knots", c.knots);
    if (j.contains("knot_parameterization"))
      c.knot_parameterization = parse_knot_parameterization(j.at("knot_parameterization").get<std::string>());
    if (j.contains("bandwidth") && !j.at("bandwidth").is_null()) c.bandwidth = j.at("bandwidth").get<double>();
    if (j.contains("phi") && !j.at("phi").is_null()) c.phi = j.at("phi").get<double>();
    if (j.contains("mcmc")) {
      const auto& m = j.at("mcmc");
      detail::reject_unknown(m, {"n_iter", "burn_in", "thin", "adapt_interval", "target_accept", "init", "seed"}, "mcmc");
      detail::read_if(m, "n_iter", c.mcmc.n_iter);
      detail::read_if(m, "burn_in", c.mcmc.burn_in);
      detail::read_if(m, "thin", c.mcmc.thin);
      detail::read_if(m, "adapt_interval", c.mcmc.adapt_interval);
      detail::read_if(m, "target_accept", c.mcmc.target_accept);
      detail::read_if(m, "init", c.mcmc.init);
      detail::read_if(m, "seed", c.seed);
    }
    detail::read_if(j, "seed", c.seed);
    c.mcmc.seed = c.seed;
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed run config: ") + e.what());
  }
}

inline json read_json(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ValidationError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_json(const json& j, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------------------------
// Chains and summaries

inline void save_chain(const Chain& chain, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (std::size_t j = 0; j < chain.names.size(); ++j) out << (j ? "," : "") << chain.names[j];
  out << '\n';
  for (Eigen::Index i = 0; i < chain.draws.rows(); ++i) {
    for (Eigen::Index j = 0; j < chain.draws.cols(); ++j) out << (j ? "," : "") << detail::format_double(chain.draws(i, j));
    out << '\n';
  }
}

inline Chain load_chain(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("'" + path.string() + "' is empty");
  Chain chain;
  for (const auto& h : detail::split_csv(line)) chain.names.push_back(detail::trim(h));
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != chain.names.size())
      throw ValidationError("'" + path.string() + "' line " + std::to_string(lineno) + ": wrong field count");
    std::vector<double> r;
    for (const auto& s : f) {
      const auto v = detail::parse_double(s);
      if (!v) throw ValidationError("'" + path.string() + "' line " + std::to_string(lineno) + ": non-numeric value");
      r.push_back(*v);
    }
    rows.push_back(std::move(r));
  }
  chain.draws.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(chain.names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      chain.draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return chain;
}

inline json summary_to_json(const FitSummary& s) {
  json params = json::array();
  for (const auto& p : s.parameters)
    params.push_back({{"name", p.name},
                      {"estimate", detail::maybe_number(p.estimate)},
                      {"spread", detail::maybe_number(p.spread)},
                      {"lower", detail::maybe_number(p.lower)},
                      {"upper", detail::maybe_number(p.upper)}});
  return {{"parameters", params}, {"score_name", s.score_name}, {"score", detail::maybe_number(s.score)}};
}

inline json diagnostics_to_json(const std::vector<ParameterDiagnostics>& d, const std::vector<std::string>& warnings) {
  json params = json::array();
  for (const auto& p : d)
    params.push_back({{"name", p.name},
                      {"ess", detail::maybe_number(p.ess)},
                      {"mcse", detail::maybe_number(p.mcse)},
                      {"accept_rate", detail::maybe_number(p.accept_rate)},
                      {"proposal_sd", detail::maybe_number(p.proposal_sd)}});
  return {{"parameters", params}, {"warnings", warnings}};
}

inline void save_prediction(const GridPrediction& g, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "x,y,lambda1,lambda2,shared\n";
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    out << detail::format_double(g.nodes[i].x) << ',' << detail::format_double(g.nodes[i].y) << ','
        << detail::format_double(g.lambda1[i]) << ',' << detail::format_double(g.lambda2[i]) << ','
        << detail::format_double(g.shared[i]) << '\n';
}

}  // namespace ppshare::io
