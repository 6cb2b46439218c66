#include "tripartite/config.hpp"

#include <fmt/format.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "tripartite/csv.hpp"

namespace tripartite {

namespace {

namespace pt = boost::property_tree;

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(sep, start), text.size());
    const auto piece = csv::trim(text.substr(start, end - start));
    if (!piece.empty()) out.emplace_back(piece);
    start = end + 1;
  }
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  const auto v = csv::parse_double(value);
  if (!v) throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, value));
  return *v;
}

long long to_integer(const std::string& key, const std::string& value) {
  const auto v = csv::parse_integer(value);
  if (!v) throw ConfigError(fmt::format("{}: expected an integer, got '{}'", key, value));
  return *v;
}

std::size_t to_count(const std::string& key, const std::string& value) {
  const auto v = to_integer(key, value);
  if (v < 0) throw ConfigError(fmt::format("{}: must not be negative", key));
  return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "yes" || value == "1") return true;
  if (value == "false" || value == "no" || value == "0") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, value));
}

}  // namespace

std::vector<Covariate> parse_covariates(const std::string& text) {
  std::vector<Covariate> out;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() < 2) throw ConfigError(fmt::format("covariate '{}': expected name:kind", item));
    Covariate c;
    c.name = parts[0];
    if (parts[1] == "continuous" && parts.size() == 2) {
      c.kind = CovariateKind::continuous;
    } else if (parts[1] == "categorical" && parts.size() == 3) {
      c.kind = CovariateKind::categorical;
      c.levels = split(parts[2], '|');
    } else {
      throw ConfigError(fmt::format("covariate '{}': expected name:continuous or name:categorical:L1|L2", item));
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<Visit> parse_visits(const std::string& text) {
  std::vector<Visit> out;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 2) throw ConfigError(fmt::format("visit '{}': expected label:week", item));
    out.push_back({parts[0], to_double("schema.visits", parts[1])});
  }
  return out;
}

RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
  }

  RunConfig cfg;
  std::optional<std::string> covariates, visits;
  std::optional<double> d_max;

  using Setter = std::function<void(const std::string& key, const std::string& value)>;
  const std::map<std::string, Setter> setters{
      {"data.path", [&](auto&, auto& v) { cfg.data_path = base_dir / std::filesystem::path(v); }},
      {"schema.covariates", [&](auto&, auto& v) { covariates = v; }},
      {"schema.visits", [&](auto&, auto& v) { visits = v; }},
      {"schema.d_max", [&](auto& k, auto& v) { d_max = to_double(k, v); }},
      {"ice.improvement_threshold", [&](auto& k, auto& v) { cfg.improvement_threshold = to_double(k, v); }},
      {"ice.baseline_efficacy", [&](auto&, auto& v) { cfg.baseline_efficacy = v; }},
      {"ice.loe_interval_weeks", [&](auto& k, auto& v) { cfg.loe_interval_weeks = to_double(k, v); }},
      {"analysis.alpha", [&](auto& k, auto& v) { cfg.alpha = to_double(k, v); }},
      {"analysis.ci_method",
       [&](auto& k, auto& v) {
         try {
           cfg.ci_method = parse_ci_method(v);
         } catch (const std::exception&) {
           throw ConfigError(fmt::format("{}: expected wald or newcombe, got '{}'", k, v));
         }
       }},
      {"analysis.test_method",
       [&](auto& k, auto& v) {
         try {
           cfg.test_method = parse_test_method(v);
         } catch (const std::exception&) {
           throw ConfigError(fmt::format("{}: expected fisher or chi_square, got '{}'", k, v));
         }
       }},
      {"analysis.mc_draws", [&](auto& k, auto& v) { cfg.battery.mc_draws = static_cast<int>(to_integer(k, v)); }},
      {"analysis.plug_in", [&](auto& k, auto& v) { cfg.battery.plug_in = to_bool(k, v); }},
      {"analysis.j2r_imputations",
       [&](auto& k, auto& v) { cfg.battery.j2r_imputations = static_cast<int>(to_integer(k, v)); }},
      {"analysis.irls_tolerance", [&](auto& k, auto& v) { cfg.battery.irls.tolerance = to_double(k, v); }},
      {"analysis.irls_max_iterations",
       [&](auto& k, auto& v) { cfg.battery.irls.max_iterations = static_cast<int>(to_integer(k, v)); }},
      {"analysis.separation_norm", [&](auto& k, auto& v) { cfg.battery.irls.separation_norm = to_double(k, v); }},
      {"analysis.seed", [&](auto& k, auto& v) { cfg.seed = static_cast<std::uint64_t>(to_count(k, v)); }},
      {"bootstrap.replicates",
       [&](auto& k, auto& v) { cfg.bootstrap_replicates = static_cast<int>(to_integer(k, v)); }},
      {"bootstrap.dump_replicates", [&](auto& k, auto& v) { cfg.dump_replicates = to_bool(k, v); }},
      {"simulation.preset", [&](auto&, auto& v) { cfg.preset = v; }},
      {"simulation.n_per_arm", [&](auto& k, auto& v) { cfg.n_per_arm = to_count(k, v); }},
      {"simulation.a5_violation", [&](auto& k, auto& v) { cfg.a5_violation = to_double(k, v); }},
      {"simulation.tie_probability", [&](auto& k, auto& v) { cfg.tie_probability = to_double(k, v); }},
      {"simulation.treatment_shift", [&](auto& k, auto& v) { cfg.treatment_shift = to_double(k, v); }},
      {"simulation.oracle_draws", [&](auto& k, auto& v) { cfg.oracle_draws = to_count(k, v); }},
      {"benchmark.reps", [&](auto& k, auto& v) { cfg.benchmark_reps = static_cast<int>(to_integer(k, v)); }},
      {"benchmark.n_grid",
       [&](auto& k, auto& v) {
         cfg.n_grid.clear();
         for (const auto& n : split(v, ',')) cfg.n_grid.push_back(to_count(k, n));
       }},
      {"benchmark.bootstrap",
       [&](auto& k, auto& v) { cfg.benchmark_bootstrap = static_cast<int>(to_integer(k, v)); }},
      {"benchmark.estimators",
       [&](auto& k, auto& v) {
         cfg.estimators.clear();
         for (const auto& e : split(v, ',')) {
           try {
             cfg.estimators.push_back(parse_estimator(e));
           } catch (const std::exception&) {
             throw ConfigError(fmt::format("{}: unknown estimator '{}'", k, e));
           }
         }
       }},
      {"output.dir", [&](auto&, auto& v) { cfg.output_dir = base_dir / std::filesystem::path(v); }},
  };

  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(fmt::format("config key '{}' outside a section", section));
    for (const auto& [key, node] : body) {
      const std::string full = section + "." + key;
      const auto it = setters.find(full);
      if (it == setters.end()) throw ConfigError(fmt::format("unknown config key '{}'", full));
      it->second(full, std::string(csv::trim(node.data())));
    }
  }

  if (covariates || visits || d_max) {
    if (!d_max) throw ConfigError("schema.d_max is required when a schema is declared");
    CovariateSchema s;
    if (covariates) s.covariates = parse_covariates(*covariates);
    if (visits) s.visits = parse_visits(*visits);
    s.d_max = *d_max;
    try {
      s.check();
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    cfg.schema = std::move(s);
  }
  cfg.check();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file {}", path.string()));
  return parse_config(in, path.parent_path());
}

void RunConfig::check() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError(fmt::format("analysis.alpha must lie in (0,1), got {}", alpha));
  if (bootstrap_replicates < 100)
    throw ConfigError(fmt::format("bootstrap.replicates must be at least 100, got {}", bootstrap_replicates));
  if (battery.mc_draws < 1) throw ConfigError("analysis.mc_draws must be positive");
  if (battery.j2r_imputations < 2) throw ConfigError("analysis.j2r_imputations must be at least 2");
  if (!(loe_interval_weeks > 0.0)) throw ConfigError("ice.loe_interval_weeks must be positive");
  if (benchmark_reps < 50) throw ConfigError(fmt::format("benchmark.reps must be at least 50, got {}", benchmark_reps));
  if (benchmark_bootstrap != 0 && benchmark_bootstrap < 100)
    throw ConfigError("benchmark.bootstrap must be 0 or at least 100");
  if (oracle_draws < 100000) throw ConfigError("simulation.oracle_draws must be at least 100000");
  if (schema && baseline_efficacy) {
    try {
      schema->covariate_index(*baseline_efficacy);
    } catch (const DataError&) {
      throw ConfigError(fmt::format("ice.baseline_efficacy names unknown covariate '{}'", *baseline_efficacy));
    }
  }
}

SimulationSpec RunConfig::simulation_spec() const {
  SimulationSpec spec;
  try {
    spec = preset_spec(preset);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  if (n_per_arm) spec.n_per_arm = *n_per_arm;
  if (a5_violation) spec.a5_violation = *a5_violation;
  if (tie_probability) spec.tie_probability = *tie_probability;
  if (treatment_shift) spec.arms[1].y.intercept += *treatment_shift;
  try {
    spec.check();
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

}  // namespace tripartite
