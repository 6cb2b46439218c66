#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tripartite/ace.hpp"
#include "tripartite/ice_estimands.hpp"
#include "tripartite/simulation.hpp"
#include "tripartite/trial_data.hpp"

namespace tripartite {

/// Bad configuration: unknown key, malformed value, out-of-range setting.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Settings for one run, read from an INI-style file. Every key is optional;
/// defaults are listed in README.md.
struct RunConfig {
  // [data]
  std::optional<std::filesystem::path> data_path;  // resolved against the config file's directory
  // [schema]
  std::optional<CovariateSchema> schema;
  // [ice]
  double improvement_threshold = 0.0;
  std::optional<std::string> baseline_efficacy;  // covariate holding the baseline efficacy value
  double loe_interval_weeks = 13.0;
  // [analysis]
  double alpha = 0.05;
  CiMethod ci_method = CiMethod::wald;
  TestMethod test_method = TestMethod::fisher;
  BatteryOptions battery;
  std::optional<std::uint64_t> seed;
  // [bootstrap]
  int bootstrap_replicates = 1000;
  bool dump_replicates = false;
  // [simulation]
  std::string preset = "hba1c";
  std::optional<std::size_t> n_per_arm;
  std::optional<double> a5_violation;
  std::optional<double> tie_probability;
  std::optional<double> treatment_shift;  // added to the arm-1 outcome intercept
  std::size_t oracle_draws = 200000;
  // [benchmark]
  int benchmark_reps = 200;
  std::vector<std::size_t> n_grid;
  int benchmark_bootstrap = 0;
  std::vector<Estimator> estimators{kAllEstimators.begin(), kAllEstimators.end()};
  // [output]
  std::filesystem::path output_dir = "out";

  SimulationSpec simulation_spec() const;
  void check() const;  // throws ConfigError
};

RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// "age:continuous, sex:categorical:F|M"
std::vector<Covariate> parse_covariates(const std::string& text);
/// "w12:12, w26:26"
std::vector<Visit> parse_visits(const std::string& text);

}  // namespace tripartite
