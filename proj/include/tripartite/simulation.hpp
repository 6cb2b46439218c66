#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tripartite/ace.hpp"
#include "tripartite/rng.hpp"
#include "tripartite/trial_data.hpp"

namespace tripartite {

/// intercept + x_coef . standardized X + z_coef . (Z_1, Z_2, ...), with
/// Gaussian residual SD `sd` where the term is an outcome.
struct LinearSpec {
  double intercept = 0.0;
  std::vector<double> x_coef;
  std::vector<double> z_coef;
  double sd = 0.0;

  double eval(std::span<const double> xs, std::span<const double> z) const {
    double v = intercept;
    for (std::size_t i = 0; i < x_coef.size(); ++i) v += x_coef[i] * xs[i];
    for (std::size_t k = 0; k < z_coef.size(); ++k) v += z_coef[k] * z[k];
    return v;
  }
};

struct BaselineSpec {
  std::string name;
  double mean = 0.0;
  double sd = 1.0;
};

struct ArmSpec {
  std::vector<LinearSpec> z;  // Z_k | X, Z_<k
  LinearSpec y;               // Y | X, Z
  // logit P(no AE/LoE ICE during interval k | at risk, X, Z_1..Z_k); one per
  // interval, visits + 1 in total
  std::vector<LinearSpec> adherence;
  // logit P(cause is LoE | AE/LoE ICE) = loe_intercept + loe_z_slope * (latest Z - loe_z_center)
  double loe_intercept = -2.0;
  double loe_z_slope = 0.0;
  double loe_z_center = 0.0;
};

/// Generative model: X, then Z(t) | X independently per arm, Y(t) | X, Z(t),
/// adherence A(t) from interval hazards given X and Z(t), randomized T, and
/// observed data revealed at the assigned arm with post-ICE values masked.
struct SimulationSpec {
  std::string name;
  std::size_t n_per_arm = 500;
  std::vector<BaselineSpec> baseline;
  std::vector<Visit> visits;
  double d_max = 52.0;
  std::array<ArmSpec, 2> arms;
  LinearSpec admin;              // logit P(administrative ICE in an interval | X); same in both arms
  double tie_probability = 0.0;  // P(AE and LoE at the same time | AE/LoE ICE)
  double a5_violation = 0.0;     // weight of the Y(t) residual in the last interval's logit; 0 honors A5

  void check() const;  // throws DataError
  CovariateSchema schema() const;
};

SimulationSpec hba1c_like_spec();
SimulationSpec null_effect_spec();
SimulationSpec no_ice_spec();
SimulationSpec preset_spec(const std::string& name);

enum class FirstIce { none, ae, loe, ae_and_loe, admin };

struct PotentialArm {
  std::vector<double> z;
  double y = 0.0;
  bool adherent = true;
  double first_ice_week = std::numeric_limits<double>::infinity();
  FirstIce cause = FirstIce::none;
};

struct SubjectPotentials {
  std::vector<double> x;
  std::array<PotentialArm, 2> arm;
  int treatment = 0;
};

struct SimulationTruth {
  std::vector<SubjectPotentials> subjects;  // aligned with the dataset's subjects
  // Effects among this draw's subjects.
  double s_star_star = 0.0;
  double s_star_plus = 0.0;
  double s_plus_plus = 0.0;
  double p_plus_plus = 0.0;
};

struct SimulatedTrial {
  TrialDataset data;
  SimulationTruth truth;
};

/// Potential values of one subject under both arms.
SubjectPotentials draw_subject(const SimulationSpec& spec, Rng& rng);

/// Observed record of a subject at its assigned arm.
SubjectRecord reveal(const SimulationSpec& spec, const SubjectPotentials& p, std::string id);

SimulatedTrial generate_trial(const SimulationSpec& spec, std::uint64_t seed,
                              Execution execution = Execution::parallel);

struct OracleTruth {
  std::size_t draws = 0;
  double s_star_star = 0.0, s_star_plus = 0.0, s_plus_plus = 0.0, naive = 0.0, p_plus_plus = 0.0;
  double se_s_star_star = 0.0, se_s_star_plus = 0.0, se_s_plus_plus = 0.0, se_naive = 0.0, se_p_plus_plus = 0.0;
  double p_adhere1 = 0.0, p_adhere0 = 0.0;

  double for_estimator(Estimator e) const;
  double se_for_estimator(Estimator e) const;
};

/// Brute-force Monte Carlo over the generative model with both potential
/// outcomes kept; stratum effects by filtering on A(0), A(1).
OracleTruth oracle_truth(const SimulationSpec& spec, std::size_t draws, std::uint64_t seed,
                         Execution execution = Execution::parallel);

// Benchmark -------------------------------------------------------------------

struct BenchmarkOptions {
  int reps = 200;
  std::vector<std::size_t> n_grid;  // per arm; empty means spec.n_per_arm
  std::vector<Estimator> estimators{kAllEstimators.begin(), kAllEstimators.end()};
  std::uint64_t seed = 0;
  std::size_t oracle_draws = 200000;
  int bootstrap_replicates = 0;  // 0 disables coverage
  double alpha = 0.05;
  BatteryOptions battery;
  Execution execution = Execution::parallel;
};

struct BenchmarkRow {
  std::size_t n_per_arm = 0;
  std::string estimator;  // an Estimator name or "p_plus_plus"
  std::string target;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double mc_se = 0.0;  // sd / sqrt(successful reps)
  std::optional<double> coverage;
  int successes = 0;
  int failures = 0;
};

/// Mean and max of |MAR estimate - S++ estimate| across reps at one n.
struct EstimandGap {
  std::size_t n_per_arm = 0;
  double mean_abs_gap = 0.0;
  double max_abs_gap = 0.0;
};

struct BenchmarkReport {
  OracleTruth truth;
  std::vector<BenchmarkRow> rows;
  std::vector<EstimandGap> gaps;
  std::vector<std::string> failure_reasons;

  const BenchmarkRow& row(std::size_t n, std::string_view estimator) const;
};

BenchmarkReport run_benchmark(const SimulationSpec& spec, const BenchmarkOptions& options);

}  // namespace tripartite
