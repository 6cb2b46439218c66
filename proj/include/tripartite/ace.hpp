#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tripartite/regression.hpp"
#include "tripartite/rng.hpp"
#include "tripartite/trial_data.hpp"

namespace tripartite {

// Adherence (principal score) model ----------------------------------------

/// P(no ICE during one inter-visit interval | at risk at its start, X, and
/// the intermediates observed before it).
struct AdherenceInterval {
  double start_week = 0.0;
  double end_week = 0.0;
  std::size_t intermediates = 0;  // Z_1..Z_k available at the interval start
  std::size_t at_risk = 0;
  std::size_t events = 0;
  std::optional<double> constant_probability;  // set when every at-risk subject shares one outcome
  LogisticModel model;

  double probability(std::span<const double> x, std::span<const double> z) const {
    if (constant_probability) return *constant_probability;
    const auto& c = model.coefficients;
    double eta = c[0];
    Eigen::Index j = 1;
    for (double xi : x) eta += c[j++] * xi;
    for (std::size_t k = 0; k < intermediates; ++k) eta += c[j++] * z[k];
    return 1.0 / (1.0 + std::exp(-eta));
  }
};

/// Multiplicative adherence model for one arm: the probability of adhering
/// through d_max is the product of the interval no-ICE probabilities. The
/// identifying condition is ignorable adherence: given X and Z(t), A(t) is
/// independent of the potential outcomes.
struct AdherenceModel {
  int arm = 0;
  std::vector<AdherenceInterval> intervals;

  double probability(std::span<const double> x, std::span<const double> z) const {
    double p = 1.0;
    for (const auto& iv : intervals) p *= iv.probability(x, z);
    return p;
  }
};

AdherenceModel fit_adherence_model(const TrialDataset& ds, int arm, const IrlsOptions& irls = {});

// Counterfactual quantities ---------------------------------------------------

struct MonteCarloOptions {
  int draws = 200;
  bool plug_in = false;  // evaluate at predicted intermediates instead of integrating
  std::uint64_t seed = 0;
  Execution execution = Execution::parallel;
};

/// Per subject and per arm t:
///   phi[j][t]    = E[Y(t) | X_j]
///   h[j][t]      = E[adherence probability under t | X_j]
///   varphi[j][t] = E[adherence probability * E[Y | X, Z(t)] | X_j]
/// h and varphi integrate over Z(t) | X by seeded Monte Carlo from the
/// chain's Gaussian residuals. varphi uses phi as a control variate:
/// h * phi plus the draw covariance of probability and outcome mean.
struct CounterfactualQuantities {
  std::vector<std::array<double, 2>> phi;
  std::vector<std::array<double, 2>> h;
  std::vector<std::array<double, 2>> varphi;
};

CounterfactualQuantities counterfactual_quantities(const TrialDataset& ds, const std::array<OutcomeChain, 2>& chains,
                                                   const std::array<AdherenceModel, 2>& adherence,
                                                   const MonteCarloOptions& options);

// Estimates -------------------------------------------------------------------

enum class Estimator { naive, s_star_plus, s_plus_plus, hypothetical_mar, j2r };

inline constexpr std::array<Estimator, 5> kAllEstimators{Estimator::naive, Estimator::s_star_plus,
                                                         Estimator::s_plus_plus, Estimator::hypothetical_mar,
                                                         Estimator::j2r};

std::string_view to_string(Estimator e);
std::string_view display_name(Estimator e);
std::string_view target_stratum(Estimator e);
Estimator parse_estimator(std::string_view text);

struct StratumEstimate {
  Estimator estimator = Estimator::naive;
  double mean1 = 0.0;
  double mean0 = 0.0;
  double diff = 0.0;
  std::optional<double> se1, se0, se;
  std::optional<double> ci_low, ci_high;
  std::string note;
};

/// S*+ (adherent on arm 1): observed arm-1 adherer outcomes against their
/// arm-0 virtual twins phi_0(X).
StratumEstimate ace_s_star_plus(const TrialDataset& ds, const CounterfactualQuantities& cq);

/// S++ (adherent on both arms): each arm's mean is an adherence-weighted
/// average of varphi over the other arm's adherers.
StratumEstimate ace_s_plus_plus(const TrialDataset& ds, const CounterfactualQuantities& cq);

/// Expected share of subjects who would adhere to both treatments.
double estimate_p_plus_plus(const TrialDataset& ds, const CounterfactualQuantities& cq);

/// Observed adherer means. Not a causal contrast: the two means condition
/// on different strata.
StratumEstimate naive_adherers(const TrialDataset& ds);

/// Hypothetical-strategy estimate over all randomized subjects, assuming
/// missing at random: mean of phi_t(X) over everyone.
StratumEstimate hypothetical_mar(const TrialDataset& ds, const std::array<OutcomeChain, 2>& chains);

struct J2rResult {
  StratumEstimate estimate;
  std::vector<double> diffs;
  std::vector<double> within_variances;
};

/// Jump to reference: missing outcomes in both arms are imputed from the
/// reference (arm 0) chain given X and observed pre-ICE intermediates, with
/// Gaussian residual noise, then pooled by Rubin's rules.
J2rResult j2r_estimate(const TrialDataset& ds, const OutcomeChain& reference, int imputations, std::uint64_t seed);

// Battery ----------------------------------------------------------------------

struct BatteryOptions {
  int mc_draws = 200;
  bool plug_in = false;
  int j2r_imputations = 20;
  IrlsOptions irls;
  Execution execution = Execution::parallel;
};

struct FittedModels {
  std::array<OutcomeChain, 2> chains;
  std::array<AdherenceModel, 2> adherence;
};

struct BatteryResult {
  std::vector<StratumEstimate> estimates;  // in kAllEstimators order
  double p_plus_plus = 0.0;
  std::optional<double> p_plus_plus_se;
  std::optional<std::pair<double, double>> p_plus_plus_ci;
  FittedModels models;

  const StratumEstimate& get(Estimator e) const;
  StratumEstimate& get(Estimator e);
};

/// Fits chains and adherence models for both arms and evaluates every
/// estimator. Deterministic given seed.
BatteryResult run_battery(const TrialDataset& ds, const BatteryOptions& options, std::uint64_t seed);

/// mean1, mean0, diff per estimator in kAllEstimators order, then p++.
std::vector<double> battery_vector(const BatteryResult& result);

}  // namespace tripartite
