#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tripartite/ace.hpp"
#include "tripartite/rng.hpp"
#include "tripartite/trial_data.hpp"

namespace tripartite {

struct BootstrapOptions {
  int replicates = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  double max_failure_rate = 0.05;
  Execution execution = Execution::parallel;
};

/// Percentile bootstrap summary of one statistic. `replicates` holds the
/// successful resamples in resample order.
struct BootstrapResult {
  std::string name;
  double point = 0.0;
  std::vector<double> replicates;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double se = 0.0;
  std::uint64_t seed = 0;
  int requested = 0;
  double alpha = 0.05;
  std::vector<std::string> failures;
};

/// Too many resamples failed; carries the distinct failure reasons.
class BootstrapFailure : public DataError {
 public:
  BootstrapFailure(const std::string& what, std::vector<std::string> reasons)
      : DataError(what), reasons(std::move(reasons)) {}
  std::vector<std::string> reasons;
};

/// Resample with replacement within each arm; arm sizes are preserved.
TrialDataset stratified_resample(const TrialDataset& ds, Rng& rng);

/// Computes a vector of statistics on one dataset with its own seed.
using VectorStatistic = std::function<std::vector<double>(const TrialDataset&, std::uint64_t seed)>;

/// Stratified percentile bootstrap of every component of a vector statistic.
/// The point estimate is statistic(ds, seed) unless supplied.
/// Replicate r resamples from stream (seed, r, 0) and evaluates with seed
/// (seed, r, 1); the result is the same for serial and parallel execution.
std::vector<BootstrapResult> bootstrap_vector(const TrialDataset& ds, const VectorStatistic& statistic,
                                              std::vector<std::string> names, const BootstrapOptions& options,
                                              std::optional<std::vector<double>> point_estimate = std::nullopt);

/// Bootstrap of one named member of the estimator battery (its difference).
BootstrapResult bootstrap_ci(Estimator estimator, const TrialDataset& ds, const BatteryOptions& battery,
                             const BootstrapOptions& options);

/// Names for battery_vector components.
std::vector<std::string> battery_vector_names();

/// Attaches bootstrap SEs and CIs to a battery result in place. Returns the
/// per-component results; the points are the battery's own values.
std::vector<BootstrapResult> bootstrap_battery(const TrialDataset& ds, BatteryResult& result,
                                               const BatteryOptions& battery, const BootstrapOptions& options);

/// Percentile interval from order statistics ceil(alpha*B/2) and
/// ceil((1-alpha/2)*B) (1-based).
std::pair<double, double> percentile_interval(std::vector<double> values, double alpha);

struct RubinPooled {
  double point = 0.0;
  double within = 0.0;
  double between = 0.0;
  double total = 0.0;
  double se = 0.0;
};

RubinPooled rubin_pool(std::span<const double> estimates, std::span<const double> within_variances);

}  // namespace tripartite
