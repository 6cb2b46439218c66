#include "tripartite/inference.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

namespace tripartite {

TrialDataset stratified_resample(const TrialDataset& ds, Rng& rng) {
  std::array<std::vector<std::size_t>, 2> by_arm;
  for (std::size_t i = 0; i < ds.subjects.size(); ++i) by_arm[ds.subjects[i].treatment].push_back(i);
  std::vector<SubjectRecord> subjects;
  subjects.reserve(ds.subjects.size());
  for (const auto& members : by_arm) {
    const auto n = static_cast<double>(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      auto pick = static_cast<std::size_t>(uniform01(rng) * n);
      subjects.push_back(ds.subjects[members[std::min(pick, members.size() - 1)]]);
    }
  }
  TrialDataset out;
  out.schema = ds.schema;
  out.counts = count_arms(subjects, ds.schema.d_max);
  out.subjects = std::move(subjects);
  return out;
}

std::pair<double, double> percentile_interval(std::vector<double> values, double alpha) {
  if (values.empty()) throw DataError("percentile interval of an empty sample");
  std::sort(values.begin(), values.end());
  const auto B = static_cast<double>(values.size());
  auto order_stat = [&](double rank) {
    auto k = static_cast<std::size_t>(std::ceil(rank - 1e-9));
    k = std::clamp<std::size_t>(k, 1, values.size());
    return values[k - 1];
  };
  return {order_stat(alpha * B / 2.0), order_stat((1.0 - alpha / 2.0) * B)};
}

std::vector<BootstrapResult> bootstrap_vector(const TrialDataset& ds, const VectorStatistic& statistic,
                                              std::vector<std::string> names, const BootstrapOptions& options,
                                              std::optional<std::vector<double>> point_estimate) {
  if (options.replicates < 100) throw DataError(fmt::format("bootstrap needs B >= 100, got {}", options.replicates));
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw DataError("bootstrap alpha must lie in (0,1)");

  const std::vector<double> point = point_estimate ? std::move(*point_estimate) : statistic(ds, options.seed);
  const std::size_t dim = point.size();
  names.resize(dim);

  const auto B = static_cast<std::size_t>(options.replicates);
  std::vector<std::optional<std::vector<double>>> reps(B);
  std::vector<std::string> errors(B);

  auto one = [&](std::size_t r) {
    try {
      Rng rng = make_rng(options.seed, {r, 0});
      const auto sample = stratified_resample(ds, rng);
      auto v = statistic(sample, derive_seed(options.seed, {r, 1}));
      if (v.size() != dim) throw DataError("statistic changed dimension");
      for (double x : v)
        if (!std::isfinite(x)) throw DataError("non-finite statistic");
      reps[r] = std::move(v);
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  };
  const auto count = static_cast<long>(B);
  if (options.execution == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (long r = 0; r < count; ++r) one(static_cast<std::size_t>(r));
  } else {
    for (long r = 0; r < count; ++r) one(static_cast<std::size_t>(r));
  }

  std::vector<std::string> failures;
  for (std::size_t r = 0; r < B; ++r)
    if (!reps[r]) failures.push_back(errors[r]);
  if (static_cast<double>(failures.size()) > options.max_failure_rate * static_cast<double>(B)) {
    std::set<std::string> distinct(failures.begin(), failures.end());
    throw BootstrapFailure(fmt::format("{} of {} bootstrap resamples failed; first reason: {}", failures.size(), B,
                                       *distinct.begin()),
                           {distinct.begin(), distinct.end()});
  }

  std::vector<BootstrapResult> out(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    auto& res = out[c];
    res.name = names[c];
    res.point = point[c];
    res.seed = options.seed;
    res.requested = options.replicates;
    res.alpha = options.alpha;
    res.failures = failures;
    for (const auto& rep : reps)
      if (rep) res.replicates.push_back((*rep)[c]);
    double mean = 0.0;
    for (double v : res.replicates) mean += v;
    mean /= static_cast<double>(res.replicates.size());
    double ss = 0.0;
    for (double v : res.replicates) ss += (v - mean) * (v - mean);
    res.se = res.replicates.size() > 1 ? std::sqrt(ss / static_cast<double>(res.replicates.size() - 1)) : 0.0;
    std::tie(res.ci_low, res.ci_high) = percentile_interval(res.replicates, options.alpha);
  }
  return out;
}

std::vector<std::string> battery_vector_names() {
  std::vector<std::string> names;
  for (auto e : kAllEstimators)
    for (const char* part : {"mean1", "mean0", "diff"}) names.push_back(fmt::format("{}.{}", to_string(e), part));
  names.emplace_back("p_plus_plus");
  return names;
}

namespace {

VectorStatistic battery_statistic(const BatteryOptions& battery, Execution outer) {
  BatteryOptions inner = battery;
  if (outer == Execution::parallel) inner.execution = Execution::serial;
  return [inner](const TrialDataset& sample, std::uint64_t seed) {
    return battery_vector(run_battery(sample, inner, seed));
  };
}

}  // namespace

BootstrapResult bootstrap_ci(Estimator estimator, const TrialDataset& ds, const BatteryOptions& battery,
                             const BootstrapOptions& options) {
  auto all = bootstrap_vector(ds, battery_statistic(battery, options.execution), battery_vector_names(), options);
  for (std::size_t i = 0; i < kAllEstimators.size(); ++i)
    if (kAllEstimators[i] == estimator) return all[3 * i + 2];
  throw DataError("unknown estimator");
}

std::vector<BootstrapResult> bootstrap_battery(const TrialDataset& ds, BatteryResult& result,
                                               const BatteryOptions& battery, const BootstrapOptions& options) {
  auto all = bootstrap_vector(ds, battery_statistic(battery, options.execution), battery_vector_names(), options,
                              battery_vector(result));
  for (std::size_t i = 0; i < kAllEstimators.size(); ++i) {
    auto& est = result.get(kAllEstimators[i]);
    est.se1 = all[3 * i].se;
    est.se0 = all[3 * i + 1].se;
    est.se = all[3 * i + 2].se;
    est.ci_low = all[3 * i + 2].ci_low;
    est.ci_high = all[3 * i + 2].ci_high;
  }
  const auto& pp = all.back();
  result.p_plus_plus_se = pp.se;
  result.p_plus_plus_ci = std::pair{pp.ci_low, pp.ci_high};
  return all;
}

RubinPooled rubin_pool(std::span<const double> estimates, std::span<const double> within_variances) {
  if (estimates.size() != within_variances.size()) throw DataError("rubin_pool: length mismatch");
  const std::size_t m = estimates.size();
  if (m < 2) throw DataError("rubin_pool needs at least 2 imputations");
  RubinPooled r;
  for (std::size_t i = 0; i < m; ++i) {
    r.point += estimates[i];
    r.within += within_variances[i];
  }
  const auto md = static_cast<double>(m);
  r.point /= md;
  r.within /= md;
  for (double e : estimates) r.between += (e - r.point) * (e - r.point);
  r.between /= md - 1.0;
  r.total = r.within + (1.0 + 1.0 / md) * r.between;
  r.se = std::sqrt(r.total);
  return r;
}

}  // namespace tripartite
