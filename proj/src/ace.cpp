#include "tripartite/ace.hpp"

#include <fmt/format.h>
#include <omp.h>

#include <cmath>
#include <utility>

#include "tripartite/inference.hpp"

namespace tripartite {

namespace {

std::vector<std::vector<double>> design_rows(const TrialDataset& ds) {
  std::vector<std::vector<double>> rows;
  rows.reserve(ds.subjects.size());
  for (const auto& s : ds.subjects) rows.push_back(baseline_design(ds.schema, s));
  return rows;
}

template <class Body>
void for_each_index(std::size_t n, Execution execution, Body&& body) {
  const auto count = static_cast<long>(n);
  if (execution == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
  } else {
    for (long i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
  }
}

}  // namespace

// Adherence model -------------------------------------------------------------

AdherenceModel fit_adherence_model(const TrialDataset& ds, int arm, const IrlsOptions& irls) {
  const auto& schema = ds.schema;
  const std::size_t K = schema.visits.size();
  AdherenceModel model;
  model.arm = arm;

  std::vector<std::string> names = schema.design_names();
  for (std::size_t k = 0; k <= K; ++k) {
    AdherenceInterval iv;
    iv.start_week = k == 0 ? 0.0 : schema.visits[k - 1].week;
    iv.end_week = k < K ? schema.visits[k].week : schema.d_max;
    iv.intermediates = k;

    std::vector<std::vector<double>> rows;
    std::vector<double> response;
    for (const auto& s : ds.subjects) {
      if (s.treatment != arm) continue;
      const double first = s.earliest_event().weeks();
      if (!(first > iv.start_week)) continue;
      bool complete = true;
      for (std::size_t i = 0; i < k; ++i) complete = complete && s.z[i].has_value();
      if (!complete) continue;
      auto row = baseline_design(schema, s);
      for (std::size_t i = 0; i < k; ++i) row.push_back(*s.z[i]);
      rows.push_back(std::move(row));
      response.push_back(first > iv.end_week ? 1.0 : 0.0);
    }
    if (rows.empty())
      throw DataError(fmt::format("arm {} adherence interval ({}, {}]: no subjects at risk", arm, iv.start_week,
                                  iv.end_week));
    iv.at_risk = rows.size();
    for (double r : response) iv.events += r == 0.0;

    if (iv.events == 0 || iv.events == iv.at_risk) {
      iv.constant_probability = iv.events == 0 ? 1.0 : 0.0;
    } else {
      const std::size_t p = rows.front().size();
      Eigen::MatrixXd design(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < p; ++c) design(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(response.data(), static_cast<Eigen::Index>(response.size()));
      try {
        iv.model = fit_logistic(design, y, irls, names);
      } catch (const RegressionError& e) {
        throw RegressionError(fmt::format("arm {} adherence interval ({}, {}]: {}", arm, iv.start_week, iv.end_week,
                                          e.what()));
      }
    }
    model.intervals.push_back(std::move(iv));
    if (k < K) names.push_back("z_" + schema.visits[k].label);
  }
  return model;
}

// Counterfactual quantities ---------------------------------------------------

CounterfactualQuantities counterfactual_quantities(const TrialDataset& ds, const std::array<OutcomeChain, 2>& chains,
                                                   const std::array<AdherenceModel, 2>& adherence,
                                                   const MonteCarloOptions& options) {
  if (options.draws < 1) throw DataError("mc_draws must be at least 1");
  const std::size_t n = ds.subjects.size();
  const std::size_t K = ds.schema.visits.size();
  const auto designs = design_rows(ds);
  CounterfactualQuantities cq;
  cq.phi.resize(n);
  cq.h.resize(n);
  cq.varphi.resize(n);

  const int draws = options.plug_in ? 1 : options.draws;
  for_each_index(n, options.execution, [&](std::size_t j) {
    const std::span<const double> x(designs[j]);
    std::vector<double> z(K), prob(static_cast<std::size_t>(draws)), ymean(static_cast<std::size_t>(draws));
    for (int t = 0; t < 2; ++t) {
      const auto& chain = chains[t];
      const auto& adh = adherence[t];
      const double phi = compose_phi(chain, x);
      Rng rng = make_rng(options.seed, {j, static_cast<std::uint64_t>(t)});
      for (int d = 0; d < draws; ++d) {
        for (std::size_t k = 0; k < K; ++k) {
          const double mean = chain.predict_z(k, x, z);
          z[k] = options.plug_in ? mean : mean + chain.z_models[k].residual_sd * standard_normal(rng);
        }
        prob[d] = adh.probability(x, z);
        ymean[d] = chain.predict_y(x, z);
      }
      double pbar = 0.0, ybar = 0.0;
      for (int d = 0; d < draws; ++d) {
        pbar += prob[d];
        ybar += ymean[d];
      }
      pbar /= draws;
      ybar /= draws;
      double cov = 0.0;
      for (int d = 0; d < draws; ++d) cov += (prob[d] - pbar) * (ymean[d] - ybar);
      cov /= draws;
      cq.phi[j][t] = phi;
      cq.h[j][t] = pbar;
      cq.varphi[j][t] = pbar * phi + cov;
    }
  });
  return cq;
}

// Estimators -------------------------------------------------------------------

std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::naive: return "naive";
    case Estimator::s_star_plus: return "ace_s_star_plus";
    case Estimator::s_plus_plus: return "ace_s_plus_plus";
    case Estimator::hypothetical_mar: return "hypothetical_mar";
    case Estimator::j2r: return "j2r";
  }
  return "?";
}

std::string_view display_name(Estimator e) {
  switch (e) {
    case Estimator::naive: return "Naive adherers";
    case Estimator::s_star_plus: return "ACE on S*+";
    case Estimator::s_plus_plus: return "ACE on S++";
    case Estimator::hypothetical_mar: return "Sequential regression (MAR) on S**";
    case Estimator::j2r: return "J2R imputation on S**";
  }
  return "?";
}

std::string_view target_stratum(Estimator e) {
  switch (e) {
    case Estimator::naive: return "none (non-causal)";
    case Estimator::s_star_plus: return "S*+";
    case Estimator::s_plus_plus: return "S++";
    case Estimator::hypothetical_mar: return "S**";
    case Estimator::j2r: return "S**";
  }
  return "?";
}

Estimator parse_estimator(std::string_view text) {
  for (auto e : kAllEstimators)
    if (text == to_string(e)) return e;
  throw DataError(fmt::format("unknown estimator '{}'", text));
}

StratumEstimate ace_s_star_plus(const TrialDataset& ds, const CounterfactualQuantities& cq) {
  const double d_max = ds.schema.d_max;
  double sum_y = 0.0, sum_twin = 0.0;
  std::size_t n11 = 0;
  for (std::size_t j = 0; j < ds.subjects.size(); ++j) {
    const auto& s = ds.subjects[j];
    if (s.treatment != 1 || !s.adherent(d_max)) continue;
    if (!s.y) throw DataError(fmt::format("arm-1 adherer '{}' has no outcome", s.id));
    sum_y += *s.y;
    sum_twin += cq.phi[j][0];
    ++n11;
  }
  if (n11 == 0) throw DataError("S*+ estimate needs at least one arm-1 adherer");
  StratumEstimate e;
  e.estimator = Estimator::s_star_plus;
  e.mean1 = sum_y / static_cast<double>(n11);
  e.mean0 = sum_twin / static_cast<double>(n11);
  e.diff = e.mean1 - e.mean0;
  return e;
}

StratumEstimate ace_s_plus_plus(const TrialDataset& ds, const CounterfactualQuantities& cq) {
  const double d_max = ds.schema.d_max;
  double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
  for (std::size_t j = 0; j < ds.subjects.size(); ++j) {
    const auto& s = ds.subjects[j];
    if (!s.adherent(d_max)) continue;
    if (s.treatment == 0) {
      num1 += cq.varphi[j][1];
      den1 += cq.h[j][1];
    } else {
      num0 += cq.varphi[j][0];
      den0 += cq.h[j][0];
    }
  }
  if (!(den1 > 0.0) || !(den0 > 0.0)) throw DataError("S++ estimate has a zero adherence-weight denominator");
  StratumEstimate e;
  e.estimator = Estimator::s_plus_plus;
  e.mean1 = num1 / den1;
  e.mean0 = num0 / den0;
  e.diff = e.mean1 - e.mean0;
  return e;
}

double estimate_p_plus_plus(const TrialDataset& ds, const CounterfactualQuantities& cq) {
  const double d_max = ds.schema.d_max;
  double sum = 0.0;
  for (std::size_t j = 0; j < ds.subjects.size(); ++j) {
    const auto& s = ds.subjects[j];
    if (s.adherent(d_max)) sum += cq.h[j][1 - s.treatment];
  }
  return sum / static_cast<double>(ds.counts.n1 + ds.counts.n0);
}

StratumEstimate naive_adherers(const TrialDataset& ds) {
  const double d_max = ds.schema.d_max;
  std::array<double, 2> sum{0.0, 0.0};
  std::array<std::size_t, 2> n{0, 0};
  for (const auto& s : ds.subjects) {
    if (!s.adherent(d_max) || !s.y) continue;
    sum[s.treatment] += *s.y;
    ++n[s.treatment];
  }
  if (n[0] == 0 || n[1] == 0) throw DataError("naive adherers estimate needs adherers with outcomes in both arms");
  StratumEstimate e;
  e.estimator = Estimator::naive;
  e.mean1 = sum[1] / static_cast<double>(n[1]);
  e.mean0 = sum[0] / static_cast<double>(n[0]);
  e.diff = e.mean1 - e.mean0;
  e.note = "non-causal: compares different adherer strata";
  return e;
}

StratumEstimate hypothetical_mar(const TrialDataset& ds, const std::array<OutcomeChain, 2>& chains) {
  if (ds.subjects.empty()) throw DataError("hypothetical estimate on empty dataset");
  std::array<double, 2> sum{0.0, 0.0};
  for (const auto& s : ds.subjects) {
    const auto x = baseline_design(ds.schema, s);
    for (int t = 0; t < 2; ++t) sum[t] += compose_phi(chains[t], x);
  }
  const auto n = static_cast<double>(ds.subjects.size());
  StratumEstimate e;
  e.estimator = Estimator::hypothetical_mar;
  e.mean1 = sum[1] / n;
  e.mean0 = sum[0] / n;
  e.diff = e.mean1 - e.mean0;
  e.note = "sequential-regression composition under missing at random";
  return e;
}

J2rResult j2r_estimate(const TrialDataset& ds, const OutcomeChain& reference, int imputations, std::uint64_t seed) {
  if (imputations < 2) throw DataError("J2R needs at least 2 imputations");
  const std::size_t K = ds.schema.visits.size();
  if (reference.arm != 0 || reference.y_model.coefficients.size() == 0 || reference.z_models.size() != K)
    throw DataError("J2R needs a fitted reference-arm (arm 0) chain");
  const auto designs = design_rows(ds);
  const std::size_t n = ds.subjects.size();

  J2rResult out;
  double mean1 = 0.0, mean0 = 0.0;
  std::vector<double> z(K);
  for (int m = 0; m < imputations; ++m) {
    std::array<double, 2> sum{0.0, 0.0}, sum2{0.0, 0.0};
    std::array<std::size_t, 2> cnt{0, 0};
    for (std::size_t j = 0; j < n; ++j) {
      const auto& s = ds.subjects[j];
      double y;
      if (s.y) {
        y = *s.y;
      } else {
        Rng rng = make_rng(seed, {static_cast<std::uint64_t>(m), j});
        bool observed_prefix = true;
        for (std::size_t k = 0; k < K; ++k) {
          observed_prefix = observed_prefix && s.z[k].has_value();
          z[k] = observed_prefix ? *s.z[k]
                                 : reference.predict_z(k, designs[j], z) +
                                       reference.z_models[k].residual_sd * standard_normal(rng);
        }
        y = reference.predict_y(designs[j], z) + reference.y_model.residual_sd * standard_normal(rng);
      }
      sum[s.treatment] += y;
      sum2[s.treatment] += y * y;
      ++cnt[s.treatment];
    }
    if (cnt[0] < 2 || cnt[1] < 2) throw DataError("J2R needs at least two subjects per arm");
    std::array<double, 2> mean{}, var{};
    for (int t = 0; t < 2; ++t) {
      const auto c = static_cast<double>(cnt[t]);
      mean[t] = sum[t] / c;
      var[t] = std::max(0.0, (sum2[t] - c * mean[t] * mean[t]) / (c - 1.0));
    }
    out.diffs.push_back(mean[1] - mean[0]);
    out.within_variances.push_back(var[1] / static_cast<double>(cnt[1]) + var[0] / static_cast<double>(cnt[0]));
    mean1 += mean[1];
    mean0 += mean[0];
  }
  const auto pooled = rubin_pool(out.diffs, out.within_variances);
  auto& e = out.estimate;
  e.estimator = Estimator::j2r;
  e.mean1 = mean1 / imputations;
  e.mean0 = mean0 / imputations;
  e.diff = pooled.point;
  e.se = pooled.se;
  e.note = fmt::format("{} imputations pooled by Rubin's rules", imputations);
  return out;
}

// Battery ----------------------------------------------------------------------

const StratumEstimate& BatteryResult::get(Estimator e) const {
  for (const auto& s : estimates)
    if (s.estimator == e) return s;
  throw DataError(fmt::format("battery has no '{}' estimate", to_string(e)));
}

StratumEstimate& BatteryResult::get(Estimator e) {
  return const_cast<StratumEstimate&>(std::as_const(*this).get(e));
}

BatteryResult run_battery(const TrialDataset& ds, const BatteryOptions& options, std::uint64_t seed) {
  BatteryResult r;
  for (int t = 0; t < 2; ++t) {
    r.models.chains[t] = fit_outcome_chain(ds, t);
    r.models.adherence[t] = fit_adherence_model(ds, t, options.irls);
  }
  MonteCarloOptions mc;
  mc.draws = options.mc_draws;
  mc.plug_in = options.plug_in;
  mc.seed = derive_seed(seed, {1});
  mc.execution = options.execution;
  const auto cq = counterfactual_quantities(ds, r.models.chains, r.models.adherence, mc);

  r.estimates.push_back(naive_adherers(ds));
  r.estimates.push_back(ace_s_star_plus(ds, cq));
  r.estimates.push_back(ace_s_plus_plus(ds, cq));
  r.estimates.push_back(hypothetical_mar(ds, r.models.chains));
  r.estimates.push_back(j2r_estimate(ds, r.models.chains[0], options.j2r_imputations, derive_seed(seed, {2})).estimate);
  r.p_plus_plus = estimate_p_plus_plus(ds, cq);
  return r;
}

std::vector<double> battery_vector(const BatteryResult& result) {
  std::vector<double> v;
  for (auto e : kAllEstimators) {
    const auto& s = result.get(e);
    v.push_back(s.mean1);
    v.push_back(s.mean0);
    v.push_back(s.diff);
  }
  v.push_back(result.p_plus_plus);
  return v;
}

}  // namespace tripartite
