#include "tripartite/simulation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "tripartite/inference.hpp"

namespace tripartite {

namespace {

double expit(double v) { return 1.0 / (1.0 + std::exp(-v)); }

LinearSpec lin(double intercept, std::vector<double> x, std::vector<double> z = {}, double sd = 0.0) {
  return LinearSpec{intercept, std::move(x), std::move(z), sd};
}

}  // namespace

void SimulationSpec::check() const {
  if (n_per_arm < 1) throw DataError("simulation: n_per_arm must be positive");
  schema().check();
  const std::size_t K = visits.size();
  const std::size_t p = baseline.size();
  for (const auto& b : baseline)
    if (!(b.sd >= 0.0)) throw DataError(fmt::format("simulation: baseline '{}' has negative sd", b.name));
  auto check_lin = [&](const LinearSpec& l, std::size_t max_z, const std::string& what) {
    if (l.x_coef.size() > p) throw DataError(fmt::format("simulation: {} has too many X coefficients", what));
    if (l.z_coef.size() > max_z) throw DataError(fmt::format("simulation: {} has too many Z coefficients", what));
    if (!(l.sd >= 0.0)) throw DataError(fmt::format("simulation: {} has negative residual sd", what));
  };
  for (int t = 0; t < 2; ++t) {
    const auto& a = arms[t];
    if (a.z.size() != K) throw DataError(fmt::format("simulation: arm {} needs {} intermediate models", t, K));
    if (a.adherence.size() != K + 1)
      throw DataError(fmt::format("simulation: arm {} needs {} adherence intervals", t, K + 1));
    for (std::size_t k = 0; k < K; ++k) check_lin(a.z[k], k, fmt::format("arm {} z{}", t, k + 1));
    check_lin(a.y, K, fmt::format("arm {} y", t));
    for (std::size_t k = 0; k <= K; ++k) check_lin(a.adherence[k], k, fmt::format("arm {} adherence interval {}", t, k));
  }
  check_lin(admin, 0, "admin");
  if (!(tie_probability >= 0.0 && tie_probability <= 1.0)) throw DataError("simulation: tie_probability outside [0,1]");
}

CovariateSchema SimulationSpec::schema() const {
  CovariateSchema s;
  for (const auto& b : baseline) s.covariates.push_back({b.name, CovariateKind::continuous, {}});
  s.visits = visits;
  s.d_max = d_max;
  return s;
}

// Presets ----------------------------------------------------------------------

// Shift of the arm-1 outcome intercept that puts the S++ effect of the
// HbA1c-like fixture at -0.25 (from a 4e6-draw oracle run).
constexpr double kHba1cArm1Shift = -0.1387;

SimulationSpec hba1c_like_spec() {
  SimulationSpec s;
  s.name = "hba1c";
  s.n_per_arm = 4000;
  s.baseline = {{"age", 45.0, 13.0}, {"weight", 78.0, 15.0}, {"hba1c", 7.8, 0.9}, {"ldlc", 2.6, 0.8},
                {"tg", 1.2, 0.6},    {"fsg", 9.0, 3.0},     {"alt", 22.0, 8.0}};
  s.visits = {{"w12", 12.0}, {"w26", 26.0}};
  s.d_max = 52.0;
  for (int t = 0; t < 2; ++t) {
    auto& a = s.arms[t];
    const double on = t;
    a.z = {lin(7.60 - 0.12 * on, {-0.04, 0.03, 0.55, 0.0, 0.02, 0.08, 0.0}, {}, 0.50),
           lin(2.838 - 0.08 * on, {0.0, 0.0, 0.15, 0.0, 0.0, 0.03, 0.0}, {0.62}, 0.42)};
    a.y = lin(1.51 + on * kHba1cArm1Shift, {0.0, 0.0, 0.08, 0.0, 0.02, 0.0, 0.0}, {0.35, 0.45}, 0.45);
    a.adherence = {lin(2.9 - 0.55 * on, {0.15, -0.05}),
                   lin(5.96 - 0.25 * on, {0.10}, {-0.35}),
                   lin(5.6425 - 0.20 * on, {0.10}, {0.0, -0.35})};
    a.loe_intercept = -2.2;
    a.loe_z_slope = 1.2;
    a.loe_z_center = 7.6;
  }
  s.admin = lin(-3.317, {-0.15});
  s.tie_probability = 0.03;
  return s;
}

SimulationSpec null_effect_spec() {
  SimulationSpec s;
  s.name = "null";
  s.n_per_arm = 150;
  s.baseline = {{"age", 45.0, 13.0}, {"hba1c", 7.8, 0.9}};
  s.visits = {{"w12", 12.0}, {"w26", 26.0}};
  s.d_max = 52.0;
  for (auto& a : s.arms) {
    a.z = {lin(7.6, {-0.05, 0.55}, {}, 0.5), lin(2.8, {0.0, 0.15}, {0.62}, 0.42)};
    a.y = lin(1.5, {0.0, 0.08}, {0.35, 0.45}, 0.45);
    // Adherence depends on X only, so every adherence stratum has a zero effect.
    a.adherence = {lin(2.4, {0.3, -0.2}), lin(2.8, {0.0, -0.3}), lin(2.6, {0.2})};
    a.loe_intercept = -1.5;
    a.loe_z_slope = 1.0;
    a.loe_z_center = 7.6;
  }
  s.admin = lin(-3.5, {-0.1});
  s.tie_probability = 0.03;
  return s;
}

SimulationSpec no_ice_spec() {
  SimulationSpec s;
  s.name = "no_ice";
  s.n_per_arm = 150;
  s.visits = {{"w12", 12.0}, {"w26", 26.0}};
  s.d_max = 52.0;
  for (int t = 0; t < 2; ++t) {
    auto& a = s.arms[t];
    a.z = {lin(7.6 - 0.1 * t, {}, {}, 0.5), lin(2.8, {}, {0.62}, 0.42)};
    a.y = lin(1.5 + 0.5 * t, {}, {0.35, 0.45}, 0.45);
    a.adherence = {lin(50.0, {}), lin(50.0, {}), lin(50.0, {})};
  }
  s.admin = lin(-50.0, {});
  return s;
}

SimulationSpec preset_spec(const std::string& name) {
  if (name == "hba1c") return hba1c_like_spec();
  if (name == "null") return null_effect_spec();
  if (name == "no_ice") return no_ice_spec();
  throw DataError(fmt::format("unknown simulation preset '{}' (expected hba1c, null, no_ice)", name));
}

// Generation -------------------------------------------------------------------

namespace {

PotentialArm draw_arm(const SimulationSpec& spec, int t, std::span<const double> xs, Rng& rng) {
  const auto& arm = spec.arms[t];
  const std::size_t K = spec.visits.size();
  PotentialArm a;
  a.z.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) a.z[k] = arm.z[k].eval(xs, a.z) + arm.z[k].sd * standard_normal(rng);
  const double eps = standard_normal(rng);
  a.y = arm.y.eval(xs, a.z) + arm.y.sd * eps;

  const double p_admin = expit(spec.admin.eval(xs, {}));
  for (std::size_t k = 0; k <= K; ++k) {
    const double start = k == 0 ? 0.0 : spec.visits[k - 1].week;
    const double end = k < K ? spec.visits[k].week : spec.d_max;
    double eta = arm.adherence[k].eval(xs, a.z);
    if (k == K) eta += spec.a5_violation * arm.y.sd * eps;
    const double p_stay = expit(eta);
    double u[6];
    for (double& v : u) v = uniform01(rng);
    const bool clinical = u[0] >= p_stay;
    const bool administrative = u[1] < p_admin;
    if (!clinical && !administrative) continue;
    // (1 - u) lies in (0, 1], so event times fall in (start, end].
    const double t_clinical = start + (1.0 - u[2]) * (end - start);
    const double t_admin = start + (1.0 - u[3]) * (end - start);
    a.adherent = false;
    if (clinical && (!administrative || t_clinical <= t_admin)) {
      a.first_ice_week = t_clinical;
      const double latest = k == 0 ? arm.loe_z_center : a.z[k - 1];
      const double p_loe = expit(arm.loe_intercept + arm.loe_z_slope * (latest - arm.loe_z_center));
      if (u[4] < spec.tie_probability) a.cause = FirstIce::ae_and_loe;
      else a.cause = u[5] < p_loe ? FirstIce::loe : FirstIce::ae;
    } else {
      a.first_ice_week = t_admin;
      a.cause = FirstIce::admin;
    }
    break;
  }
  return a;
}

}  // namespace

SubjectPotentials draw_subject(const SimulationSpec& spec, Rng& rng) {
  SubjectPotentials p;
  std::vector<double> xs(spec.baseline.size());
  p.x.resize(spec.baseline.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = standard_normal(rng);
    p.x[i] = spec.baseline[i].mean + spec.baseline[i].sd * xs[i];
  }
  for (int t = 0; t < 2; ++t) p.arm[t] = draw_arm(spec, t, xs, rng);
  return p;
}

SubjectRecord reveal(const SimulationSpec& spec, const SubjectPotentials& p, std::string id) {
  const auto& a = p.arm[p.treatment];
  SubjectRecord r;
  r.id = std::move(id);
  r.treatment = p.treatment;
  r.x = p.x;
  for (std::size_t k = 0; k < spec.visits.size(); ++k) {
    if (a.first_ice_week > spec.visits[k].week) r.z.emplace_back(a.z[k]);
    else r.z.emplace_back(std::nullopt);
  }
  if (a.adherent) r.y = a.y;
  const auto when = EventTime::at(a.first_ice_week);
  auto& ev = r.evidence;
  switch (a.cause) {
    case FirstIce::none:
      ev.recorded_reason = DispositionReason::completed;
      break;
    case FirstIce::ae:
      r.d_ae = when;
      ev.recorded_reason = DispositionReason::adverse_event;
      ev.ae_flag = true;
      break;
    case FirstIce::loe:
      r.d_loe = when;
      ev.recorded_reason = DispositionReason::physician_decision;
      ev.efficacy_no_improvement_flag = true;
      break;
    case FirstIce::ae_and_loe:
      r.d_ae = when;
      r.d_loe = when;
      ev.recorded_reason = DispositionReason::adverse_event;
      ev.ae_flag = true;
      ev.efficacy_no_improvement_flag = true;
      break;
    case FirstIce::admin:
      r.d_admin = when;
      ev.recorded_reason = DispositionReason::withdrawal_by_subject;
      break;
  }
  return r;
}

SimulatedTrial generate_trial(const SimulationSpec& spec, std::uint64_t seed, Execution execution) {
  spec.check();
  const std::size_t n = 2 * spec.n_per_arm;
  std::vector<SubjectPotentials> pots(n);
  auto body = [&](std::size_t j) {
    Rng rng = make_rng(seed, {j});
    pots[j] = draw_subject(spec, rng);
  };
  const auto count = static_cast<long>(n);
  if (execution == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (long j = 0; j < count; ++j) body(static_cast<std::size_t>(j));
  } else {
    for (long j = 0; j < count; ++j) body(static_cast<std::size_t>(j));
  }

  // Randomization: exactly n_per_arm per arm, independent of potentials.
  std::vector<int> arms(n, 0);
  std::fill(arms.begin(), arms.begin() + static_cast<long>(spec.n_per_arm), 1);
  Rng shuffle = make_rng(seed, {~0ULL});
  for (std::size_t i = n; i > 1; --i) {
    const auto k = std::min(static_cast<std::size_t>(uniform01(shuffle) * static_cast<double>(i)), i - 1);
    std::swap(arms[i - 1], arms[k]);
  }

  SimulatedTrial out;
  std::vector<SubjectRecord> subjects;
  subjects.reserve(n);
  double all = 0.0, star_plus = 0.0, plus_plus = 0.0;
  std::size_t n_star_plus = 0, n_plus_plus = 0;
  for (std::size_t j = 0; j < n; ++j) {
    pots[j].treatment = arms[j];
    subjects.push_back(reveal(spec, pots[j], fmt::format("s{:05d}", j + 1)));
    const auto& p = pots[j];
    const double d = p.arm[1].y - p.arm[0].y;
    all += d;
    if (p.arm[1].adherent) {
      star_plus += d;
      ++n_star_plus;
      if (p.arm[0].adherent) {
        plus_plus += d;
        ++n_plus_plus;
      }
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  out.truth.s_star_star = all / static_cast<double>(n);
  out.truth.s_star_plus = n_star_plus ? star_plus / static_cast<double>(n_star_plus) : nan;
  out.truth.s_plus_plus = n_plus_plus ? plus_plus / static_cast<double>(n_plus_plus) : nan;
  out.truth.p_plus_plus = static_cast<double>(n_plus_plus) / static_cast<double>(n);
  out.truth.subjects = std::move(pots);
  out.data = TrialDataset::from_subjects(spec.schema(), std::move(subjects));
  return out;
}

// Oracle -----------------------------------------------------------------------

namespace {

struct Moments {
  double n = 0.0, sum = 0.0, sum2 = 0.0;
  void add(double v) {
    n += 1.0;
    sum += v;
    sum2 += v * v;
  }
  void merge(const Moments& o) {
    n += o.n;
    sum += o.sum;
    sum2 += o.sum2;
  }
  double mean() const { return sum / n; }
  double var() const { return n > 1 ? std::max(0.0, (sum2 - sum * sum / n) / (n - 1.0)) : 0.0; }
};

struct OracleAccumulator {
  Moments all, star_plus, plus_plus, y1_adherent, y0_adherent;
  void merge(const OracleAccumulator& o) {
    all.merge(o.all);
    star_plus.merge(o.star_plus);
    plus_plus.merge(o.plus_plus);
    y1_adherent.merge(o.y1_adherent);
    y0_adherent.merge(o.y0_adherent);
  }
};

}  // namespace

double OracleTruth::for_estimator(Estimator e) const {
  switch (e) {
    case Estimator::naive: return naive;
    case Estimator::s_star_plus: return s_star_plus;
    case Estimator::s_plus_plus: return s_plus_plus;
    case Estimator::hypothetical_mar:
    case Estimator::j2r: return s_star_star;
  }
  return 0.0;
}

double OracleTruth::se_for_estimator(Estimator e) const {
  switch (e) {
    case Estimator::naive: return se_naive;
    case Estimator::s_star_plus: return se_s_star_plus;
    case Estimator::s_plus_plus: return se_s_plus_plus;
    case Estimator::hypothetical_mar:
    case Estimator::j2r: return se_s_star_star;
  }
  return 0.0;
}

OracleTruth oracle_truth(const SimulationSpec& spec, std::size_t draws, std::uint64_t seed, Execution execution) {
  spec.check();
  if (draws < 100000) throw DataError(fmt::format("oracle_truth needs at least 1e5 draws, got {}", draws));
  constexpr std::size_t kChunk = 8192;
  const std::size_t chunks = (draws + kChunk - 1) / kChunk;
  std::vector<OracleAccumulator> partial(chunks);
  auto body = [&](std::size_t c) {
    auto& acc = partial[c];
    const std::size_t end = std::min(draws, (c + 1) * kChunk);
    for (std::size_t j = c * kChunk; j < end; ++j) {
      Rng rng = make_rng(seed, {j});
      const auto p = draw_subject(spec, rng);
      const double d = p.arm[1].y - p.arm[0].y;
      acc.all.add(d);
      if (p.arm[1].adherent) {
        acc.star_plus.add(d);
        acc.y1_adherent.add(p.arm[1].y);
        if (p.arm[0].adherent) acc.plus_plus.add(d);
      }
      if (p.arm[0].adherent) acc.y0_adherent.add(p.arm[0].y);
    }
  };
  const auto count = static_cast<long>(chunks);
  if (execution == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (long c = 0; c < count; ++c) body(static_cast<std::size_t>(c));
  } else {
    for (long c = 0; c < count; ++c) body(static_cast<std::size_t>(c));
  }
  OracleAccumulator acc;
  for (const auto& p : partial) acc.merge(p);

  const auto n = static_cast<double>(draws);
  auto check_prob = [&](double count_in, const char* what) {
    if (count_in / n < 1e-3)
      throw DataError(fmt::format("oracle: stratum {} has probability {} < 1e-3; truth unreliable", what, count_in / n));
  };
  check_prob(acc.star_plus.n, "A(1)=1");
  check_prob(acc.plus_plus.n, "A(0)=A(1)=1");
  check_prob(acc.y0_adherent.n, "A(0)=1");

  OracleTruth o;
  o.draws = draws;
  o.s_star_star = acc.all.mean();
  o.se_s_star_star = std::sqrt(acc.all.var() / acc.all.n);
  o.s_star_plus = acc.star_plus.mean();
  o.se_s_star_plus = std::sqrt(acc.star_plus.var() / acc.star_plus.n);
  o.s_plus_plus = acc.plus_plus.mean();
  o.se_s_plus_plus = std::sqrt(acc.plus_plus.var() / acc.plus_plus.n);
  o.naive = acc.y1_adherent.mean() - acc.y0_adherent.mean();
  o.se_naive = std::sqrt(acc.y1_adherent.var() / acc.y1_adherent.n + acc.y0_adherent.var() / acc.y0_adherent.n);
  o.p_plus_plus = acc.plus_plus.n / n;
  o.se_p_plus_plus = std::sqrt(o.p_plus_plus * (1.0 - o.p_plus_plus) / n);
  o.p_adhere1 = acc.star_plus.n / n;
  o.p_adhere0 = acc.y0_adherent.n / n;
  return o;
}

// Benchmark --------------------------------------------------------------------

const BenchmarkRow& BenchmarkReport::row(std::size_t n, std::string_view estimator) const {
  for (const auto& r : rows)
    if (r.n_per_arm == n && r.estimator == estimator) return r;
  throw DataError(fmt::format("benchmark report has no row for n={} estimator={}", n, estimator));
}

BenchmarkReport run_benchmark(const SimulationSpec& base, const BenchmarkOptions& options) {
  if (options.reps < 50) throw DataError(fmt::format("benchmark needs at least 50 reps, got {}", options.reps));
  base.check();
  BenchmarkReport report;
  report.truth = oracle_truth(base, options.oracle_draws, derive_seed(options.seed, {0x0ac1e}), options.execution);

  const auto grid = options.n_grid.empty() ? std::vector<std::size_t>{base.n_per_arm} : options.n_grid;
  const bool coverage = options.bootstrap_replicates > 0;

  struct RepOutcome {
    bool ok = false;
    std::string error;
    std::vector<double> estimate;  // per estimator diff, then p++
    std::vector<double> low, high;
  };
  const std::size_t E = options.estimators.size();

  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    SimulationSpec spec = base;
    spec.n_per_arm = grid[gi];
    std::vector<RepOutcome> outcomes(static_cast<std::size_t>(options.reps));

    BatteryOptions inner = options.battery;
    if (options.execution == Execution::parallel) inner.execution = Execution::serial;

    auto one = [&](std::size_t r) {
      auto& out = outcomes[r];
      try {
        const std::uint64_t rep_seed = derive_seed(options.seed, {gi, r});
        const auto trial = generate_trial(spec, derive_seed(rep_seed, {0}), Execution::serial);
        auto battery = run_battery(trial.data, inner, derive_seed(rep_seed, {1}));
        if (coverage) {
          BootstrapOptions bo;
          bo.replicates = options.bootstrap_replicates;
          bo.alpha = options.alpha;
          bo.seed = derive_seed(rep_seed, {2});
          bo.execution = Execution::serial;
          bootstrap_battery(trial.data, battery, inner, bo);
        }
        for (auto e : options.estimators) {
          const auto& est = battery.get(e);
          out.estimate.push_back(est.diff);
          out.low.push_back(est.ci_low.value_or(0.0));
          out.high.push_back(est.ci_high.value_or(0.0));
        }
        out.estimate.push_back(battery.p_plus_plus);
        out.low.push_back(battery.p_plus_plus_ci ? battery.p_plus_plus_ci->first : 0.0);
        out.high.push_back(battery.p_plus_plus_ci ? battery.p_plus_plus_ci->second : 0.0);
        // The estimand gap needs MAR and S++ regardless of the chosen set.
        out.estimate.push_back(battery.get(Estimator::hypothetical_mar).diff - battery.get(Estimator::s_plus_plus).diff);
        out.ok = true;
      } catch (const std::exception& e) {
        out.error = e.what();
      }
    };
    const auto count = static_cast<long>(options.reps);
    if (options.execution == Execution::parallel) {
#pragma omp parallel for schedule(dynamic)
      for (long r = 0; r < count; ++r) one(static_cast<std::size_t>(r));
    } else {
      for (long r = 0; r < count; ++r) one(static_cast<std::size_t>(r));
    }

    int failures = 0;
    for (const auto& o : outcomes) {
      if (!o.ok) {
        ++failures;
        if (std::find(report.failure_reasons.begin(), report.failure_reasons.end(), o.error) ==
            report.failure_reasons.end())
          report.failure_reasons.push_back(o.error);
      }
    }

    for (std::size_t c = 0; c <= E; ++c) {
      BenchmarkRow row;
      row.n_per_arm = grid[gi];
      if (c < E) {
        row.estimator = std::string(to_string(options.estimators[c]));
        row.target = std::string(target_stratum(options.estimators[c]));
        row.truth = report.truth.for_estimator(options.estimators[c]);
      } else {
        row.estimator = "p_plus_plus";
        row.target = "P(S++)";
        row.truth = report.truth.p_plus_plus;
      }
      Moments m;
      int covered = 0;
      for (const auto& o : outcomes) {
        if (!o.ok) continue;
        m.add(o.estimate[c]);
        covered += o.low[c] <= row.truth && row.truth <= o.high[c];
      }
      row.successes = static_cast<int>(m.n);
      row.failures = failures;
      if (m.n > 0) {
        row.mean_estimate = m.mean();
        row.bias = row.mean_estimate - row.truth;
        row.sd = std::sqrt(m.var());
        row.mc_se = row.sd / std::sqrt(m.n);
        if (coverage) row.coverage = covered / m.n;
      }
      report.rows.push_back(row);
    }

    EstimandGap gap;
    gap.n_per_arm = grid[gi];
    double n_ok = 0.0;
    for (const auto& o : outcomes) {
      if (!o.ok) continue;
      const double g = std::fabs(o.estimate.back());
      gap.mean_abs_gap += g;
      gap.max_abs_gap = std::max(gap.max_abs_gap, g);
      n_ok += 1.0;
    }
    if (n_ok > 0) gap.mean_abs_gap /= n_ok;
    report.gaps.push_back(gap);
  }
  return report;
}

}  // namespace tripartite
