// Acceptance checks: prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "tripartite/ace.hpp"
#include "tripartite/ice_engine.hpp"
#include "tripartite/ice_estimands.hpp"
#include "tripartite/regression.hpp"
#include "tripartite/report.hpp"
#include "tripartite/rng.hpp"
#include "tripartite/simulation.hpp"

using namespace tripartite;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      notes.push_back("FAILED " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// 1 ---------------------------------------------------------------------------

Outcome first_ice_counts() {
  Outcome o;
  const auto t0 = Clock::now();
  struct Row {
    IceCause cause;
    std::size_t x1, x0;
    double diff;
    const char* ci;
    double p_lo, p_hi;
  };
  const Row rows[] = {{IceCause::ae, 70, 24, 5.2, "5.2 (2.1, 8.3)", 0.0, 0.005},
                      {IceCause::loe, 18, 11, 0.3, "0.3 (-1.6, 2.2)", 0.75, 0.95},
                      {IceCause::admin, 70, 50, -0.6, nullptr, 0.70, 0.85},
                      {IceCause::any, 154, 81, 5.2, "5.2 (0.4, 10.0)", 0.03, 0.06}};
  for (const auto& r : rows) {
    const auto e = compare_proportions(r.cause, r.x1, 663, r.x0, 449, 0.05, CiMethod::wald, TestMethod::fisher);
    const std::string name(to_string(r.cause));
    o.require(std::fabs(100 * e.diff - r.diff) <= 0.05, name + " difference");
    const auto ci = format_percent_ci(e.diff, e.ci_low, e.ci_high);
    if (r.ci) {
      o.require(ci == r.ci, name + " interval " + ci);
    } else {
      o.require(std::fabs(100 * e.ci_low + 4.2) <= 0.15 && std::fabs(100 * e.ci_high - 3.2) <= 0.15,
                name + " interval " + ci);
    }
    o.require(e.p_value >= r.p_lo && e.p_value <= r.p_hi, fmt::format("{} p = {:.4f}", name, e.p_value));
    o.note(fmt::format("{} {} p={:.3f}", name, ci, e.p_value));
  }
  const double s = seconds_since(t0);
  o.require(s < 1.0, "runtime");
  o.note(fmt::format("{:.4f} s", s));
  return o;
}

// 2 and 4 ----------------------------------------------------------------------

const BenchmarkReport& hba1c_benchmark() {
  static const BenchmarkReport report = [] {
    BenchmarkOptions bo;
    bo.reps = 200;
    bo.n_grid = {4000};
    bo.seed = 20240601;
    bo.oracle_draws = 1000000;
    bo.estimators = {Estimator::s_plus_plus, Estimator::s_star_plus, Estimator::hypothetical_mar};
    return run_benchmark(hba1c_like_spec(), bo);
  }();
  return report;
}

Outcome oracle_equivalence() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto& b = hba1c_benchmark();
  const double s = seconds_since(t0);
  auto check = [&](std::string_view name, double tolerance) {
    const auto& r = b.row(4000, name);
    o.require(std::fabs(r.mean_estimate - r.truth) <= tolerance, std::string(name));
    o.require(r.failures == 0, std::string(name) + " failures");
    o.note(fmt::format("{} mean {:.4f} truth {:.4f}", name, r.mean_estimate, r.truth));
  };
  check("ace_s_plus_plus", 0.04);
  check("ace_s_star_plus", 0.03);
  check("p_plus_plus", 0.03);
  o.require(s < 600.0, "runtime");
  o.note(fmt::format("{:.1f} s", s));
  return o;
}

Outcome estimand_gap() {
  Outcome o;
  const auto& b = hba1c_benchmark();
  for (const auto& g : b.gaps) {
    o.require(g.mean_abs_gap < 0.2, "mean gap");
    o.note(fmt::format("n={} mean |MAR - S++| {:.4f} (max {:.4f})", g.n_per_arm, g.mean_abs_gap, g.max_abs_gap));
  }
  o.require(!b.gaps.empty(), "gap rows");
  return o;
}

// 3 ---------------------------------------------------------------------------

Outcome no_ice_collapse() {
  Outcome o;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto spec = no_ice_spec();
    spec.n_per_arm = 60 + 20 * seed;
    const auto ds = generate_trial(spec, seed).data;
    std::array<double, 2> sum{}, n{};
    for (const auto& s : ds.subjects) {
      o.require(s.adherent(ds.schema.d_max) && s.y.has_value(), "universal adherence");
      sum[s.treatment] += *s.y;
      n[s.treatment] += 1;
    }
    const double raw = sum[1] / n[1] - sum[0] / n[0];
    BatteryOptions bo;
    bo.mc_draws = 50;
    bo.j2r_imputations = 5;
    const auto battery = run_battery(ds, bo, seed);
    for (const auto& e : battery.estimates) worst = std::max(worst, std::fabs(e.diff - raw));
  }
  o.require(worst <= 1e-10, "collapse");
  o.note(fmt::format("max |estimate - raw difference| {:.2e} over 10 datasets", worst));
  return o;
}

// 5 ---------------------------------------------------------------------------

Outcome null_calibration() {
  Outcome o;
  const auto t0 = Clock::now();
  BenchmarkOptions bo;
  bo.reps = 200;
  bo.seed = 8675309;
  bo.oracle_draws = 100000;
  bo.bootstrap_replicates = 400;
  bo.battery.mc_draws = 20;
  bo.battery.j2r_imputations = 5;
  const auto spec = null_effect_spec();
  const auto b = run_benchmark(spec, bo);
  for (auto e : kAllEstimators) {
    const auto& r = b.row(spec.n_per_arm, to_string(e));
    o.require(std::fabs(r.mean_estimate) <= 3 * r.mc_se, fmt::format("{} mean", to_string(e)));
    o.require(r.coverage && *r.coverage >= 0.90 && *r.coverage <= 0.98, fmt::format("{} coverage", to_string(e)));
    o.note(fmt::format("{} mean {:+.4f} (MC SE {:.4f}) coverage {:.3f}", to_string(e), r.mean_estimate, r.mc_se,
                       r.coverage.value_or(-1)));
  }
  o.note(fmt::format("{:.1f} s", seconds_since(t0)));
  return o;
}

// 6 ---------------------------------------------------------------------------

double loglik(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double a, double b) {
  double l = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double eta = a + b * x[i];
    l += y[i] * eta - std::log1p(std::exp(eta));
  }
  return l;
}

std::pair<double, double> grid_mle(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  double ca = 0, cb = 0, step = 0.25;
  int half = 40;
  while (step > 1e-7) {
    double best = -1e300, ba = ca, bb = cb;
    for (int i = -half; i <= half; ++i)
      for (int j = -half; j <= half; ++j) {
        const double l = loglik(x, y, ca + i * step, cb + j * step);
        if (l > best) {
          best = l;
          ba = ca + i * step;
          bb = cb + j * step;
        }
      }
    ca = ba;
    cb = bb;
    step /= 8;
    half = 16;
  }
  return {ca, cb};
}

Outcome regression_oracles() {
  Outcome o;
  Rng rng = make_rng(31337, {});
  double ols_err = 0.0;
  for (int problem = 0; problem < 20; ++problem) {
    const int n = 25 + 7 * problem, p = 1 + problem % 5;
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) x(i, j) = standard_normal(rng) * (1 + j) + j;
      y[i] = 2.0 - x.row(i).sum() * 0.3 + standard_normal(rng);
    }
    const auto m = fit_ols(x, y);
    Eigen::MatrixXd full(n, p + 1);
    full << Eigen::VectorXd::Ones(n), x;
    const Eigen::VectorXd beta = (full.transpose() * full).ldlt().solve(full.transpose() * y);
    ols_err = std::max(ols_err, (m.coefficients - beta).cwiseAbs().maxCoeff());
  }
  o.require(ols_err <= 1e-8, "OLS vs normal equations");

  double mle_err = 0.0, score = 0.0;
  for (int problem = 0; problem < 8; ++problem) {
    const int n = 50 + 10 * problem;
    Eigen::MatrixXd x(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = standard_normal(rng) * 1.5;
      y[i] = uniform01(rng) < 1.0 / (1.0 + std::exp(-(-0.4 + 0.8 * x(i, 0))));
    }
    const auto m = fit_logistic(x, y);
    o.require(m.converged, "logistic convergence");
    const auto [a, b] = grid_mle(x.col(0), y);
    mle_err = std::max({mle_err, std::fabs(m.coefficients[0] - a), std::fabs(m.coefficients[1] - b)});
  }
  for (int problem = 0; problem < 8; ++problem) {
    const int n = 200, p = 1 + problem % 4;
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      double eta = 0.2;
      for (int j = 0; j < p; ++j) {
        x(i, j) = standard_normal(rng);
        eta += 0.5 * x(i, j) / (1 + j);
      }
      y[i] = uniform01(rng) < 1.0 / (1.0 + std::exp(-eta));
    }
    const auto m = fit_logistic(x, y);
    o.require(m.converged, "logistic convergence");
    Eigen::MatrixXd full(n, p + 1);
    full << Eigen::VectorXd::Ones(n), x;
    const Eigen::VectorXd mu = (1.0 + (-(full * m.coefficients).array()).exp()).inverse().matrix();
    score = std::max(score, (full.transpose() * (y - mu)).cwiseAbs().maxCoeff());
  }
  o.require(mle_err <= 1e-4, "logistic vs grid MLE");
  o.require(score <= 1e-6, "score equations");
  o.note(fmt::format("OLS {:.1e}, MLE {:.1e}, score {:.1e}", ols_err, mle_err, score));
  return o;
}

// 7 ---------------------------------------------------------------------------

TrialDataset affine_outcome(TrialDataset ds, double a, double b) {
  for (auto& s : ds.subjects)
    if (s.y) *s.y = a + b * *s.y;
  return ds;
}

Outcome structural_invariants() {
  Outcome o;
  Rng pick = make_rng(4242, {});
  double worst_equivariance = 0.0;
  for (int d = 0; d < 50; ++d) {
    auto spec = d % 3 == 0 ? null_effect_spec() : hba1c_like_spec();
    spec.n_per_arm = 100 + static_cast<std::size_t>(uniform01(pick) * 300);
    spec.tie_probability = 0.1 * uniform01(pick);
    spec.a5_violation = d % 5 == 0 ? uniform01(pick) : 0.0;
    const std::uint64_t seed = derive_seed(99, {static_cast<std::uint64_t>(d)});
    const auto trial = generate_trial(spec, seed);
    const auto& ds = trial.data;
    const std::string tag = fmt::format("dataset {}", d);

    const auto outcomes = derive_ice_outcomes(ds);
    std::array<double, 2> adherers{}, n{};
    for (std::size_t j = 0; j < outcomes.size(); ++j) {
      const auto& io = outcomes[j];
      o.require(io.adherent == (!io.ae && !io.loe && !io.admin), tag + " A/I consistency");
      o.require(!(io.admin && (io.ae || io.loe)), tag + " admin exclusivity");
      const int t = ds.subjects[j].treatment;
      adherers[t] += io.adherent;
      n[t] += 1;
    }
    const auto cif = cumulative_incidence(ds, outcomes, IceCause::any);
    for (int t = 0; t < 2; ++t) {
      const auto& c = cif.arms[t];
      for (std::size_t k = 1; k < c.size(); ++k)
        o.require(c[k].proportion >= c[k - 1].proportion && c[k].week >= c[k - 1].week, tag + " CIF monotone");
      o.require(!c.empty() && c.back().week == ds.schema.d_max, tag + " CIF ends at d_max");
      o.require(std::fabs(c.back().proportion - (1.0 - adherers[t] / n[t])) < 1e-12, tag + " CIF at d_max");
    }
    for (auto cause : {IceCause::ae, IceCause::loe, IceCause::admin}) {
      const auto cc = cumulative_incidence(ds, outcomes, cause);
      for (int t = 0; t < 2; ++t)
        for (std::size_t k = 1; k < cc.arms[t].size(); ++k)
          o.require(cc.arms[t][k].proportion >= cc.arms[t][k - 1].proportion, tag + " cause CIF monotone");
    }

    BatteryOptions bo;
    bo.mc_draws = 20;
    bo.j2r_imputations = 4;
    const auto battery = run_battery(ds, bo, seed);
    MonteCarloOptions mc;
    mc.draws = 20;
    mc.seed = seed;
    const auto cq = counterfactual_quantities(ds, battery.models.chains, battery.models.adherence, mc);
    for (const auto& h : cq.h)
      for (double v : h) o.require(v >= 0.0 && v <= 1.0, tag + " h in [0,1]");
    const double pp = estimate_p_plus_plus(ds, cq);
    o.require(pp >= 0.0 && pp <= 1.0 && battery.p_plus_plus >= 0.0 && battery.p_plus_plus <= 1.0,
              tag + " p++ in [0,1]");

    const double a = -3.0 + 6.0 * uniform01(pick), b = 0.5 + 3.0 * uniform01(pick);
    const auto moved = run_battery(affine_outcome(ds, a, b), bo, seed);
    for (std::size_t i = 0; i < battery.estimates.size(); ++i) {
      const auto& e = battery.estimates[i];
      const auto& m = moved.estimates[i];
      const double scale = 1.0 + std::fabs(a) + b * (std::fabs(e.mean1) + std::fabs(e.mean0));
      const double err = std::max({std::fabs(m.mean1 - (a + b * e.mean1)), std::fabs(m.mean0 - (a + b * e.mean0)),
                                   std::fabs(m.diff - b * e.diff)}) /
                         scale;
      worst_equivariance = std::max(worst_equivariance, err);
    }
    o.require(moved.p_plus_plus == battery.p_plus_plus, tag + " p++ unaffected by outcome scale");

    const auto again = generate_trial(spec, seed);
    std::ostringstream first, second;
    write_dataset(first, ds);
    write_dataset(second, again.data);
    o.require(first.str() == second.str(), tag + " dataset rerun");
    const auto rerun = run_battery(again.data, bo, seed);
    o.require(estimates_csv(EstimateSet::from(rerun)).render_csv() ==
                  estimates_csv(EstimateSet::from(battery)).render_csv(),
              tag + " battery rerun");
  }
  o.require(worst_equivariance < 1e-9, "location/scale equivariance");
  o.note(fmt::format("50 datasets; worst relative equivariance error {:.1e}", worst_equivariance));
  return o;
}

// 8 ---------------------------------------------------------------------------

Outcome assumption_construction() {
  Outcome o;
  auto spec = hba1c_like_spec();
  spec.n_per_arm = 50000;
  spec.tie_probability = 0.05;
  const auto trial = generate_trial(spec, 1618);
  const auto& ds = trial.data;
  std::size_t mismatched = 0;
  for (std::size_t j = 0; j < ds.subjects.size(); ++j) {
    const auto& s = ds.subjects[j];
    const auto& p = trial.truth.subjects[j];
    const auto& a = p.arm[s.treatment];
    bool ok = s.treatment == p.treatment && s.x == p.x && s.adherent(ds.schema.d_max) == a.adherent;
    ok = ok && (a.adherent ? (s.y && *s.y == a.y) : !s.y);
    const EventTime first = s.earliest_event();
    ok = ok && (a.adherent ? first.is_none() || first.weeks() > ds.schema.d_max : first.weeks() == a.first_ice_week);
    for (std::size_t k = 0; k < spec.visits.size(); ++k)
      ok = ok && (a.first_ice_week > spec.visits[k].week ? (s.z[k] && *s.z[k] == a.z[k]) : !s.z[k]);
    mismatched += !ok;
  }
  o.require(ds.subjects.size() == 100000, "subject count");
  o.require(mismatched == 0, fmt::format("{} subjects mismatched", mismatched));
  o.require(validate_dataset(ds).clean(), "dataset invariants");
  o.note(fmt::format("{} subjects, {} mismatched", ds.subjects.size(), mismatched));
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"first-ICE differences on the reference counts", first_ice_counts},
      {"oracle equivalence on the HbA1c-like spec", oracle_equivalence},
      {"no-ICE collapse", no_ice_collapse},
      {"MAR vs S++ estimand gap", estimand_gap},
      {"null calibration", null_calibration},
      {"regression oracles", regression_oracles},
      {"structural invariants", structural_invariants},
      {"observed equals potential at the assigned arm", assumption_construction},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::string detail;
    for (const auto& n : o.notes) detail += (detail.empty() ? "" : "; ") + n;
    fmt::print("{} {}. {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, detail);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
