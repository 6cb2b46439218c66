#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "tripartite/ace.hpp"
#include "tripartite/simulation.hpp"

using namespace tripartite;
using namespace tripartite::testing;

namespace {

double expit(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// No ICEs, Y = T + X exactly, with one noisy intermediate.
TrialDataset noiseless_no_ice(int n) {
  auto schema = schema_with(1, {{"w12", 12.0}});
  std::vector<SubjectRecord> s;
  Rng rng = make_rng(4, {});
  double x = 0.0;
  for (int i = 0; i < n; ++i) {
    const int t = i % 2;
    if (t == 0) x = standard_normal(rng);  // same covariate values in both arms
    s.push_back(completer("s" + std::to_string(i), t, {x}, {x + standard_normal(rng)}, t + x));
  }
  return TrialDataset::from_subjects(schema, s);
}

struct Fitted {
  std::array<OutcomeChain, 2> chains;
  std::array<AdherenceModel, 2> adherence;
};

Fitted fit(const TrialDataset& ds) {
  Fitted f;
  for (int t = 0; t < 2; ++t) {
    f.chains[t] = fit_outcome_chain(ds, t);
    f.adherence[t] = fit_adherence_model(ds, t);
  }
  return f;
}

SimulationSpec standardized_spec() {
  auto spec = hba1c_like_spec();
  for (auto& b : spec.baseline) b = {b.name, 0.0, 1.0};
  return spec;
}

}  // namespace

TEST_CASE("adherence model when everyone adheres") {
  const auto ds = noiseless_no_ice(40);
  const auto m = fit_adherence_model(ds, 1);
  REQUIRE(m.intervals.size() == 2);
  for (const auto& iv : m.intervals) CHECK(iv.constant_probability == 1.0);
  const double x = 0.3, z = 1.0;
  CHECK(m.probability(std::span<const double>(&x, 1), std::span<const double>(&z, 1)) == 1.0);
}

TEST_CASE("adherence model multiplies interval rates") {
  auto schema = schema_with(0, {{"w12", 12.0}});
  std::vector<SubjectRecord> s;
  for (int i = 0; i < 100; ++i) {
    if (i < 10) {
      s.push_back(ae_dropout("s" + std::to_string(i), 1, {}, 1, 6.0));
    } else if (i < 28) {
      auto r = ae_dropout("s" + std::to_string(i), 1, {}, 1, 30.0);
      r.z[0] = 7.0 + i % 2;
      s.push_back(r);
    } else {
      s.push_back(completer("s" + std::to_string(i), 1, {}, {7.0 + i % 2}, 6.0));
    }
  }
  s.push_back(completer("c", 0, {}, {7.0}, 6.0));
  const auto m = fit_adherence_model(TrialDataset::from_subjects(schema, s), 1);
  CHECK(m.intervals[0].at_risk == 100);
  CHECK(m.intervals[1].at_risk == 90);
  // Z_1 is balanced between events and non-events, so its slope is zero.
  CHECK(m.intervals[0].probability({}, {}) == doctest::Approx(0.9).epsilon(1e-9));
  for (double z : {7.0, 7.5, 9.0}) CHECK(m.probability({}, std::span<const double>(&z, 1)) == doctest::Approx(0.72).epsilon(1e-8));
}

TEST_CASE("adherence coefficients are recovered from simulated data") {
  auto spec = standardized_spec();
  spec.n_per_arm = 4000;
  spec.admin = {-50.0, {}, {}, 0.0};
  spec.arms[1].adherence[0] = {1.0, {0.5, -0.3}, {}, 0.0};
  const auto ds = generate_trial(spec, 13).data;
  const auto m = fit_adherence_model(ds, 1);
  const auto& c = m.intervals[0].model.coefficients;
  CHECK(std::fabs(c[0] - 1.0) < 0.1);
  CHECK(std::fabs(c[1] - 0.5) < 0.1);
  CHECK(std::fabs(c[2] + 0.3) < 0.1);
  for (Eigen::Index j = 3; j < c.size(); ++j) CHECK(std::fabs(c[j]) < 0.1);
}

TEST_CASE("counterfactual quantities reduce when adherence is certain") {
  const auto ds = noiseless_no_ice(60);
  const auto f = fit(ds);
  MonteCarloOptions mc;
  mc.draws = 50;
  mc.seed = 1;
  const auto cq = counterfactual_quantities(ds, f.chains, f.adherence, mc);
  for (std::size_t j = 0; j < ds.subjects.size(); ++j)
    for (int t = 0; t < 2; ++t) {
      CHECK(cq.h[j][t] == 1.0);
      CHECK(cq.varphi[j][t] == cq.phi[j][t]);
    }
  CHECK(estimate_p_plus_plus(ds, cq) == 1.0);
  // With h == 1, mean1 of S++ is the average of phi_1 over arm-0 adherers.
  double sum = 0;
  int n = 0;
  for (std::size_t j = 0; j < ds.subjects.size(); ++j)
    if (ds.subjects[j].treatment == 0) {
      sum += cq.phi[j][1];
      ++n;
    }
  CHECK(ace_s_plus_plus(ds, cq).mean1 == doctest::Approx(sum / n).epsilon(1e-13));
}

TEST_CASE("no-ICE noiseless data give the exact effect") {
  const auto ds = noiseless_no_ice(80);
  const auto f = fit(ds);
  MonteCarloOptions mc;
  mc.seed = 2;
  const auto cq = counterfactual_quantities(ds, f.chains, f.adherence, mc);
  CHECK(ace_s_star_plus(ds, cq).diff == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(ace_s_plus_plus(ds, cq).diff == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(hypothetical_mar(ds, f.chains).diff == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("zero residual SD collapses Monte Carlo to the plug-in") {
  auto spec = hba1c_like_spec();
  spec.n_per_arm = 300;
  const auto ds = generate_trial(spec, 17).data;
  auto f = fit(ds);
  for (auto& chain : f.chains)
    for (auto& z : chain.z_models) z.residual_sd = 0.0;
  MonteCarloOptions mc;
  mc.draws = 20;
  mc.seed = 3;
  const auto cq = counterfactual_quantities(ds, f.chains, f.adherence, mc);
  mc.plug_in = true;
  const auto plug = counterfactual_quantities(ds, f.chains, f.adherence, mc);
  for (std::size_t j = 0; j < ds.subjects.size(); ++j)
    for (int t = 0; t < 2; ++t) {
      CHECK(cq.h[j][t] == doctest::Approx(plug.h[j][t]).epsilon(1e-14));
      CHECK(cq.varphi[j][t] == doctest::Approx(plug.varphi[j][t]).epsilon(1e-12));
    }
}

TEST_CASE("Monte Carlo h agrees with an independent high-precision integral") {
  auto spec = hba1c_like_spec();
  spec.n_per_arm = 500;
  const auto ds = generate_trial(spec, 23).data;
  const auto f = fit(ds);
  const TrialDataset one = TrialDataset::from_subjects(ds.schema, {ds.subjects[0]});
  MonteCarloOptions mc;
  mc.draws = 100000;
  mc.seed = 9;
  const auto cq = counterfactual_quantities(one, f.chains, f.adherence, mc);

  // Oracle: standard-library normal draws through hand-evaluated models.
  const auto x = baseline_design(ds.schema, ds.subjects[0]);
  std::mt19937_64 gen(123456);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 2; ++t) {
    const auto& ch = f.chains[t];
    double sum = 0;
    const int draws = 1000000;
    for (int d = 0; d < draws; ++d) {
      double z1 = ch.z_models[0].coefficients[0], z2 = ch.z_models[1].coefficients[0];
      for (std::size_t i = 0; i < x.size(); ++i) z1 += ch.z_models[0].coefficients[i + 1] * x[i];
      z1 += ch.z_models[0].residual_sd * normal(gen);
      for (std::size_t i = 0; i < x.size(); ++i) z2 += ch.z_models[1].coefficients[i + 1] * x[i];
      z2 += ch.z_models[1].coefficients[x.size() + 1] * z1 + ch.z_models[1].residual_sd * normal(gen);
      const double zz[2] = {z1, z2};
      double p = 1;
      for (std::size_t k = 0; k < 3; ++k) {
        const auto& iv = f.adherence[t].intervals[k];
        const auto& c = iv.model.coefficients;
        double eta = c[0];
        for (std::size_t i = 0; i < x.size(); ++i) eta += c[i + 1] * x[i];
        for (std::size_t i = 0; i < k; ++i) eta += c[x.size() + 1 + i] * zz[i];
        p *= expit(eta);
      }
      sum += p;
    }
    CHECK(std::fabs(cq.h[0][t] - sum / draws) < 0.005);
  }
}

TEST_CASE("serial and parallel kernels are bit-identical") {
  auto spec = hba1c_like_spec();
  spec.n_per_arm = 400;
  const auto ds = generate_trial(spec, 31).data;
  const auto f = fit(ds);
  MonteCarloOptions mc;
  mc.draws = 30;
  mc.seed = 5;
  mc.execution = Execution::serial;
  const auto serial = counterfactual_quantities(ds, f.chains, f.adherence, mc);
  omp_set_num_threads(4);
  mc.execution = Execution::parallel;
  const auto parallel = counterfactual_quantities(ds, f.chains, f.adherence, mc);
  CHECK(serial.phi == parallel.phi);
  CHECK(serial.h == parallel.h);
  CHECK(serial.varphi == parallel.varphi);
}

TEST_CASE("p++ with constant adherence weights") {
  const auto ds = noiseless_no_ice(30);
  CounterfactualQuantities cq;
  cq.phi.assign(30, {0.0, 0.0});
  cq.h.assign(30, {0.4, 0.4});
  cq.varphi = cq.phi;
  CHECK(estimate_p_plus_plus(ds, cq) == doctest::Approx(0.4 * (ds.counts.n11 + ds.counts.n01) / 30.0).epsilon(1e-14));
}

TEST_CASE("naive adherer contrast") {
  auto schema = schema_with(0);
  std::vector<SubjectRecord> s{completer("a", 1, {}, {}, 7.30), completer("b", 1, {}, {}, 7.38),
                               completer("c", 0, {}, {}, 7.57), ae_dropout("d", 0, {}, 0, 5.0)};
  const auto e = naive_adherers(TrialDataset::from_subjects(schema, s));
  CHECK(e.mean1 == doctest::Approx(7.34));
  CHECK(e.diff == doctest::Approx(-0.23).epsilon(1e-12));
}

TEST_CASE("identical arms give a zero hypothetical effect") {
  auto spec = null_effect_spec();
  spec.n_per_arm = 200;
  const auto base = generate_trial(spec, 41).data;
  std::vector<SubjectRecord> mirrored;
  for (const auto& s : base.subjects) {
    if (s.treatment != 0) continue;
    auto copy = s;
    copy.id += "_twin";
    copy.treatment = 1;
    mirrored.push_back(s);
    mirrored.push_back(copy);
  }
  const auto ds = TrialDataset::from_subjects(base.schema, mirrored);
  const auto f = fit(ds);
  CHECK(std::fabs(hypothetical_mar(ds, f.chains).diff) < 1e-12);
}

TEST_CASE("J2R without missing outcomes and under full arm-1 dropout") {
  const auto full = noiseless_no_ice(40);
  const auto f = fit(full);
  const auto j = j2r_estimate(full, f.chains[0], 5, 1);
  CHECK(j.estimate.diff == doctest::Approx(naive_adherers(full).diff).epsilon(1e-13));
  for (double d : j.diffs) CHECK(d == j.diffs.front());

  auto schema = schema_with(0);
  std::vector<SubjectRecord> s;
  Rng rng = make_rng(8, {});
  for (int i = 0; i < 400; ++i) {
    if (i % 2) s.push_back(ae_dropout("s" + std::to_string(i), 1, {}, 0, 4.0));
    else s.push_back(completer("s" + std::to_string(i), 0, {}, {}, 7.0 + standard_normal(rng)));
  }
  const auto dropout = TrialDataset::from_subjects(schema, s);
  const auto ref = fit_outcome_chain(dropout, 0);
  const double small_m = std::fabs(j2r_estimate(dropout, ref, 2, 3).estimate.diff);
  const double large_m = std::fabs(j2r_estimate(dropout, ref, 400, 3).estimate.diff);
  CHECK(large_m < 0.01);
  CHECK(large_m < small_m + 1e-12);
}

TEST_CASE("simulation comparisons") {
  auto spec = hba1c_like_spec();
  spec.n_per_arm = 4000;
  // Arm-1 adherence strongly tied to the intermediate: the naive contrast
  // compares different strata, the weighted estimator corrects for it.
  spec.arms[1].adherence[1].z_coef = {-3.0};
  spec.arms[1].adherence[1].intercept = 24.4;
  const auto truth = oracle_truth(spec, 200000, 1);
  const auto trial = generate_trial(spec, 19);
  BatteryOptions bo;
  bo.mc_draws = 100;
  const auto b = run_battery(trial.data, bo, 7);
  CHECK(std::fabs(b.get(Estimator::naive).diff - truth.s_plus_plus) >
        std::fabs(b.get(Estimator::s_plus_plus).diff - truth.s_plus_plus));

  // Heavy arm-1 dropout pulls J2R toward the null relative to MAR.
  auto heavy = hba1c_like_spec();
  heavy.n_per_arm = 2000;
  heavy.arms[1].adherence[0].intercept = 0.0;
  const auto d = generate_trial(heavy, 29);
  const auto hb = run_battery(d.data, bo, 11);
  CHECK(std::fabs(hb.get(Estimator::j2r).diff) < std::fabs(hb.get(Estimator::hypothetical_mar).diff));
}
