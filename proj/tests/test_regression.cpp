#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "tripartite/regression.hpp"
#include "tripartite/rng.hpp"
#include "tripartite/simulation.hpp"

using namespace tripartite;
using namespace tripartite::testing;

namespace {

Eigen::MatrixXd random_design(Rng& rng, int n, int p) {
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = standard_normal(rng) * (1.0 + j);
  return x;
}

double loglik(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double a, double b) {
  double l = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double eta = a + b * x[i];
    l += y[i] * eta - std::log1p(std::exp(eta));
  }
  return l;
}

// Derivative-free MLE: a grid over (a, b) repeatedly zoomed on the best cell.
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

}  // namespace

TEST_CASE("OLS matches the normal equations on random problems") {
  Rng rng = make_rng(2024, {});
  for (int problem = 0; problem < 20; ++problem) {
    const int n = 30 + problem * 5, p = 1 + problem % 4;
    const auto x = random_design(rng, n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = 1.0 + x.row(i).sum() * 0.5 + standard_normal(rng);
    const auto m = fit_ols(x, y);
    Eigen::MatrixXd full(n, p + 1);
    full << Eigen::VectorXd::Ones(n), x;
    const Eigen::VectorXd beta = (full.transpose() * full).ldlt().solve(full.transpose() * y);
    CHECK((m.coefficients - beta).cwiseAbs().maxCoeff() < 1e-8);
    const Eigen::VectorXd resid = y - full * m.coefficients;
    CHECK((full.transpose() * resid).cwiseAbs().maxCoeff() < 1e-8 * (1.0 + y.norm() * full.norm()));
  }
}

TEST_CASE("OLS exact and constant fits") {
  Eigen::MatrixXd x(10, 1);
  Eigen::VectorXd y(10), c(10);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = i;
    y[i] = 2.0 * i;
    c[i] = 5.0;
  }
  const auto m = fit_ols(x, y);
  CHECK(m.coefficients[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::fabs(m.coefficients[0]) < 1e-10);
  CHECK(m.residual_sd <= 1e-10);
  const auto k = fit_ols(x, c);
  CHECK(k.coefficients[0] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(std::fabs(k.coefficients[1]) < 1e-12);
}

TEST_CASE("OLS rank deficiency names the column") {
  Eigen::MatrixXd x(8, 2);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = i;
    x(i, 1) = 3.0 * i + 1.0;
    y[i] = i % 3;
  }
  try {
    fit_ols(x, y, {"dose", "dose_copy"});
    FAIL("expected RegressionError");
  } catch (const RegressionError& e) {
    CHECK(std::string(e.what()).find("dose_copy") != std::string::npos);
  }
  CHECK_THROWS_AS(fit_ols(Eigen::MatrixXd(2, 2), Eigen::VectorXd(2)), RegressionError);
}

TEST_CASE("logistic intercept-only fits") {
  Eigen::MatrixXd none(10, 0);
  Eigen::VectorXd y(10);
  for (int i = 0; i < 10; ++i) y[i] = i < 8;
  CHECK(fit_logistic(none, y).coefficients[0] == doctest::Approx(std::log(4.0)).epsilon(1e-10));
  for (int i = 0; i < 10; ++i) y[i] = i < 5;
  CHECK(std::fabs(fit_logistic(none, y).coefficients[0]) < 1e-12);
  for (int i = 0; i < 10; ++i) y[i] = 1;
  CHECK_THROWS_AS(fit_logistic(none, y), RegressionError);
}

TEST_CASE("logistic matches a grid-search MLE and solves the score equations") {
  Rng rng = make_rng(77, {});
  for (int problem = 0; problem < 5; ++problem) {
    const int n = 40;
    Eigen::MatrixXd x(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = standard_normal(rng);
      const double p = 1.0 / (1.0 + std::exp(-(0.3 + 1.1 * x(i, 0))));
      y[i] = uniform01(rng) < p;
    }
    const auto m = fit_logistic(x, y);
    REQUIRE(m.converged);
    const auto [a, b] = grid_mle(x.col(0), y);
    CHECK(std::fabs(m.coefficients[0] - a) < 1e-4);
    CHECK(std::fabs(m.coefficients[1] - b) < 1e-4);
    double s0 = 0, s1 = 0;
    for (int i = 0; i < n; ++i) {
      const double r = y[i] - m.probability(std::span<const double>(&x(i, 0), 1));
      s0 += r;
      s1 += r * x(i, 0);
    }
    CHECK(std::fabs(s0) <= 1e-6);
    CHECK(std::fabs(s1) <= 1e-6);
  }
}

TEST_CASE("logistic separation is flagged") {
  Eigen::MatrixXd x(10, 1);
  Eigen::VectorXd y(10);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = i;
    y[i] = i >= 5;
  }
  const auto m = fit_logistic(x, y);
  CHECK(m.separated);
  CHECK_FALSE(m.converged);
}

TEST_CASE("compose_phi on a hand-built chain") {
  OutcomeChain chain;
  chain.baseline_width = 1;
  LinearModel z;
  z.coefficients = Eigen::Vector2d(1.0, 2.0);
  chain.z_models.push_back(z);
  chain.y_model.coefficients = Eigen::Vector3d(3.0, 0.0, 1.0);
  const double x0 = 0.0, x1 = 1.5;
  CHECK(compose_phi(chain, std::span<const double>(&x0, 1)) == 4.0);
  CHECK(compose_phi(chain, std::span<const double>(&x1, 1)) == 7.0);

  chain.y_model.coefficients = Eigen::Vector3d(3.0, 0.5, 0.0);
  CHECK(compose_phi(chain, std::span<const double>(&x1, 1)) == 3.75);
}

TEST_CASE("fitted chain recovers an exact linear system") {
  auto schema = schema_with(2, {{"w12", 12.0}});
  std::vector<SubjectRecord> s;
  Rng rng = make_rng(3, {});
  for (int i = 0; i < 30; ++i) {
    const double a = standard_normal(rng), b = standard_normal(rng), e = standard_normal(rng);
    const double z = 1.0 + 2.0 * a + 0.01 * e;
    s.push_back(completer("s" + std::to_string(i), 1, {a, b}, {z}, 3.0 + z - b));
  }
  const auto chain = fit_outcome_chain(TrialDataset::from_subjects(schema, s), 1);
  CHECK(chain.z_models[0].coefficients[0] == doctest::Approx(1.0).epsilon(0.01));
  CHECK(chain.z_models[0].coefficients[1] == doctest::Approx(2.0).epsilon(0.01));
  CHECK(std::fabs(chain.y_model.coefficients[1]) < 1e-10);
  CHECK(chain.y_model.coefficients[2] == doctest::Approx(-1.0));
  CHECK(chain.y_model.coefficients[3] == doctest::Approx(1.0));
  std::ostringstream out;
  write_chain(out, chain);
  CHECK(out.str().find("z_w12") != std::string::npos);
}

TEST_CASE("too few adherers for the outcome model") {
  auto schema = schema_with(3, {{"w12", 12.0}});
  std::vector<SubjectRecord> s;
  for (int i = 0; i < 3; ++i)
    s.push_back(completer("s" + std::to_string(i), 1, {1.0 * i, 2.0 * i * i, 0.5 - i}, {1.0 * i}, 1.0));
  try {
    fit_outcome_chain(TrialDataset::from_subjects(schema, s), 1);
    FAIL("expected RegressionError");
  } catch (const RegressionError& e) {
    CHECK(std::string(e.what()).find("insufficient rows") != std::string::npos);
  }
}

TEST_CASE("chain fitted on simulated data") {
  auto spec = hba1c_like_spec();
  spec.n_per_arm = 4000;
  // Make Y independent of Z given X in arm 0.
  spec.arms[0].y.z_coef = {0.0, 0.0};
  const auto trial = generate_trial(spec, 5);
  const auto chain0 = fit_outcome_chain(trial.data, 0);
  const std::size_t w = trial.data.schema.design_width();
  CHECK(std::fabs(chain0.y_model.coefficients[static_cast<Eigen::Index>(w + 1)]) < 0.05);
  CHECK(std::fabs(chain0.y_model.coefficients[static_cast<Eigen::Index>(w + 2)]) < 0.05);

  // Mean of phi_1 over everyone approaches E[Y(1)] under the simulator.
  const auto chain1 = fit_outcome_chain(trial.data, 1);
  double phi = 0, truth = 0;
  for (std::size_t j = 0; j < trial.data.subjects.size(); ++j) {
    const auto x = baseline_design(trial.data.schema, trial.data.subjects[j]);
    phi += compose_phi(chain1, x);
    truth += trial.truth.subjects[j].arm[1].y;
  }
  const double n = static_cast<double>(trial.data.subjects.size());
  CHECK(std::fabs(phi / n - truth / n) < 0.03);
}
