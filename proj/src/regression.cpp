#include "tripartite/regression.hpp"

#include <fmt/format.h>

#include <cmath>
#include <ostream>

#include "tripartite/csv.hpp"

namespace tripartite {

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& design) {
  Eigen::MatrixXd full(design.rows(), design.cols() + 1);
  full.col(0).setOnes();
  full.rightCols(design.cols()) = design;
  return full;
}

std::string column_name(const std::vector<std::string>& names, Eigen::Index j) {
  if (j == 0) return "(intercept)";
  const auto i = static_cast<std::size_t>(j - 1);
  return i < names.size() ? names[i] : fmt::format("column {}", j - 1);
}

std::vector<std::string> default_names(std::vector<std::string> names, Eigen::Index cols) {
  for (auto j = static_cast<Eigen::Index>(names.size()); j < cols; ++j) names.push_back(fmt::format("x{}", j));
  return names;
}

// Unpivoted QR leaves |R_jj| equal to the norm of column j orthogonal to
// the earlier columns; a tiny ratio marks column j as dependent.
void check_rank(const Eigen::MatrixXd& full, const Eigen::HouseholderQR<Eigen::MatrixXd>& qr,
                const std::vector<std::string>& names) {
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < full.cols(); ++j) {
    const double col_norm = full.col(j).norm();
    if (col_norm == 0.0 || std::fabs(r(j, j)) <= 1e-10 * col_norm)
      throw RegressionError(fmt::format("rank-deficient design: column '{}' is linearly dependent on earlier columns",
                                        column_name(names, j)));
  }
}

}  // namespace

LinearModel fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, std::vector<std::string> names) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols() + 1;
  if (response.size() != n) throw RegressionError("design and response lengths differ");
  if (n < p + 1) throw RegressionError(fmt::format("insufficient rows: {} rows for {} coefficients", n, p));
  if (!design.allFinite() || !response.allFinite()) throw RegressionError("non-finite values in regression input");

  const Eigen::MatrixXd full = with_intercept(design);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(full);
  check_rank(full, qr, names);

  LinearModel m;
  m.regressors = default_names(std::move(names), design.cols());
  m.coefficients = qr.solve(response);
  const Eigen::VectorXd resid = response - full * m.coefficients;
  m.residual_sd = std::sqrt(resid.squaredNorm() / static_cast<double>(n - p));
  m.n_obs = static_cast<std::size_t>(n);
  return m;
}

LogisticModel fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, const IrlsOptions& options,
                           std::vector<std::string> names) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols() + 1;
  if (response.size() != n) throw RegressionError("design and response lengths differ");
  if (n < p) throw RegressionError(fmt::format("insufficient rows: {} rows for {} coefficients", n, p));
  const double ones = response.sum();
  if (ones == 0.0 || ones == static_cast<double>(n)) throw RegressionError("logistic response has a single class");

  const Eigen::MatrixXd full = with_intercept(design);
  {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(full);
    check_rank(full, qr, names);
  }

  auto deviance = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = full * beta;
    double d = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      // log(1 + exp(eta)) - y * eta, stable for large |eta|
      const double e = eta[i];
      const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      d += softplus - response[i] * e;
    }
    return 2.0 * d;
  };

  LogisticModel m;
  m.regressors = default_names(std::move(names), design.cols());
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  const double mean = ones / static_cast<double>(n);
  beta[0] = std::log(mean / (1.0 - mean));
  double dev = deviance(beta);

  for (int it = 1; it <= options.max_iterations; ++it) {
    m.iterations = it;
    const Eigen::VectorXd eta = full * beta;
    Eigen::VectorXd sw(n), work(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = 1.0 / (1.0 + std::exp(-eta[i]));
      const double w = std::max(mu * (1.0 - mu), 1e-300);
      sw[i] = std::sqrt(w);
      work[i] = sw[i] * (eta[i] + (response[i] - mu) / w);
    }
    const Eigen::MatrixXd weighted = sw.asDiagonal() * full;
    Eigen::VectorXd next = weighted.householderQr().solve(work);
    if (!next.allFinite()) {
      m.separated = true;
      break;
    }
    double next_dev = deviance(next);
    for (int halve = 0; halve < 30 && next_dev > dev + 1e-12 * (1.0 + std::fabs(dev)); ++halve) {
      next = 0.5 * (next + beta);
      next_dev = deviance(next);
    }
    const double change = (next - beta).cwiseAbs().maxCoeff();
    beta = next;
    dev = next_dev;
    if (beta.norm() > options.separation_norm) {
      m.separated = true;
      break;
    }
    if (change < options.tolerance) {
      m.converged = true;
      break;
    }
  }
  if (!m.converged && !m.separated) {
    // Slow divergence toward infinity is the usual reason IRLS exhausts its
    // iterations; fitted probabilities pinned at 0 or 1 confirm it.
    const Eigen::VectorXd eta = full * beta;
    m.separated = eta.cwiseAbs().maxCoeff() > 30.0;
  }
  m.coefficients = beta;
  return m;
}

// Chains ---------------------------------------------------------------------

std::vector<double> baseline_design(const CovariateSchema& schema, const SubjectRecord& s) {
  std::vector<double> row;
  row.reserve(schema.design_width());
  schema.append_design_row(s.x, row);
  return row;
}

double OutcomeChain::predict_z(std::size_t k, std::span<const double> x, std::span<const double> z_before) const {
  const auto& c = z_models[k].coefficients;
  double v = c[0];
  Eigen::Index j = 1;
  for (double xi : x) v += c[j++] * xi;
  for (std::size_t i = 0; i < k; ++i) v += c[j++] * z_before[i];
  return v;
}

double OutcomeChain::predict_y(std::span<const double> x, std::span<const double> z) const {
  const auto& c = y_model.coefficients;
  double v = c[0];
  Eigen::Index j = 1;
  for (double xi : x) v += c[j++] * xi;
  for (std::size_t i = 0; i < z_models.size(); ++i) v += c[j++] * z[i];
  return v;
}

OutcomeChain fit_outcome_chain(const TrialDataset& ds, int arm) {
  const auto& schema = ds.schema;
  const std::size_t K = schema.visits.size();
  const std::size_t w = schema.design_width();
  OutcomeChain chain;
  chain.arm = arm;
  chain.baseline_width = w;

  std::vector<std::string> names = schema.design_names();
  auto fit_stage = [&](const std::string& stage, std::size_t n_z, auto include, auto response) {
    std::vector<const SubjectRecord*> rows;
    for (const auto& s : ds.subjects)
      if (s.treatment == arm && include(s)) rows.push_back(&s);
    const std::size_t p = w + n_z;
    if (rows.size() < p + 2)
      throw RegressionError(fmt::format("insufficient rows for arm {} {} model: {} rows for {} regressors", arm, stage,
                                        rows.size(), p));
    Eigen::MatrixXd design(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    std::vector<double> row;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      row.clear();
      schema.append_design_row(rows[r]->x, row);
      for (std::size_t k = 0; k < n_z; ++k) row.push_back(*rows[r]->z[k]);
      for (std::size_t c = 0; c < p; ++c) design(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
      y[static_cast<Eigen::Index>(r)] = response(*rows[r]);
    }
    try {
      return fit_ols(design, y, names);
    } catch (const RegressionError& e) {
      throw RegressionError(fmt::format("arm {} {} model: {}", arm, stage, e.what()));
    }
  };

  for (std::size_t k = 0; k < K; ++k) {
    auto observed_through = [k](const SubjectRecord& s) {
      for (std::size_t i = 0; i <= k; ++i)
        if (!s.z[i]) return false;
      return true;
    };
    chain.z_models.push_back(fit_stage("z_" + schema.visits[k].label, k, observed_through,
                                       [k](const SubjectRecord& s) { return *s.z[k]; }));
    names.push_back("z_" + schema.visits[k].label);
  }
  const double d_max = schema.d_max;
  auto complete_adherer = [&](const SubjectRecord& s) {
    if (!s.adherent(d_max) || !s.y) return false;
    for (const auto& z : s.z)
      if (!z) return false;
    return true;
  };
  chain.y_model = fit_stage("y", K, complete_adherer, [](const SubjectRecord& s) { return *s.y; });
  return chain;
}

double compose_phi(const OutcomeChain& chain, std::span<const double> x) {
  const std::size_t K = chain.visits();
  double zbuf[64];
  std::vector<double> zheap;
  double* z = zbuf;
  if (K > 64) {
    zheap.resize(K);
    z = zheap.data();
  }
  for (std::size_t k = 0; k < K; ++k) z[k] = chain.predict_z(k, x, {z, k});
  return chain.predict_y(x, {z, K});
}

void write_chain(std::ostream& out, const OutcomeChain& chain, bool header) {
  if (header) out << "arm,model,term,value\n";
  auto emit = [&](const std::string& model, const LinearModel& m) {
    out << chain.arm << ',' << model << ",(intercept)," << csv::format_double(m.coefficients[0]) << '\n';
    for (std::size_t i = 0; i < m.regressors.size(); ++i)
      out << chain.arm << ',' << model << ',' << m.regressors[i] << ','
          << csv::format_double(m.coefficients[static_cast<Eigen::Index>(i) + 1]) << '\n';
    out << chain.arm << ',' << model << ",residual_sd," << csv::format_double(m.residual_sd) << '\n';
  };
  for (std::size_t k = 0; k < chain.z_models.size(); ++k) emit(fmt::format("z{}", k + 1), chain.z_models[k]);
  emit("y", chain.y_model);
}

}  // namespace tripartite
