#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tripartite/trial_data.hpp"

namespace tripartite {

/// Fitting failure: too few rows, rank deficiency, degenerate response.
class RegressionError : public DataError {
 public:
  using DataError::DataError;
};

/// Linear mean model with Gaussian residuals. Coefficient 0 is the
/// intercept; coefficient i+1 multiplies regressor i.
struct LinearModel {
  std::vector<std::string> regressors;
  Eigen::VectorXd coefficients;
  double residual_sd = 0.0;
  std::size_t n_obs = 0;

  double predict(std::span<const double> row) const {
    double v = coefficients[0];
    for (std::size_t i = 0; i < row.size(); ++i) v += coefficients[static_cast<Eigen::Index>(i) + 1] * row[i];
    return v;
  }
};

/// Least squares by Householder QR of [1, design]. Throws RegressionError
/// naming the first column that is linearly dependent on earlier ones.
LinearModel fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                    std::vector<std::string> names = {});

struct IrlsOptions {
  double tolerance = 1e-8;
  int max_iterations = 100;
  double separation_norm = 1e6;
};

struct LogisticModel {
  std::vector<std::string> regressors;
  Eigen::VectorXd coefficients;
  bool converged = false;
  bool separated = false;
  int iterations = 0;

  double linear_predictor(std::span<const double> row) const {
    double v = coefficients[0];
    for (std::size_t i = 0; i < row.size(); ++i) v += coefficients[static_cast<Eigen::Index>(i) + 1] * row[i];
    return v;
  }
  double probability(std::span<const double> row) const { return 1.0 / (1.0 + std::exp(-linear_predictor(row))); }
};

/// Bernoulli maximum likelihood by iteratively reweighted least squares with
/// step halving. Quasi-separation is flagged (converged = false), not thrown.
LogisticModel fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                           const IrlsOptions& options = {}, std::vector<std::string> names = {});

// Sequential outcome chains --------------------------------------------------

/// Baseline regressors for one subject (dummy-expanded).
std::vector<double> baseline_design(const CovariateSchema& schema, const SubjectRecord& s);

/// Linear models Z_1 | X, Z_2 | X, Z_1, ..., Y | X, Z for one arm.
struct OutcomeChain {
  int arm = 0;
  std::size_t baseline_width = 0;
  std::vector<LinearModel> z_models;  // model k uses X and Z_1..Z_{k}
  LinearModel y_model;                // fitted on adherers only

  std::size_t visits() const { return z_models.size(); }

  /// Predicted Z_{k+1} given baseline regressors and earlier intermediates.
  double predict_z(std::size_t k, std::span<const double> x, std::span<const double> z_before) const;
  double predict_y(std::span<const double> x, std::span<const double> z) const;
};

OutcomeChain fit_outcome_chain(const TrialDataset& ds, int arm);

/// E[Y(t) | X = x] with each intermediate replaced by its chained
/// prediction. Exact for linear chains.
double compose_phi(const OutcomeChain& chain, std::span<const double> x);

/// Coefficients as delimited rows (arm, model, term, value) for audit.
void write_chain(std::ostream& out, const OutcomeChain& chain, bool header = true);

}  // namespace tripartite
