#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "tripartite/ice_engine.hpp"
#include "tripartite/trial_data.hpp"

namespace tripartite {

enum class CiMethod { wald, newcombe };
enum class TestMethod { fisher, chi_square };

std::string_view to_string(CiMethod m);
std::string_view to_string(TestMethod m);
CiMethod parse_ci_method(std::string_view text);
TestMethod parse_test_method(std::string_view text);

/// Arm-1 minus arm-0 difference in the proportion of subjects whose first
/// ICE has a given cause.
struct ProportionDiffEstimate {
  IceCause cause = IceCause::any;
  std::size_t x1 = 0, n1 = 0, x0 = 0, n0 = 0;
  double p1 = 0.0, p0 = 0.0;
  double diff = 0.0;
  double ci_low = 0.0, ci_high = 0.0;
  double p_value = 1.0;
  double alpha = 0.05;
  CiMethod ci_method = CiMethod::wald;
  TestMethod test_method = TestMethod::fisher;
};

/// Two-sided Fisher exact test on the 2x2 table; tables no more probable
/// than the observed one are summed.
double fisher_exact_two_sided(std::size_t x1, std::size_t n1, std::size_t x0, std::size_t n0);

/// Pooled-variance z test without continuity correction.
double pooled_z_test(std::size_t x1, std::size_t n1, std::size_t x0, std::size_t n0);

ProportionDiffEstimate compare_proportions(IceCause cause, std::size_t x1, std::size_t n1, std::size_t x0,
                                           std::size_t n0, double alpha, CiMethod ci, TestMethod test);

ProportionDiffEstimate estimate_ice_diff(const TrialDataset& ds, IceCause cause, double alpha, CiMethod ci,
                                         TestMethod test);

struct IceSummaryRow {
  ProportionDiffEstimate estimate;
  std::array<std::optional<double>, 2> mean_exposure_weeks;  // by arm; absent without events
};

/// Rows in the order any, AE, LoE, Admin.
struct IceSummary {
  double alpha = 0.05;
  std::vector<IceSummaryRow> rows;

  const IceSummaryRow& row(IceCause c) const;
};

IceSummary ice_summary_table(const TrialDataset& ds, double alpha, CiMethod ci = CiMethod::wald,
                             TestMethod test = TestMethod::fisher);

}  // namespace tripartite
