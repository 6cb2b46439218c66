#pragma once

#include <istream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tripartite/ace.hpp"
#include "tripartite/ice_estimands.hpp"
#include "tripartite/text_table.hpp"

namespace tripartite {

/// proportion or difference as percent with one decimal; never "-0.0".
std::string format_percent(double value);
/// "5.2 (2.1, 8.3)" from proportions.
std::string format_percent_ci(double estimate, double low, double high);
/// Two decimals on the outcome scale, e.g. "-0.25 (-0.31, -0.19)".
std::string format_value_ci(double estimate, std::optional<double> low, std::optional<double> high,
                            int decimals = 2);
std::string format_p_value(double p);

// Persisted ICE summary ---------------------------------------------------------

TextTable ice_summary_csv(const IceSummary& summary);
TextTable ice_summary_text(const IceSummary& summary);
IceSummary read_ice_summary(std::istream& in);

// Persisted estimate battery -----------------------------------------------------

/// The estimator battery as written by `estimate` and read back by `report`.
struct EstimateSet {
  std::vector<StratumEstimate> estimates;
  double p_plus_plus = 0.0;
  std::optional<double> p_plus_plus_se;
  std::optional<std::pair<double, double>> p_plus_plus_ci;

  static EstimateSet from(const BatteryResult& battery);
  const StratumEstimate* find(Estimator e) const;
};

TextTable estimates_csv(const EstimateSet& set);
TextTable estimates_text(const EstimateSet& set);
EstimateSet read_estimates(std::istream& in);

// Tripartite report ---------------------------------------------------------------

struct RenderedReport {
  std::string text;
  std::string csv;
  std::string figure_csv;  // long-format plot data: panel, quantity, group, value, ci_low, ci_high
};

/// Renders the three estimands from persisted results. Throws DataError when
/// the AE, LoE, S*+ or S++ component is missing.
RenderedReport render_tripartite_report(const IceSummary& ice, const EstimateSet& estimates);

}  // namespace tripartite
