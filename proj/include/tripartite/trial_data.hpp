#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tripartite {

/// Malformed input, failed precondition on data, or unusable dataset.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class CovariateKind { continuous, categorical };

struct Covariate {
  std::string name;
  CovariateKind kind = CovariateKind::continuous;
  std::vector<std::string> levels;  // categorical only; first level is the reference
};

struct Visit {
  std::string label;
  double week = 0.0;
};

struct CovariateSchema {
  std::vector<Covariate> covariates;
  std::vector<Visit> visits;
  double d_max = 52.0;

  /// Throws DataError when names repeat, visit times are not strictly
  /// increasing below d_max, or d_max is not positive.
  void check() const;

  /// Regressor columns contributed by baseline covariates after dummy
  /// expansion of categorical levels.
  std::size_t design_width() const;
  std::vector<std::string> design_names() const;

  /// Expands one subject's baseline values into regressor columns.
  void append_design_row(const std::vector<double>& x, std::vector<double>& out) const;

  std::vector<std::string> column_names() const;
  std::size_t covariate_index(std::string_view name) const;  // throws when absent
};

/// Time of an intercurrent event in weeks, or none. None compares as +inf.
class EventTime {
 public:
  constexpr EventTime() = default;
  static constexpr EventTime none() { return EventTime(); }
  static constexpr EventTime at(double weeks) { return EventTime(weeks); }

  constexpr bool is_none() const { return weeks_ == std::numeric_limits<double>::infinity(); }
  constexpr double weeks() const { return weeks_; }

  friend constexpr bool operator==(EventTime, EventTime) = default;
  friend constexpr auto operator<=>(EventTime a, EventTime b) { return a.weeks_ <=> b.weeks_; }

 private:
  constexpr explicit EventTime(double w) : weeks_(w) {}
  double weeks_ = std::numeric_limits<double>::infinity();
};

enum class DispositionReason {
  adverse_event,
  death,
  lost_to_followup,
  protocol_violation,
  withdrawal_by_subject,
  physician_decision,
  sponsor_decision,
  completed,
};

std::string_view to_string(DispositionReason r);
DispositionReason parse_reason(std::string_view text);  // throws DataError

struct DispositionEvidence {
  DispositionReason recorded_reason = DispositionReason::completed;
  bool ae_flag = false;
  bool efficacy_no_improvement_flag = false;

  friend bool operator==(const DispositionEvidence&, const DispositionEvidence&) = default;
};

struct SubjectRecord {
  std::string id;
  int treatment = 0;
  std::vector<double> x;  // categorical values hold the level index
  std::vector<std::optional<double>> z;
  std::optional<double> y;
  EventTime d_ae;
  EventTime d_loe;
  EventTime d_admin;
  DispositionEvidence evidence;

  EventTime earliest_event() const { return std::min({d_ae, d_loe, d_admin}); }
  bool adherent(double d_max) const { return earliest_event().weeks() > d_max; }

  friend bool operator==(const SubjectRecord&, const SubjectRecord&) = default;
};

struct ArmCounts {
  std::size_t n1 = 0;   // arm 1 size
  std::size_t n0 = 0;   // arm 0 size
  std::size_t n11 = 0;  // arm 1 adherers
  std::size_t n01 = 0;  // arm 0 adherers

  std::size_t arm_size(int t) const { return t == 1 ? n1 : n0; }
  std::size_t adherers(int t) const { return t == 1 ? n11 : n01; }
  friend bool operator==(const ArmCounts&, const ArmCounts&) = default;
};

ArmCounts count_arms(const std::vector<SubjectRecord>& subjects, double d_max);

struct TrialDataset {
  CovariateSchema schema;
  std::vector<SubjectRecord> subjects;
  ArmCounts counts;

  static TrialDataset from_subjects(CovariateSchema schema, std::vector<SubjectRecord> subjects);
};

TrialDataset read_dataset(std::istream& in, const CovariateSchema& schema);
TrialDataset load_dataset(const std::string& path, const CovariateSchema& schema);
void write_dataset(std::ostream& out, const TrialDataset& ds);
void save_dataset(const std::string& path, const TrialDataset& ds);

struct Violation {
  std::string subject_id;  // empty for dataset-level rules
  std::string rule;
  std::string detail;
  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool clean() const { return violations.empty(); }
  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

ValidationReport validate_dataset(const TrialDataset& ds);

// Baseline balance ---------------------------------------------------------

enum class BalanceGrouping { adherers_vs_nonadherers, arm_within_adherers };

struct GroupSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  std::vector<std::size_t> level_counts;  // categorical only
};

struct BalanceRow {
  std::string covariate;
  CovariateKind kind = CovariateKind::continuous;
  std::vector<std::string> levels;
  GroupSummary first;
  GroupSummary second;
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;  // descriptive
  std::string test;      // "welch-t" or "chi-square"
};

struct BalanceTable {
  BalanceGrouping grouping;
  std::string first_label;
  std::string second_label;
  std::vector<BalanceRow> rows;
};

BalanceTable baseline_balance_table(const TrialDataset& ds, BalanceGrouping grouping);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace tripartite
