#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "tripartite/trial_data.hpp"

namespace tripartite {

enum class IceCause { any, ae, loe, admin };

std::string_view to_string(IceCause c);
IceCause parse_cause(std::string_view text);

/// Adherence and first-ICE indicators for one subject.
///
/// AE and LoE indicators can both be set when the two event times tie.
/// Administrative ICEs lose every tie, so `admin` is set only when the
/// administrative time is strictly first.
struct IceOutcome {
  bool adherent = true;
  bool ae = false;
  bool loe = false;
  bool admin = false;
  EventTime first_ice;
  double exposure_weeks = 0.0;

  bool has(IceCause c) const;
};

IceOutcome derive_ice_outcome(const SubjectRecord& rec, double d_max);
std::vector<IceOutcome> derive_ice_outcomes(const TrialDataset& ds);

struct CauseSet {
  bool ae = false;
  bool loe = false;
  bool admin = false;
  friend bool operator==(const CauseSet&, const CauseSet&) = default;
};

/// Efficacy values at baseline and at discontinuation. Lower is better, as
/// for HbA1c: a change above -threshold counts as no meaningful improvement.
struct EfficacyChange {
  double baseline = 0.0;
  double at_discontinuation = 0.0;
};

/// Cause of a discontinuation from coded evidence. AE wins whenever the
/// recorded reason or the safety flag says so; LoE needs the efficacy flag
/// or a non-improving efficacy change; Admin is the residual category.
/// Throws DataError for completers.
CauseSet classify_disposition(const DispositionEvidence& ev, std::optional<EfficacyChange> efficacy,
                              double improvement_threshold);

struct CurvePoint {
  double week = 0.0;
  double proportion = 0.0;
};

struct CifCurve {
  IceCause cause = IceCause::any;
  std::array<std::vector<CurvePoint>, 2> arms;  // indexed by treatment
};

/// Empirical cumulative incidence of first ICE by cause. Every subject is
/// followed to first ICE or d_max, so the plain proportion is exact. Points
/// sit at 0, at each distinct event time, and at d_max.
CifCurve cumulative_incidence(const TrialDataset& ds, IceCause cause);
CifCurve cumulative_incidence(const TrialDataset& ds, const std::vector<IceOutcome>& outcomes, IceCause cause);

struct LoeHistogram {
  double interval_weeks = 0.0;
  std::vector<double> bucket_start;
  std::array<std::vector<std::size_t>, 2> counts;  // indexed by treatment
};

LoeHistogram loe_timing_histogram(const TrialDataset& ds, double interval_weeks);

}  // namespace tripartite
