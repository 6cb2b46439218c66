#include "tripartite/ice_engine.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace tripartite {

std::string_view to_string(IceCause c) {
  switch (c) {
    case IceCause::any: return "any";
    case IceCause::ae: return "AE";
    case IceCause::loe: return "LoE";
    case IceCause::admin: return "Admin";
  }
  return "?";
}

IceCause parse_cause(std::string_view text) {
  for (auto c : {IceCause::any, IceCause::ae, IceCause::loe, IceCause::admin})
    if (text == to_string(c)) return c;
  throw DataError(fmt::format("unknown ICE cause '{}'", text));
}

bool IceOutcome::has(IceCause c) const {
  switch (c) {
    case IceCause::any: return !adherent;
    case IceCause::ae: return ae;
    case IceCause::loe: return loe;
    case IceCause::admin: return admin;
  }
  return false;
}

IceOutcome derive_ice_outcome(const SubjectRecord& rec, double d_max) {
  const double ae = rec.d_ae.weeks();
  const double loe = rec.d_loe.weeks();
  const double adm = rec.d_admin.weeks();
  IceOutcome o;
  o.adherent = ae > d_max && loe > d_max && adm > d_max;
  o.ae = ae <= d_max && ae <= loe && ae <= adm;
  o.loe = loe <= d_max && loe <= ae && loe <= adm;
  o.admin = adm <= d_max && adm < ae && adm < loe;
  o.first_ice = o.adherent ? EventTime::none() : rec.earliest_event();
  o.exposure_weeks = std::min(o.first_ice.weeks(), d_max);
  return o;
}

std::vector<IceOutcome> derive_ice_outcomes(const TrialDataset& ds) {
  std::vector<IceOutcome> out;
  out.reserve(ds.subjects.size());
  for (const auto& s : ds.subjects) out.push_back(derive_ice_outcome(s, ds.schema.d_max));
  return out;
}

CauseSet classify_disposition(const DispositionEvidence& ev, std::optional<EfficacyChange> efficacy,
                              double improvement_threshold) {
  if (ev.recorded_reason == DispositionReason::completed)
    throw DataError("classify_disposition called on a subject who completed treatment");
  CauseSet out;
  out.ae = ev.recorded_reason == DispositionReason::adverse_event || ev.ae_flag;
  out.loe = ev.efficacy_no_improvement_flag;
  if (efficacy && efficacy->at_discontinuation - efficacy->baseline > -improvement_threshold) out.loe = true;
  out.admin = !out.ae && !out.loe;
  return out;
}

CifCurve cumulative_incidence(const TrialDataset& ds, IceCause cause) {
  return cumulative_incidence(ds, derive_ice_outcomes(ds), cause);
}

CifCurve cumulative_incidence(const TrialDataset& ds, const std::vector<IceOutcome>& outcomes, IceCause cause) {
  CifCurve curve;
  curve.cause = cause;
  const double d_max = ds.schema.d_max;
  for (int t = 0; t < 2; ++t) {
    std::vector<double> times;
    std::size_t n_arm = 0;
    for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
      if (ds.subjects[i].treatment != t) continue;
      ++n_arm;
      if (outcomes[i].has(cause)) times.push_back(outcomes[i].first_ice.weeks());
    }
    std::sort(times.begin(), times.end());
    auto& pts = curve.arms[t];
    pts.push_back({0.0, 0.0});
    const double denom = n_arm ? static_cast<double>(n_arm) : 1.0;
    for (std::size_t k = 0; k < times.size();) {
      std::size_t j = k;
      while (j < times.size() && times[j] == times[k]) ++j;
      if (times[k] > 0.0) pts.push_back({times[k], static_cast<double>(j) / denom});
      else pts.back().proportion = static_cast<double>(j) / denom;
      k = j;
    }
    if (const CurvePoint last = pts.back(); last.week < d_max) pts.push_back({d_max, last.proportion});
  }
  return curve;
}

LoeHistogram loe_timing_histogram(const TrialDataset& ds, double interval_weeks) {
  if (!(interval_weeks > 0.0)) throw DataError("LoE histogram interval must be positive");
  const double d_max = ds.schema.d_max;
  const auto buckets = static_cast<std::size_t>(std::ceil(d_max / interval_weeks));
  LoeHistogram h;
  h.interval_weeks = interval_weeks;
  for (std::size_t b = 0; b < buckets; ++b) h.bucket_start.push_back(static_cast<double>(b) * interval_weeks);
  for (auto& c : h.counts) c.assign(buckets, 0);
  for (const auto& s : ds.subjects) {
    const auto o = derive_ice_outcome(s, d_max);
    if (!o.loe) continue;
    auto b = static_cast<std::size_t>(std::floor(o.first_ice.weeks() / interval_weeks));
    b = std::min(b, buckets - 1);
    ++h.counts[s.treatment][b];
  }
  return h;
}

}  // namespace tripartite
