#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tripartite/trial_data.hpp"

namespace tripartite::testing {

inline CovariateSchema schema_with(std::size_t continuous, std::vector<Visit> visits = {}, double d_max = 52.0) {
  CovariateSchema s;
  for (std::size_t i = 0; i < continuous; ++i) s.covariates.push_back({"x" + std::to_string(i + 1), CovariateKind::continuous, {}});
  s.visits = std::move(visits);
  s.d_max = d_max;
  return s;
}

/// Adherent subject with all intermediates and the outcome observed.
inline SubjectRecord completer(std::string id, int t, std::vector<double> x, std::vector<double> z, double y) {
  SubjectRecord r;
  r.id = std::move(id);
  r.treatment = t;
  r.x = std::move(x);
  for (double v : z) r.z.emplace_back(v);
  r.y = y;
  return r;
}

/// Subject whose first ICE is an AE at `week`; intermediates after it are absent.
inline SubjectRecord ae_dropout(std::string id, int t, std::vector<double> x, std::size_t visits, double week) {
  SubjectRecord r;
  r.id = std::move(id);
  r.treatment = t;
  r.x = std::move(x);
  r.z.assign(visits, std::nullopt);
  r.d_ae = EventTime::at(week);
  r.evidence.recorded_reason = DispositionReason::adverse_event;
  r.evidence.ae_flag = true;
  return r;
}

}  // namespace tripartite::testing
