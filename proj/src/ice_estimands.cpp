#include "tripartite/ice_estimands.hpp"

#include <boost/math/distributions/hypergeometric.hpp>
#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace tripartite {

std::string_view to_string(CiMethod m) { return m == CiMethod::wald ? "wald" : "newcombe"; }
std::string_view to_string(TestMethod m) { return m == TestMethod::fisher ? "fisher" : "chi_square"; }

CiMethod parse_ci_method(std::string_view text) {
  if (text == "wald") return CiMethod::wald;
  if (text == "newcombe") return CiMethod::newcombe;
  throw DataError(fmt::format("unknown CI method '{}'", text));
}

TestMethod parse_test_method(std::string_view text) {
  if (text == "fisher") return TestMethod::fisher;
  if (text == "chi_square" || text == "chi-square") return TestMethod::chi_square;
  throw DataError(fmt::format("unknown test method '{}'", text));
}

namespace {

double normal_quantile_upper(double alpha) {
  return boost::math::quantile(boost::math::complement(boost::math::normal(), alpha / 2.0));
}

struct Interval {
  double low, high;
};

Interval wilson(std::size_t x, std::size_t n, double z) {
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(x) / nn;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
  const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

}  // namespace

double fisher_exact_two_sided(std::size_t x1, std::size_t n1, std::size_t x0, std::size_t n0) {
  const std::size_t total = n1 + n0;
  const std::size_t events = x1 + x0;
  if (events == 0 || events == total) return 1.0;
  // Arm-1 event count given the margins.
  boost::math::hypergeometric_distribution<double> dist(n1, events, total);
  const auto lo = static_cast<unsigned>(events > n0 ? events - n0 : 0);
  const auto hi = static_cast<unsigned>(std::min(events, n1));
  const double observed = boost::math::pdf(dist, static_cast<unsigned>(x1));
  const double cutoff = observed * (1.0 + 1e-7);
  double p = 0.0;
  for (unsigned k = lo; k <= hi; ++k) {
    const double pk = boost::math::pdf(dist, k);
    if (pk <= cutoff) p += pk;
  }
  return std::min(1.0, p);
}

double pooled_z_test(std::size_t x1, std::size_t n1, std::size_t x0, std::size_t n0) {
  const double p1 = static_cast<double>(x1) / n1;
  const double p0 = static_cast<double>(x0) / n0;
  const double pooled = static_cast<double>(x1 + x0) / static_cast<double>(n1 + n0);
  const double se = std::sqrt(pooled * (1 - pooled) * (1.0 / n1 + 1.0 / n0));
  if (se == 0.0) return 1.0;
  const double z = (p1 - p0) / se;
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::fabs(z)));
}

ProportionDiffEstimate compare_proportions(IceCause cause, std::size_t x1, std::size_t n1, std::size_t x0,
                                           std::size_t n0, double alpha, CiMethod ci, TestMethod test) {
  if (n1 == 0 || n0 == 0) throw DataError("proportion comparison needs both arms nonempty");
  if (x1 > n1 || x0 > n0) throw DataError("event count exceeds arm size");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DataError(fmt::format("alpha must lie in (0,1), got {}", alpha));
  ProportionDiffEstimate e;
  e.cause = cause;
  e.x1 = x1;
  e.n1 = n1;
  e.x0 = x0;
  e.n0 = n0;
  e.alpha = alpha;
  e.ci_method = ci;
  e.test_method = test;
  e.p1 = static_cast<double>(x1) / n1;
  e.p0 = static_cast<double>(x0) / n0;
  e.diff = e.p1 - e.p0;
  const double z = normal_quantile_upper(alpha);
  if (ci == CiMethod::wald) {
    const double se = std::sqrt(e.p1 * (1 - e.p1) / n1 + e.p0 * (1 - e.p0) / n0);
    e.ci_low = e.diff - z * se;
    e.ci_high = e.diff + z * se;
  } else {
    // Newcombe's hybrid score interval from the two Wilson intervals.
    const auto w1 = wilson(x1, n1, z);
    const auto w0 = wilson(x0, n0, z);
    e.ci_low = e.diff - std::sqrt(std::pow(e.p1 - w1.low, 2) + std::pow(w0.high - e.p0, 2));
    e.ci_high = e.diff + std::sqrt(std::pow(w1.high - e.p1, 2) + std::pow(e.p0 - w0.low, 2));
  }
  e.p_value = test == TestMethod::fisher ? fisher_exact_two_sided(x1, n1, x0, n0) : pooled_z_test(x1, n1, x0, n0);
  return e;
}

ProportionDiffEstimate estimate_ice_diff(const TrialDataset& ds, IceCause cause, double alpha, CiMethod ci,
                                         TestMethod test) {
  std::array<std::size_t, 2> x{0, 0}, n{0, 0};
  for (const auto& s : ds.subjects) {
    ++n[s.treatment];
    x[s.treatment] += derive_ice_outcome(s, ds.schema.d_max).has(cause);
  }
  return compare_proportions(cause, x[1], n[1], x[0], n[0], alpha, ci, test);
}

const IceSummaryRow& IceSummary::row(IceCause c) const {
  for (const auto& r : rows)
    if (r.estimate.cause == c) return r;
  throw DataError(fmt::format("ICE summary has no '{}' row", to_string(c)));
}

IceSummary ice_summary_table(const TrialDataset& ds, double alpha, CiMethod ci, TestMethod test) {
  const auto outcomes = derive_ice_outcomes(ds);
  IceSummary summary;
  summary.alpha = alpha;
  for (auto cause : {IceCause::any, IceCause::ae, IceCause::loe, IceCause::admin}) {
    std::array<std::size_t, 2> x{0, 0}, n{0, 0};
    std::array<double, 2> exposure{0.0, 0.0};
    for (std::size_t i = 0; i < ds.subjects.size(); ++i) {
      const int t = ds.subjects[i].treatment;
      ++n[t];
      if (outcomes[i].has(cause)) {
        ++x[t];
        exposure[t] += outcomes[i].exposure_weeks;
      }
    }
    IceSummaryRow row;
    row.estimate = compare_proportions(cause, x[1], n[1], x[0], n[0], alpha, ci, test);
    for (int t = 0; t < 2; ++t)
      if (x[t] > 0) row.mean_exposure_weeks[t] = exposure[t] / static_cast<double>(x[t]);
    summary.rows.push_back(row);
  }
  return summary;
}

}  // namespace tripartite
