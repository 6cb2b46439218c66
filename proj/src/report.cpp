#include "tripartite/report.hpp"

#include <fmt/format.h>

#include <cmath>
#include <map>
#include <string_view>

#include "tripartite/csv.hpp"

namespace tripartite {

namespace {

std::string fixed(double v, int decimals) {
  std::string s = fmt::format("{:.{}f}", v, decimals);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string cell(std::optional<double> v) { return v ? csv::format_double(*v) : std::string(); }
std::string cell(double v) { return csv::format_double(v); }

/// Header-indexed rows of a persisted table.
struct CsvRows {
  std::map<std::string, std::size_t> column;
  std::vector<std::vector<std::string>> rows;
  std::string what;

  const std::string& get(std::size_t r, const std::string& name) const {
    const auto it = column.find(name);
    if (it == column.end()) throw DataError(fmt::format("{}: missing column '{}'", what, name));
    if (it->second >= rows[r].size()) throw DataError(fmt::format("{} row {}: too few cells", what, r + 2));
    return rows[r][it->second];
  }
  std::optional<double> opt_number(std::size_t r, const std::string& name) const {
    const auto& text = get(r, name);
    if (text.empty()) return std::nullopt;
    const auto v = csv::parse_double(text);
    if (!v) throw DataError(fmt::format("{} row {} column {}: not a number: '{}'", what, r + 2, name, text));
    return v;
  }
  double number(std::size_t r, const std::string& name) const {
    const auto v = opt_number(r, name);
    if (!v) throw DataError(fmt::format("{} row {} column {}: missing value", what, r + 2, name));
    return *v;
  }
  std::size_t count(std::size_t r, const std::string& name) const {
    const auto v = csv::parse_integer(get(r, name));
    if (!v || *v < 0) throw DataError(fmt::format("{} row {} column {}: not a count", what, r + 2, name));
    return static_cast<std::size_t>(*v);
  }
};

CsvRows read_rows(std::istream& in, std::string what) {
  CsvRows out;
  out.what = std::move(what);
  std::string line;
  if (!std::getline(in, line)) throw DataError(fmt::format("{}: empty file", out.what));
  const auto header = csv::split_line(line);
  for (std::size_t c = 0; c < header.size(); ++c) out.column[header[c]] = c;
  while (std::getline(in, line)) {
    if (csv::trim(line).empty()) continue;
    out.rows.push_back(csv::split_line(line));
  }
  return out;
}

std::string sanitize(std::string note) {
  for (char& c : note)
    if (c == ',' || c == '\n') c = ';';
  return note;
}

}  // namespace

std::string format_percent(double value) { return fixed(100.0 * value, 1); }

std::string format_percent_ci(double estimate, double low, double high) {
  return fmt::format("{} ({}, {})", format_percent(estimate), format_percent(low), format_percent(high));
}

std::string format_value_ci(double estimate, std::optional<double> low, std::optional<double> high, int decimals) {
  if (!low || !high) return fixed(estimate, decimals);
  return fmt::format("{} ({}, {})", fixed(estimate, decimals), fixed(*low, decimals), fixed(*high, decimals));
}

std::string format_p_value(double p) { return p < 0.001 ? "<0.001" : fixed(p, 3); }

// ICE summary --------------------------------------------------------------------

TextTable ice_summary_csv(const IceSummary& summary) {
  TextTable t;
  t.header = {"cause", "x1",     "n1",      "p1",        "x0",         "n0",           "p0",
              "diff",  "ci_low", "ci_high", "p_value",   "alpha",      "ci_method",    "test_method",
              "mean_exposure1", "mean_exposure0"};
  for (const auto& row : summary.rows) {
    const auto& e = row.estimate;
    t.add({std::string(to_string(e.cause)), std::to_string(e.x1), std::to_string(e.n1), cell(e.p1),
           std::to_string(e.x0), std::to_string(e.n0), cell(e.p0), cell(e.diff), cell(e.ci_low), cell(e.ci_high),
           cell(e.p_value), cell(e.alpha), std::string(to_string(e.ci_method)), std::string(to_string(e.test_method)),
           cell(row.mean_exposure_weeks[1]), cell(row.mean_exposure_weeks[0])});
  }
  return t;
}

TextTable ice_summary_text(const IceSummary& summary) {
  TextTable t;
  const int level = static_cast<int>(std::lround(100.0 * (1.0 - summary.alpha)));
  t.header = {"First ICE", "Arm 1 n (%)", "Arm 0 n (%)", fmt::format("Difference % ({}% CI)", level), "p-value",
              "Exposure arm 1 (wk)", "Exposure arm 0 (wk)"};
  for (const auto& row : summary.rows) {
    const auto& e = row.estimate;
    auto exposure = [](std::optional<double> w) { return w ? fixed(*w, 1) : std::string("-"); };
    t.add({std::string(to_string(e.cause)), fmt::format("{} ({})", e.x1, format_percent(e.p1)),
           fmt::format("{} ({})", e.x0, format_percent(e.p0)), format_percent_ci(e.diff, e.ci_low, e.ci_high),
           format_p_value(e.p_value), exposure(row.mean_exposure_weeks[1]), exposure(row.mean_exposure_weeks[0])});
  }
  return t;
}

IceSummary read_ice_summary(std::istream& in) {
  const auto rows = read_rows(in, "ice summary");
  IceSummary out;
  for (std::size_t r = 0; r < rows.rows.size(); ++r) {
    IceSummaryRow row;
    auto& e = row.estimate;
    e.cause = parse_cause(rows.get(r, "cause"));
    e.x1 = rows.count(r, "x1");
    e.n1 = rows.count(r, "n1");
    e.p1 = rows.number(r, "p1");
    e.x0 = rows.count(r, "x0");
    e.n0 = rows.count(r, "n0");
    e.p0 = rows.number(r, "p0");
    e.diff = rows.number(r, "diff");
    e.ci_low = rows.number(r, "ci_low");
    e.ci_high = rows.number(r, "ci_high");
    e.p_value = rows.number(r, "p_value");
    e.alpha = rows.number(r, "alpha");
    e.ci_method = parse_ci_method(rows.get(r, "ci_method"));
    e.test_method = parse_test_method(rows.get(r, "test_method"));
    row.mean_exposure_weeks[1] = rows.opt_number(r, "mean_exposure1");
    row.mean_exposure_weeks[0] = rows.opt_number(r, "mean_exposure0");
    out.alpha = e.alpha;
    out.rows.push_back(row);
  }
  return out;
}

// Estimates ----------------------------------------------------------------------

EstimateSet EstimateSet::from(const BatteryResult& battery) {
  return {battery.estimates, battery.p_plus_plus, battery.p_plus_plus_se, battery.p_plus_plus_ci};
}

const StratumEstimate* EstimateSet::find(Estimator e) const {
  for (const auto& est : estimates)
    if (est.estimator == e) return &est;
  return nullptr;
}

TextTable estimates_csv(const EstimateSet& set) {
  TextTable t;
  t.header = {"estimator", "target", "mean1", "se1", "mean0", "se0", "diff", "se", "ci_low", "ci_high", "note"};
  for (const auto& e : set.estimates) {
    t.add({std::string(to_string(e.estimator)), std::string(target_stratum(e.estimator)), cell(e.mean1), cell(e.se1),
           cell(e.mean0), cell(e.se0), cell(e.diff), cell(e.se), cell(e.ci_low), cell(e.ci_high), sanitize(e.note)});
  }
  std::optional<double> lo, hi;
  if (set.p_plus_plus_ci) std::tie(lo, hi) = *set.p_plus_plus_ci;
  t.add({"p_plus_plus", "P(S++)", "", "", "", "", cell(set.p_plus_plus), cell(set.p_plus_plus_se), cell(lo), cell(hi),
         "expected share adhering to both treatments"});
  return t;
}

TextTable estimates_text(const EstimateSet& set) {
  TextTable t;
  t.header = {"Estimator", "Stratum", "Arm 1 mean (SE)", "Arm 0 mean (SE)", "Difference (CI)", "SE"};
  auto with_se = [](double m, std::optional<double> se) {
    return se ? fmt::format("{} ({})", fixed(m, 3), fixed(*se, 3)) : fixed(m, 3);
  };
  for (const auto& e : set.estimates) {
    t.add({std::string(display_name(e.estimator)), std::string(target_stratum(e.estimator)), with_se(e.mean1, e.se1),
           with_se(e.mean0, e.se0), format_value_ci(e.diff, e.ci_low, e.ci_high, 3),
           e.se ? fixed(*e.se, 3) : std::string("-")});
  }
  std::optional<double> lo, hi;
  if (set.p_plus_plus_ci) std::tie(lo, hi) = *set.p_plus_plus_ci;
  t.add({"P(adhere to both)", "S++", "", "", format_value_ci(set.p_plus_plus, lo, hi, 3),
         set.p_plus_plus_se ? fixed(*set.p_plus_plus_se, 3) : std::string("-")});
  return t;
}

EstimateSet read_estimates(std::istream& in) {
  const auto rows = read_rows(in, "estimates");
  EstimateSet out;
  bool have_pp = false;
  for (std::size_t r = 0; r < rows.rows.size(); ++r) {
    const auto& name = rows.get(r, "estimator");
    if (name == "p_plus_plus") {
      out.p_plus_plus = rows.number(r, "diff");
      out.p_plus_plus_se = rows.opt_number(r, "se");
      const auto lo = rows.opt_number(r, "ci_low");
      const auto hi = rows.opt_number(r, "ci_high");
      if (lo && hi) out.p_plus_plus_ci = std::pair{*lo, *hi};
      have_pp = true;
      continue;
    }
    StratumEstimate e;
    e.estimator = parse_estimator(name);
    e.mean1 = rows.number(r, "mean1");
    e.se1 = rows.opt_number(r, "se1");
    e.mean0 = rows.number(r, "mean0");
    e.se0 = rows.opt_number(r, "se0");
    e.diff = rows.number(r, "diff");
    e.se = rows.opt_number(r, "se");
    e.ci_low = rows.opt_number(r, "ci_low");
    e.ci_high = rows.opt_number(r, "ci_high");
    e.note = rows.get(r, "note");
    out.estimates.push_back(e);
  }
  if (!have_pp) throw DataError("estimates: missing p_plus_plus row");
  return out;
}

// Report -------------------------------------------------------------------------

RenderedReport render_tripartite_report(const IceSummary& ice, const EstimateSet& estimates) {
  auto ice_row = [&](IceCause c) -> const IceSummaryRow& {
    for (const auto& r : ice.rows)
      if (r.estimate.cause == c) return r;
    throw DataError(fmt::format("report: ICE summary lacks the {} row", to_string(c)));
  };
  auto estimate = [&](Estimator e) -> const StratumEstimate& {
    if (const auto* p = estimates.find(e)) return *p;
    throw DataError(fmt::format("report: estimate set lacks {}", to_string(e)));
  };
  const auto& ae = ice_row(IceCause::ae);
  const auto& loe = ice_row(IceCause::loe);
  const auto& s_star_plus = estimate(Estimator::s_star_plus);
  const auto& s_plus_plus = estimate(Estimator::s_plus_plus);
  const int level = static_cast<int>(std::lround(100.0 * (1.0 - ice.alpha)));

  RenderedReport out;
  std::string& text = out.text;
  text += "Tripartite estimands\n";
  text += "====================\n\n";

  auto ice_block = [&](const IceSummaryRow& row, bool exposure) {
    const auto& e = row.estimate;
    text += fmt::format("  Arm 1: {} of {} ({}%)\n", e.x1, e.n1, format_percent(e.p1));
    text += fmt::format("  Arm 0: {} of {} ({}%)\n", e.x0, e.n0, format_percent(e.p0));
    text += fmt::format("  Difference, % ({}% CI): {}\n", level, format_percent_ci(e.diff, e.ci_low, e.ci_high));
    text += fmt::format("  p-value ({}): {}\n", to_string(e.test_method), format_p_value(e.p_value));
    if (exposure) {
      auto w = [](std::optional<double> v) { return v ? fixed(*v, 1) + " weeks" : std::string("no events"); };
      text += fmt::format("  Mean exposure before the ICE: arm 1 {}, arm 0 {}\n", w(row.mean_exposure_weeks[1]),
                          w(row.mean_exposure_weeks[0]));
    }
    text += '\n';
  };

  text += "Estimand 1: discontinuation due to adverse events\n";
  ice_block(ae, true);
  text += "Estimand 2: discontinuation due to lack of efficacy\n";
  ice_block(loe, true);
  text += "Estimand 3: efficacy among adherers\n";
  text += fmt::format("  Adherent to arm 1 (S*+): {}\n",
                      format_value_ci(s_star_plus.diff, s_star_plus.ci_low, s_star_plus.ci_high, 3));
  text += fmt::format("  Adherent to both arms (S++): {}\n",
                      format_value_ci(s_plus_plus.diff, s_plus_plus.ci_low, s_plus_plus.ci_high, 3));
  std::optional<double> pp_lo, pp_hi;
  if (estimates.p_plus_plus_ci) std::tie(pp_lo, pp_hi) = *estimates.p_plus_plus_ci;
  text += fmt::format("  Expected share adhering to both arms: {}%", format_percent(estimates.p_plus_plus));
  if (pp_lo) text += fmt::format(" ({}, {})", format_percent(*pp_lo), format_percent(*pp_hi));
  text += "\n\n";

  text += "First ICE by cause\n";
  text += ice_summary_text(ice).render_text();
  text += '\n';
  text += "Estimator battery\n";
  text += estimates_text(estimates).render_text();

  TextTable csv;
  csv.header = {"section", "quantity", "arm1", "arm0", "estimate", "ci_low", "ci_high", "p_value",
                "exposure1", "exposure0"};
  auto ice_csv = [&](const char* section, const IceSummaryRow& row) {
    const auto& e = row.estimate;
    csv.add({section, fmt::format("{} proportion", to_string(e.cause)), cell(e.p1), cell(e.p0), cell(e.diff),
             cell(e.ci_low), cell(e.ci_high), cell(e.p_value), cell(row.mean_exposure_weeks[1]),
             cell(row.mean_exposure_weeks[0])});
  };
  ice_csv("estimand1", ae);
  ice_csv("estimand2", loe);
  for (const auto* e : {&s_star_plus, &s_plus_plus})
    csv.add({"estimand3", std::string(to_string(e->estimator)), cell(e->mean1), cell(e->mean0), cell(e->diff),
             cell(e->ci_low), cell(e->ci_high), "", "", ""});
  csv.add({"estimand3", "p_plus_plus", "", "", cell(estimates.p_plus_plus), cell(pp_lo), cell(pp_hi), "", "", ""});
  for (const auto& r : ice.rows)
    if (r.estimate.cause == IceCause::any || r.estimate.cause == IceCause::admin) ice_csv("ice", r);
  for (const auto& e : estimates.estimates)
    if (e.estimator != Estimator::s_star_plus && e.estimator != Estimator::s_plus_plus)
      csv.add({"other", std::string(to_string(e.estimator)), cell(e.mean1), cell(e.mean0), cell(e.diff),
               cell(e.ci_low), cell(e.ci_high), "", "", ""});
  out.csv = csv.render_csv();

  TextTable fig;
  fig.header = {"panel", "quantity", "group", "value", "ci_low", "ci_high"};
  for (const auto* row : {&ae, &loe}) {
    const auto& e = row->estimate;
    const std::string panel = e.cause == IceCause::ae ? "estimand1" : "estimand2";
    const std::string q = fmt::format("{} proportion", to_string(e.cause));
    fig.add({panel, q, "arm1", cell(e.p1), "", ""});
    fig.add({panel, q, "arm0", cell(e.p0), "", ""});
    fig.add({panel, q, "difference", cell(e.diff), cell(e.ci_low), cell(e.ci_high)});
    fig.add({panel, "mean exposure weeks", "arm1", cell(row->mean_exposure_weeks[1]), "", ""});
    fig.add({panel, "mean exposure weeks", "arm0", cell(row->mean_exposure_weeks[0]), "", ""});
  }
  for (const auto* e : {&s_star_plus, &s_plus_plus}) {
    const std::string q(to_string(e->estimator));
    fig.add({"estimand3", q, "arm1", cell(e->mean1), "", ""});
    fig.add({"estimand3", q, "arm0", cell(e->mean0), "", ""});
    fig.add({"estimand3", q, "difference", cell(e->diff), cell(e->ci_low), cell(e->ci_high)});
  }
  fig.add({"estimand3", "p_plus_plus", "both", cell(estimates.p_plus_plus), cell(pp_lo), cell(pp_hi)});
  out.figure_csv = fig.render_csv();
  return out;
}

}  // namespace tripartite
