#include "tripartite/trial_data.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include "tripartite/csv.hpp"

namespace tripartite {

namespace {

constexpr std::string_view kReasonNames[] = {
    "AE",
    "death",
    "lost_to_followup",
    "protocol_violation",
    "withdrawal_by_subject",
    "physician_decision",
    "sponsor_decision",
    "completed",
};

std::string z_column(const Visit& v) { return "z_" + v.label; }

std::optional<bool> parse_flag(std::string_view text) {
  text = csv::trim(text);
  if (text == "1" || text == "true" || text == "TRUE") return true;
  if (text == "0" || text == "false" || text == "FALSE" || text.empty()) return false;
  return std::nullopt;
}

}  // namespace

// Schema -------------------------------------------------------------------

void CovariateSchema::check() const {
  if (!(d_max > 0.0) || !std::isfinite(d_max))
    throw DataError(fmt::format("d_max must be positive, got {}", d_max));
  std::set<std::string> seen;
  for (const auto& c : covariates) {
    if (c.name.empty()) throw DataError("covariate with empty name");
    if (!seen.insert(c.name).second) throw DataError(fmt::format("duplicate covariate name '{}'", c.name));
    if (c.kind == CovariateKind::categorical) {
      if (c.levels.size() < 2)
        throw DataError(fmt::format("categorical covariate '{}' needs at least two levels", c.name));
      std::set<std::string> lv(c.levels.begin(), c.levels.end());
      if (lv.size() != c.levels.size())
        throw DataError(fmt::format("categorical covariate '{}' repeats a level", c.name));
    }
  }
  std::set<std::string> labels;
  double prev = 0.0;
  for (const auto& v : visits) {
    if (!labels.insert(v.label).second) throw DataError(fmt::format("duplicate visit label '{}'", v.label));
    if (!(v.week > prev)) throw DataError(fmt::format("visit '{}' at week {} is not after week {}", v.label, v.week, prev));
    if (!(v.week < d_max)) throw DataError(fmt::format("visit '{}' at week {} is not before d_max {}", v.label, v.week, d_max));
    prev = v.week;
  }
}

std::size_t CovariateSchema::design_width() const {
  std::size_t w = 0;
  for (const auto& c : covariates) w += c.kind == CovariateKind::continuous ? 1 : c.levels.size() - 1;
  return w;
}

std::vector<std::string> CovariateSchema::design_names() const {
  std::vector<std::string> names;
  for (const auto& c : covariates) {
    if (c.kind == CovariateKind::continuous) {
      names.push_back(c.name);
    } else {
      for (std::size_t l = 1; l < c.levels.size(); ++l) names.push_back(c.name + "=" + c.levels[l]);
    }
  }
  return names;
}

void CovariateSchema::append_design_row(const std::vector<double>& x, std::vector<double>& out) const {
  for (std::size_t i = 0; i < covariates.size(); ++i) {
    const auto& c = covariates[i];
    if (c.kind == CovariateKind::continuous) {
      out.push_back(x[i]);
    } else {
      const auto level = static_cast<std::size_t>(x[i]);
      for (std::size_t l = 1; l < c.levels.size(); ++l) out.push_back(level == l ? 1.0 : 0.0);
    }
  }
}

std::vector<std::string> CovariateSchema::column_names() const {
  std::vector<std::string> cols{"id", "treatment"};
  for (const auto& c : covariates) cols.push_back(c.name);
  for (const auto& v : visits) cols.push_back(z_column(v));
  for (const char* c : {"y", "d_ae", "d_loe", "d_admin", "reason", "ae_flag", "loe_flag"}) cols.emplace_back(c);
  return cols;
}

std::size_t CovariateSchema::covariate_index(std::string_view name) const {
  for (std::size_t i = 0; i < covariates.size(); ++i)
    if (covariates[i].name == name) return i;
  throw DataError(fmt::format("unknown covariate '{}'", name));
}

// Reasons ------------------------------------------------------------------

std::string_view to_string(DispositionReason r) { return kReasonNames[static_cast<int>(r)]; }

DispositionReason parse_reason(std::string_view text) {
  text = csv::trim(text);
  if (text == "adverse_event") return DispositionReason::adverse_event;
  for (std::size_t i = 0; i < std::size(kReasonNames); ++i)
    if (text == kReasonNames[i]) return static_cast<DispositionReason>(i);
  throw DataError(fmt::format("unknown disposition reason '{}'", text));
}

// Dataset ------------------------------------------------------------------

ArmCounts count_arms(const std::vector<SubjectRecord>& subjects, double d_max) {
  ArmCounts c;
  for (const auto& s : subjects) {
    const bool adh = s.adherent(d_max);
    if (s.treatment == 1) {
      ++c.n1;
      c.n11 += adh;
    } else {
      ++c.n0;
      c.n01 += adh;
    }
  }
  return c;
}

TrialDataset TrialDataset::from_subjects(CovariateSchema schema, std::vector<SubjectRecord> subjects) {
  TrialDataset ds;
  ds.counts = count_arms(subjects, schema.d_max);
  ds.schema = std::move(schema);
  ds.subjects = std::move(subjects);
  return ds;
}

TrialDataset read_dataset(std::istream& in, const CovariateSchema& schema) {
  schema.check();
  const auto expected = schema.column_names();
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input: missing header row");
  if (!line.empty() && line.substr(0, 3) == "\xEF\xBB\xBF") line.erase(0, 3);
  const auto header = csv::split_line(line);
  if (header != expected)
    throw DataError(fmt::format("header mismatch: expected '{}', got '{}'", csv::join(expected), csv::join(header)));

  const std::size_t n_cov = schema.covariates.size();
  const std::size_t n_vis = schema.visits.size();
  std::vector<SubjectRecord> subjects;
  std::unordered_set<std::string> ids;
  std::size_t row = 1;

  while (std::getline(in, line)) {
    ++row;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split_line(line);
    if (cells.size() != expected.size())
      throw DataError(fmt::format("row {}: expected {} columns, got {}", row, expected.size(), cells.size()));

    auto bad = [&](std::size_t col, std::string_view what) {
      return DataError(fmt::format("row {}, column '{}': {} '{}'", row, expected[col], what, cells[col]));
    };
    auto required_number = [&](std::size_t col) {
      auto v = csv::parse_double(cells[col]);
      if (!v || !std::isfinite(*v)) throw bad(col, "malformed number");
      return *v;
    };
    auto optional_number = [&](std::size_t col) -> std::optional<double> {
      if (cells[col].empty()) return std::nullopt;
      return required_number(col);
    };
    auto event_time = [&](std::size_t col) {
      if (cells[col].empty() || cells[col] == "none") return EventTime::none();
      return EventTime::at(required_number(col));
    };

    SubjectRecord s;
    s.id = cells[0];
    if (s.id.empty()) throw bad(0, "empty id");
    if (!ids.insert(s.id).second) throw DataError(fmt::format("row {}: duplicate id \"{}\"", row, s.id));

    auto t = csv::parse_integer(cells[1]);
    if (!t || (*t != 0 && *t != 1)) throw bad(1, "treatment must be 0 or 1, got");
    s.treatment = static_cast<int>(*t);

    std::size_t col = 2;
    for (std::size_t i = 0; i < n_cov; ++i, ++col) {
      const auto& c = schema.covariates[i];
      if (c.kind == CovariateKind::continuous) {
        s.x.push_back(required_number(col));
      } else {
        auto it = std::find(c.levels.begin(), c.levels.end(), cells[col]);
        if (it == c.levels.end()) throw bad(col, "unknown categorical level");
        s.x.push_back(static_cast<double>(it - c.levels.begin()));
      }
    }
    for (std::size_t k = 0; k < n_vis; ++k, ++col) s.z.push_back(optional_number(col));
    s.y = optional_number(col++);
    s.d_ae = event_time(col++);
    s.d_loe = event_time(col++);
    s.d_admin = event_time(col++);
    try {
      s.evidence.recorded_reason = parse_reason(cells[col]);
    } catch (const DataError&) {
      throw bad(col, "unknown disposition reason");
    }
    ++col;
    auto ae = parse_flag(cells[col]);
    if (!ae) throw bad(col, "flag must be 0 or 1, got");
    s.evidence.ae_flag = *ae;
    ++col;
    auto loe = parse_flag(cells[col]);
    if (!loe) throw bad(col, "flag must be 0 or 1, got");
    s.evidence.efficacy_no_improvement_flag = *loe;

    subjects.push_back(std::move(s));
  }
  return TrialDataset::from_subjects(schema, std::move(subjects));
}

TrialDataset load_dataset(const std::string& path, const CovariateSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open dataset '{}'", path));
  return read_dataset(in, schema);
}

void write_dataset(std::ostream& out, const TrialDataset& ds) {
  const auto& schema = ds.schema;
  out << csv::join(schema.column_names()) << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string(); };
  auto time = [](EventTime e) { return e.is_none() ? std::string() : csv::format_double(e.weeks()); };
  for (const auto& s : ds.subjects) {
    std::vector<std::string> cells{s.id, std::to_string(s.treatment)};
    for (std::size_t i = 0; i < schema.covariates.size(); ++i) {
      const auto& c = schema.covariates[i];
      cells.push_back(c.kind == CovariateKind::continuous ? csv::format_double(s.x[i])
                                                          : c.levels.at(static_cast<std::size_t>(s.x[i])));
    }
    for (const auto& z : s.z) cells.push_back(opt(z));
    cells.push_back(opt(s.y));
    cells.push_back(time(s.d_ae));
    cells.push_back(time(s.d_loe));
    cells.push_back(time(s.d_admin));
    cells.emplace_back(to_string(s.evidence.recorded_reason));
    cells.push_back(s.evidence.ae_flag ? "1" : "0");
    cells.push_back(s.evidence.efficacy_no_improvement_flag ? "1" : "0");
    out << csv::join(cells) << '\n';
  }
}

void save_dataset(const std::string& path, const TrialDataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write dataset '{}'", path));
  write_dataset(out, ds);
}

// Validation ---------------------------------------------------------------

ValidationReport validate_dataset(const TrialDataset& ds) {
  ValidationReport report;
  auto add = [&](const std::string& id, std::string rule, std::string detail) {
    report.violations.push_back({id, std::move(rule), std::move(detail)});
  };
  const auto& schema = ds.schema;
  const double d_max = schema.d_max;

  std::unordered_set<std::string> ids;
  for (const auto& s : ds.subjects) {
    if (!ids.insert(s.id).second) add(s.id, "duplicate-id", "id appears more than once");
    if (s.treatment != 0 && s.treatment != 1) add(s.id, "treatment-range", fmt::format("treatment {}", s.treatment));
    if (s.x.size() != schema.covariates.size()) {
      add(s.id, "covariate-arity", fmt::format("{} values for {} covariates", s.x.size(), schema.covariates.size()));
    } else {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        const auto& c = schema.covariates[i];
        if (c.kind == CovariateKind::categorical) {
          const double v = s.x[i];
          if (v < 0 || v != std::floor(v) || v >= static_cast<double>(c.levels.size()))
            add(s.id, "categorical-level", fmt::format("{} has no level index {}", c.name, v));
        } else if (!std::isfinite(s.x[i])) {
          add(s.id, "covariate-finite", c.name);
        }
      }
    }
    for (auto [name, e] : {std::pair{"d_ae", s.d_ae}, std::pair{"d_loe", s.d_loe}, std::pair{"d_admin", s.d_admin}}) {
      if (!e.is_none() && !(e.weeks() > 0.0 && std::isfinite(e.weeks())))
        add(s.id, "nonpositive-event-time", fmt::format("{} = {}", name, e.weeks()));
    }
    const EventTime first = s.earliest_event();
    if (s.z.size() != schema.visits.size()) {
      add(s.id, "intermediate-arity", fmt::format("{} values for {} visits", s.z.size(), schema.visits.size()));
    } else {
      for (std::size_t k = 0; k < s.z.size(); ++k) {
        if (s.z[k] && first.weeks() <= schema.visits[k].week)
          add(s.id, "intermediate-after-ice",
              fmt::format("z_{} at week {} observed after ICE at week {}", schema.visits[k].label,
                          schema.visits[k].week, first.weeks()));
      }
    }
    if (s.y && first.weeks() <= d_max)
      add(s.id, "outcome-after-ice", fmt::format("y observed after ICE at week {}", first.weeks()));
    if (s.evidence.recorded_reason == DispositionReason::completed &&
        (s.evidence.ae_flag || s.evidence.efficacy_no_improvement_flag))
      add(s.id, "completed-with-flags", "completed subject carries an AE or LoE flag");
  }

  if (ds.counts != count_arms(ds.subjects, d_max)) add("", "count-mismatch", "stored counts differ from subjects");
  if (ds.counts.n1 == 0) add("", "empty-arm", "arm 1 has no subjects");
  if (ds.counts.n0 == 0) add("", "empty-arm", "arm 0 has no subjects");
  return report;
}

// Balance ------------------------------------------------------------------

namespace {

void mean_sd(const std::vector<double>& v, double& mean, double& var) {
  mean = 0.0;
  for (double a : v) mean += a;
  mean /= static_cast<double>(v.size());
  var = 0.0;
  for (double a : v) var += (a - mean) * (a - mean);
  var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
}

}  // namespace

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw DataError("welch t-test needs two nonempty groups");
  double ma, va, mb, vb;
  mean_sd(a, ma, va);
  mean_sd(b, mb, vb);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double qa = va / na;
  const double qb = vb / nb;
  const double se2 = qa + qb;
  WelchResult r;
  if (se2 <= 0.0) {
    r.df = na + nb - 2.0;
    r.p_value = ma == mb ? 1.0 : 0.0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  const double da = a.size() > 1 ? qa * qa / (na - 1.0) : 0.0;
  const double db = b.size() > 1 ? qb * qb / (nb - 1.0) : 0.0;
  r.df = se2 * se2 / (da + db);
  boost::math::students_t dist(r.df);
  r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t))));
  return r;
}

BalanceTable baseline_balance_table(const TrialDataset& ds, BalanceGrouping grouping) {
  BalanceTable table;
  table.grouping = grouping;
  const double d_max = ds.schema.d_max;
  std::vector<const SubjectRecord*> first, second;
  if (grouping == BalanceGrouping::adherers_vs_nonadherers) {
    table.first_label = "adherers";
    table.second_label = "non-adherers";
    for (const auto& s : ds.subjects) (s.adherent(d_max) ? first : second).push_back(&s);
  } else {
    table.first_label = "arm 1 adherers";
    table.second_label = "arm 0 adherers";
    for (const auto& s : ds.subjects)
      if (s.adherent(d_max)) (s.treatment == 1 ? first : second).push_back(&s);
  }
  if (first.empty() || second.empty())
    throw DataError(fmt::format("balance table: group '{}' is empty",
                                first.empty() ? table.first_label : table.second_label));

  for (std::size_t i = 0; i < ds.schema.covariates.size(); ++i) {
    const auto& c = ds.schema.covariates[i];
    BalanceRow row;
    row.covariate = c.name;
    row.kind = c.kind;
    row.levels = c.levels;
    auto values = [&](const std::vector<const SubjectRecord*>& g) {
      std::vector<double> v;
      v.reserve(g.size());
      for (const auto* s : g) v.push_back(s->x[i]);
      return v;
    };
    const auto a = values(first);
    const auto b = values(second);
    row.first.n = a.size();
    row.second.n = b.size();

    if (c.kind == CovariateKind::continuous) {
      double var;
      mean_sd(a, row.first.mean, var);
      row.first.sd = std::sqrt(var);
      mean_sd(b, row.second.mean, var);
      row.second.sd = std::sqrt(var);
      const auto w = welch_t_test(a, b);
      row.statistic = w.t;
      row.df = w.df;
      row.p_value = w.p_value;
      row.test = "welch-t";
    } else {
      const std::size_t L = c.levels.size();
      row.first.level_counts.assign(L, 0);
      row.second.level_counts.assign(L, 0);
      for (double v : a) ++row.first.level_counts[static_cast<std::size_t>(v)];
      for (double v : b) ++row.second.level_counts[static_cast<std::size_t>(v)];
      const double na = static_cast<double>(a.size());
      const double nb = static_cast<double>(b.size());
      const double n = na + nb;
      double chi2 = 0.0;
      int used = 0;
      for (std::size_t l = 0; l < L; ++l) {
        const double total = static_cast<double>(row.first.level_counts[l] + row.second.level_counts[l]);
        if (total == 0) continue;
        ++used;
        const double ea = total * na / n;
        const double eb = total * nb / n;
        chi2 += std::pow(row.first.level_counts[l] - ea, 2) / ea + std::pow(row.second.level_counts[l] - eb, 2) / eb;
      }
      row.statistic = chi2;
      row.df = used - 1;
      row.p_value = used > 1 ? boost::math::cdf(boost::math::complement(boost::math::chi_squared(row.df), chi2)) : 1.0;
      row.test = "chi-square";
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace tripartite
