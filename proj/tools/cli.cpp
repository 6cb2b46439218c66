#include "cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "tripartite/config.hpp"
#include "tripartite/csv.hpp"
#include "tripartite/ice_engine.hpp"
#include "tripartite/ice_estimands.hpp"
#include "tripartite/inference.hpp"
#include "tripartite/report.hpp"
#include "tripartite/simulation.hpp"
#include "tripartite/text_table.hpp"

namespace tripartite {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  RunConfig config;
  std::ostream& out;

  std::uint64_t seed() const {
    if (!config.seed) throw UsageError("this command needs a seed: set analysis.seed or pass --seed");
    return *config.seed;
  }

  const CovariateSchema& schema() const {
    if (!config.schema) throw UsageError("config declares no [schema] section");
    return *config.schema;
  }

  TrialDataset dataset() const {
    if (!config.data_path) throw UsageError("config has no data.path");
    return load_dataset(config.data_path->string(), schema());
  }

  void write(const std::string& name, const std::string& content) const {
    fs::create_directories(config.output_dir);
    const auto path = config.output_dir / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(fmt::format("cannot write {}", path.string()));
    f << content;
  }

  void write_table(const std::string& stem, const TextTable& text, const TextTable& csv) const {
    write(stem + ".txt", text.render_text());
    write(stem + ".csv", csv.render_csv());
    out << text.render_text();
  }

  std::string read(const std::string& name) const {
    const auto path = config.output_dir / name;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(fmt::format("missing input {}; run the producing command first", path.string()));
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
  }
};

std::string no_commas(std::string s) {
  for (char& c : s)
    if (c == ',') c = ';';
  return s;
}

std::string num(double v) { return csv::format_double(v); }

// validate ---------------------------------------------------------------------

int cmd_validate(const Context& ctx) {
  const auto ds = ctx.dataset();
  const auto report = validate_dataset(ds);
  TextTable t;
  t.header = {"subject_id", "rule", "detail"};
  for (const auto& v : report.violations) t.add({v.subject_id, v.rule, no_commas(v.detail)});
  ctx.write("violations.csv", t.render_csv());
  ctx.write("violations.txt", t.render_text());
  if (report.clean()) {
    ctx.out << fmt::format("{} subjects, no violations\n", ds.subjects.size());
    return kExitOk;
  }
  ctx.out << t.render_text();
  ctx.out << fmt::format("{} violations\n", report.violations.size());
  return kExitDataError;
}

// classify ---------------------------------------------------------------------

int cmd_classify(const Context& ctx) {
  const auto ds = ctx.dataset();
  std::optional<std::size_t> efficacy_index;
  if (ctx.config.baseline_efficacy) efficacy_index = ds.schema.covariate_index(*ctx.config.baseline_efficacy);

  TextTable t;
  t.header = {"id", "treatment", "recorded_reason", "ae", "loe", "admin", "recorded_first_ice", "agrees"};
  std::size_t disagreements = 0;
  for (const auto& s : ds.subjects) {
    if (s.evidence.recorded_reason == DispositionReason::completed) continue;
    std::optional<EfficacyChange> efficacy;
    if (efficacy_index) {
      for (auto it = s.z.rbegin(); it != s.z.rend(); ++it) {
        if (*it) {
          efficacy = EfficacyChange{s.x[*efficacy_index], **it};
          break;
        }
      }
    }
    const auto causes = classify_disposition(s.evidence, efficacy, ctx.config.improvement_threshold);
    const auto recorded = derive_ice_outcome(s, ds.schema.d_max);
    std::string first = "none";
    if (recorded.ae && recorded.loe) first = "AE+LoE";
    else if (recorded.ae) first = "AE";
    else if (recorded.loe) first = "LoE";
    else if (recorded.admin) first = "Admin";
    const bool agrees = recorded.adherent ||
                        (causes.ae == recorded.ae && causes.loe == recorded.loe && causes.admin == recorded.admin);
    disagreements += !agrees;
    auto yn = [](bool b) { return std::string(b ? "1" : "0"); };
    t.add({s.id, std::to_string(s.treatment), std::string(to_string(s.evidence.recorded_reason)), yn(causes.ae),
           yn(causes.loe), yn(causes.admin), first, agrees ? "yes" : "no"});
  }
  ctx.write_table("classification", t, t);
  ctx.out << fmt::format("{} discontinuations classified, {} disagree with the recorded event times\n", t.rows.size(),
                         disagreements);
  return kExitOk;
}

// ice-summary ------------------------------------------------------------------

TextTable balance_csv(const BalanceTable& b) {
  TextTable t;
  t.header = {"covariate", "test", "level", "n_" + b.first_label, "value_" + b.first_label, "sd_" + b.first_label,
              "n_" + b.second_label, "value_" + b.second_label, "sd_" + b.second_label, "statistic", "df", "p_value"};
  for (const auto& r : b.rows) {
    if (r.kind == CovariateKind::continuous) {
      t.add({r.covariate, r.test, "", std::to_string(r.first.n), num(r.first.mean), num(r.first.sd),
             std::to_string(r.second.n), num(r.second.mean), num(r.second.sd), num(r.statistic), num(r.df),
             num(r.p_value)});
    } else {
      for (std::size_t l = 0; l < r.levels.size(); ++l)
        t.add({r.covariate, r.test, r.levels[l], std::to_string(r.first.n), std::to_string(r.first.level_counts[l]),
               "", std::to_string(r.second.n), std::to_string(r.second.level_counts[l]), "", num(r.statistic),
               num(r.df), num(r.p_value)});
    }
  }
  return t;
}

int cmd_ice_summary(const Context& ctx) {
  const auto ds = ctx.dataset();
  const auto& cfg = ctx.config;
  const auto summary = ice_summary_table(ds, cfg.alpha, cfg.ci_method, cfg.test_method);
  ctx.write_table("ice_summary", ice_summary_text(summary), ice_summary_csv(summary));

  const auto outcomes = derive_ice_outcomes(ds);
  TextTable cif;
  cif.header = {"cause", "arm", "week", "proportion"};
  for (auto cause : {IceCause::any, IceCause::ae, IceCause::loe, IceCause::admin}) {
    const auto curve = cumulative_incidence(ds, outcomes, cause);
    for (int arm = 1; arm >= 0; --arm)
      for (const auto& p : curve.arms[arm])
        cif.add({std::string(to_string(cause)), std::to_string(arm), num(p.week), num(p.proportion)});
  }
  ctx.write("cif.csv", cif.render_csv());

  const auto hist = loe_timing_histogram(ds, cfg.loe_interval_weeks);
  TextTable h;
  h.header = {"bucket_start", "arm", "count"};
  for (int arm = 1; arm >= 0; --arm)
    for (std::size_t b = 0; b < hist.bucket_start.size(); ++b)
      h.add({num(hist.bucket_start[b]), std::to_string(arm), std::to_string(hist.counts[arm][b])});
  ctx.write("loe_histogram.csv", h.render_csv());

  for (auto [grouping, stem] : {std::pair{BalanceGrouping::adherers_vs_nonadherers, "balance_adherence"},
                                std::pair{BalanceGrouping::arm_within_adherers, "balance_arms"}}) {
    try {
      ctx.write(std::string(stem) + ".csv", balance_csv(baseline_balance_table(ds, grouping)).render_csv());
    } catch (const DataError& e) {
      ctx.out << fmt::format("skipped {}: {}\n", stem, e.what());
    }
  }
  return kExitOk;
}

// estimate ---------------------------------------------------------------------

std::string models_csv(const FittedModels& models) {
  std::ostringstream s;
  write_chain(s, models.chains[1], true);
  write_chain(s, models.chains[0], false);
  std::string out = s.str();
  TextTable t;
  t.header = {"arm", "interval", "start_week", "end_week", "term", "value"};
  for (int arm = 1; arm >= 0; --arm) {
    const auto& m = models.adherence[arm];
    for (std::size_t k = 0; k < m.intervals.size(); ++k) {
      const auto& iv = m.intervals[k];
      auto row = [&](const std::string& term, double v) {
        t.add({std::to_string(arm), std::to_string(k), num(iv.start_week), num(iv.end_week), term, num(v)});
      };
      row("at_risk", static_cast<double>(iv.at_risk));
      row("events", static_cast<double>(iv.events));
      if (iv.constant_probability) {
        row("constant_probability", *iv.constant_probability);
        continue;
      }
      row("(intercept)", iv.model.coefficients[0]);
      for (std::size_t j = 0; j < iv.model.regressors.size(); ++j)
        row(iv.model.regressors[j], iv.model.coefficients[static_cast<Eigen::Index>(j + 1)]);
    }
  }
  return out + "\n" + t.render_csv();
}

int cmd_estimate(const Context& ctx) {
  const auto ds = ctx.dataset();
  const auto& cfg = ctx.config;
  const auto seed = ctx.seed();
  auto battery = run_battery(ds, cfg.battery, seed);
  BootstrapOptions bo;
  bo.replicates = cfg.bootstrap_replicates;
  bo.alpha = cfg.alpha;
  bo.seed = derive_seed(seed, {7});
  const auto reps = bootstrap_battery(ds, battery, cfg.battery, bo);

  const auto set = EstimateSet::from(battery);
  ctx.write_table("estimates", estimates_text(set), estimates_csv(set));
  ctx.write("models.csv", models_csv(battery.models));
  if (cfg.dump_replicates) {
    TextTable t;
    t.header = {"statistic", "replicate", "value"};
    for (const auto& r : reps)
      for (std::size_t i = 0; i < r.replicates.size(); ++i) t.add({r.name, std::to_string(i), num(r.replicates[i])});
    ctx.write("bootstrap_replicates.csv", t.render_csv());
  }
  if (!reps.empty() && !reps.front().failures.empty())
    ctx.out << fmt::format("{} of {} bootstrap resamples failed and were dropped\n", reps.front().failures.size(),
                           bo.replicates);
  return kExitOk;
}

// simulate ---------------------------------------------------------------------

int cmd_simulate(const Context& ctx) {
  const auto spec = ctx.config.simulation_spec();
  const auto trial = generate_trial(spec, ctx.seed());
  std::ostringstream data;
  write_dataset(data, trial.data);
  ctx.write("simulated.csv", data.str());

  TextTable t;
  t.header = {"id", "treatment", "a0", "a1", "y0", "y1", "first_ice0", "first_ice1"};
  for (const auto& v : spec.visits) {
    t.header.push_back("z0_" + v.label);
    t.header.push_back("z1_" + v.label);
  }
  for (std::size_t j = 0; j < trial.truth.subjects.size(); ++j) {
    const auto& p = trial.truth.subjects[j];
    std::vector<std::string> row{trial.data.subjects[j].id,    std::to_string(p.treatment),
                                 std::to_string(p.arm[0].adherent), std::to_string(p.arm[1].adherent),
                                 num(p.arm[0].y),              num(p.arm[1].y),
                                 p.arm[0].adherent ? "" : num(p.arm[0].first_ice_week),
                                 p.arm[1].adherent ? "" : num(p.arm[1].first_ice_week)};
    for (std::size_t k = 0; k < spec.visits.size(); ++k) {
      row.push_back(num(p.arm[0].z[k]));
      row.push_back(num(p.arm[1].z[k]));
    }
    t.add(std::move(row));
  }
  ctx.write("truth.csv", t.render_csv());

  TextTable s;
  s.header = {"quantity", "value"};
  s.add({"s_star_star", num(trial.truth.s_star_star)});
  s.add({"s_star_plus", num(trial.truth.s_star_plus)});
  s.add({"s_plus_plus", num(trial.truth.s_plus_plus)});
  s.add({"p_plus_plus", num(trial.truth.p_plus_plus)});
  ctx.write_table("truth_summary", s, s);
  return kExitOk;
}

// benchmark --------------------------------------------------------------------

int cmd_benchmark(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto spec = cfg.simulation_spec();
  BenchmarkOptions bo;
  bo.reps = cfg.benchmark_reps;
  bo.n_grid = cfg.n_grid;
  bo.estimators = cfg.estimators;
  bo.seed = ctx.seed();
  bo.oracle_draws = cfg.oracle_draws;
  bo.bootstrap_replicates = cfg.benchmark_bootstrap;
  bo.alpha = cfg.alpha;
  bo.battery = cfg.battery;
  const auto report = run_benchmark(spec, bo);

  TextTable csv, text;
  csv.header = {"n_per_arm", "estimator", "target", "truth", "mean_estimate", "bias", "sd", "mc_se", "coverage",
                "successes", "failures"};
  text.header = {"n/arm", "estimator", "target", "truth", "mean", "bias", "sd", "MC SE", "coverage", "ok", "failed"};
  auto f4 = [](double v) { return fmt::format("{:.4f}", v); };
  for (const auto& r : report.rows) {
    csv.add({std::to_string(r.n_per_arm), r.estimator, r.target, num(r.truth), num(r.mean_estimate), num(r.bias),
             num(r.sd), num(r.mc_se), r.coverage ? num(*r.coverage) : "", std::to_string(r.successes),
             std::to_string(r.failures)});
    text.add({std::to_string(r.n_per_arm), r.estimator, r.target, f4(r.truth), f4(r.mean_estimate), f4(r.bias),
              f4(r.sd), f4(r.mc_se), r.coverage ? fmt::format("{:.3f}", *r.coverage) : "-",
              std::to_string(r.successes), std::to_string(r.failures)});
  }
  ctx.write_table("benchmark", text, csv);

  TextTable gap;
  gap.header = {"n_per_arm", "mean_abs_gap_mar_vs_s_plus_plus", "max_abs_gap"};
  for (const auto& g : report.gaps)
    gap.add({std::to_string(g.n_per_arm), num(g.mean_abs_gap), num(g.max_abs_gap)});
  ctx.write_table("estimand_gap", gap, gap);

  const auto& o = report.truth;
  TextTable oracle;
  oracle.header = {"quantity", "value", "mc_se"};
  oracle.add({"s_star_star", num(o.s_star_star), num(o.se_s_star_star)});
  oracle.add({"s_star_plus", num(o.s_star_plus), num(o.se_s_star_plus)});
  oracle.add({"s_plus_plus", num(o.s_plus_plus), num(o.se_s_plus_plus)});
  oracle.add({"naive", num(o.naive), num(o.se_naive)});
  oracle.add({"p_plus_plus", num(o.p_plus_plus), num(o.se_p_plus_plus)});
  oracle.add({"draws", std::to_string(o.draws), ""});
  ctx.write("oracle.csv", oracle.render_csv());

  std::string failures;
  for (const auto& f : report.failure_reasons) failures += f + "\n";
  ctx.write("failures.txt", failures);
  return kExitOk;
}

// report -----------------------------------------------------------------------

int cmd_report(const Context& ctx) {
  std::istringstream ice_in(ctx.read("ice_summary.csv"));
  std::istringstream est_in(ctx.read("estimates.csv"));
  const auto ice = read_ice_summary(ice_in);
  const auto estimates = read_estimates(est_in);
  const auto rendered = render_tripartite_report(ice, estimates);
  ctx.write("tripartite_report.txt", rendered.text);
  ctx.write("tripartite_report.csv", rendered.csv);
  ctx.write("figure4.csv", rendered.figure_csv);
  ctx.out << rendered.text;
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tripartite estimands for two-arm trials with intercurrent events", "tripartite"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;

  using Handler = int (*)(const Context&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands{
      {"validate", "Check a dataset against the type invariants", cmd_validate},
      {"classify", "Classify discontinuations into AE, LoE and Admin", cmd_classify},
      {"ice-summary", "First-ICE proportions, CIF curves and LoE timing", cmd_ice_summary},
      {"estimate", "Run the estimator battery with bootstrap intervals", cmd_estimate},
      {"simulate", "Generate a synthetic trial with its potential outcomes", cmd_simulate},
      {"benchmark", "Bias, SD and coverage of the estimators by simulation", cmd_benchmark},
      {"report", "Render the tripartite report from persisted results", cmd_report},
  };
  for (const auto& [name, description, handler] : commands) {
    auto* sub = app.add_subcommand(name, description);
    sub->add_option("--config", config_path, "Config file")->required();
    sub->add_option("--seed", seed, "Random seed (overrides analysis.seed)");
    sub->add_option("--out", out_dir, "Output directory (overrides output.dir)");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  Handler handler = nullptr;
  for (const auto& [name, description, h] : commands)
    if (app.got_subcommand(name)) handler = h;

  try {
    RunConfig config = load_config(config_path);
    if (seed) config.seed = *seed;
    if (out_dir) config.output_dir = *out_dir;
    return handler(Context{std::move(config), out});
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDataError;
  }
}

}  // namespace tripartite
