// rtpower: simulate crossed participant x item response-time experiments,
// fit linear mixed models, and estimate design power by Monte Carlo.

#include "rtpower/errors.hpp"
#include "rtpower/io_util.hpp"
#include "rtpower/lmm.hpp"
#include "rtpower/power.hpp"
#include "rtpower/report.hpp"
#include "rtpower/scenario_io.hpp"
#include "rtpower/simulate.hpp"
#include "rtpower/trial_io.hpp"
#include "rtpower/variability.hpp"
#include "rtpower/version.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace rtpower;

struct GlobalOptions {
  std::uint64_t seed = 1;
  int nsim = 500;
  int threads = 0; // 0 = hardware concurrency
  double threshold = 1.96;
  std::string criterion = "reml";
  std::string failures = "exclude";
  int restarts = 3;
  std::string out; // report base path; empty = stdout only
  bool lax = false;

  Criterion criterion_enum() const {
    return criterion == "ml" ? Criterion::ml : Criterion::reml;
  }
  FailurePolicy failure_policy() const {
    return failures == "nonsig" ? FailurePolicy::nonsig : FailurePolicy::exclude;
  }
  FitOptions fit_options() const {
    FitOptions options;
    options.n_restarts = restarts;
    return options;
  }
};

std::string join_ints(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += format_double(values[i]);
  }
  return out;
}

// Every run prints the exact invocation needed to reproduce it.
void print_reproduce_line(const std::string& subcommand, const Report& report) {
  std::string line = "# reproduce: rtpower " + subcommand;
  for (const auto& [key, value] : report.options) {
    line += " --" + key;
    if (!value.empty()) line += " " + value;
  }
  std::cerr << line << "\n";
}

InputDigest digest_path(const std::string& path) {
  return InputDigest{path, fnv1a64_hex(read_file(path))};
}

TrialCsvOptions csv_options(const std::vector<std::string>& col_specs,
                            bool allow_nonpositive) {
  TrialCsvOptions options;
  options.allow_nonpositive_rt = allow_nonpositive;
  for (const auto& spec : col_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw ValidationError("--col expects field=column, got '" + spec + "'");
    }
    options.column_map[spec.substr(0, eq)] = spec.substr(eq + 1);
  }
  return options;
}

void emit_report(Report& report, const GlobalOptions& global,
                 const std::string& table,
                 std::chrono::steady_clock::time_point started) {
  report.tool_version = version();
  report.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - started)
                       .count();
  if (!table.empty()) std::cout << table << "\n";
  for (const auto& warning : report.warnings) {
    std::cerr << "warning: " << warning << "\n";
  }
  if (global.out.empty()) {
    std::cout << report_to_json(report);
  } else {
    write_report(report, global.out, true, true);
    std::cout << "wrote " << global.out << ".json and " << global.out << ".csv\n";
  }
  print_reproduce_line(report.command, report);
}

std::string display_term(const std::string& term) {
  if (term == "intercept") return "Intercept";
  if (term == "relatedness") return "Relatedness";
  if (term == "setting") return "Setting";
  if (term == "setting:relatedness") return "Setting:Relatedness";
  return term;
}

std::string fixed2(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.2f", v);
  return buffer;
}

void append_varcomp_rows(std::vector<std::pair<std::string, std::string>>& rows,
                         const RandomStructure& rs) {
  const std::string prefix = "by-" + rs.factor_name;
  for (int t = 0; t < rs.dim(); ++t) {
    std::string label;
    if (rs.term_names[t] == "intercept") {
      label = prefix + " random intercept";
    } else if (rs.dim() == 2) {
      label = prefix + " random slope";
    } else {
      label = prefix + " random " + rs.term_names[t];
    }
    rows.emplace_back(label, fixed2(rs.sds[t]));
  }
  for (int i = 0; i < rs.dim(); ++i) {
    for (int j = i + 1; j < rs.dim(); ++j) {
      std::string label = rs.dim() == 2
                              ? prefix + " correlation"
                              : prefix + " corr(" + rs.term_names[i] + "," +
                                    rs.term_names[j] + ")";
      rows.emplace_back(label, fixed2(rs.corr(i, j)));
    }
  }
}

std::string fit_table(const FitResult& fit,
                      const std::map<std::string, BootstrapCi>& cis) {
  std::ostringstream os;
  const bool with_ci = !cis.empty();
  char line[256];
  std::snprintf(line, sizeof(line), "%-34s %12s %12s %8s", "term", "estimate",
                "std_error", "t");
  os << line;
  if (with_ci) {
    std::snprintf(line, sizeof(line), " %12s %12s", "conf.low", "conf.high");
    os << line;
  }
  os << "\n";

  auto ci_cols = [&](const std::string& key) {
    std::string out;
    if (!with_ci) return out;
    auto it = cis.find(key);
    if (it == cis.end()) {
      out = std::string(26, ' ');
      return out;
    }
    std::snprintf(line, sizeof(line), " %12.2f %12.2f", it->second.lo,
                  it->second.hi);
    out = line;
    return out;
  };

  for (const auto& term : fit.terms) {
    std::snprintf(line, sizeof(line), "%-34s %12.2f %12.2f %8.2f",
                  display_term(term).c_str(), fit.estimates.at(term),
                  fit.std_errors.at(term), fit.t_values.at(term));
    os << line << ci_cols("fixed:" + term) << "\n";
  }

  auto varcomp_row = [&](const std::string& label, double value,
                         const std::string& ci_key) {
    std::snprintf(line, sizeof(line), "%-34s %12.2f %12s %8s", label.c_str(),
                  value, "", "");
    os << line << ci_cols(ci_key) << "\n";
  };
  for (const RandomStructure* rs :
       {&fit.varcomp.by_item, &fit.varcomp.by_participant}) {
    const std::string prefix = "by-" + rs->factor_name;
    for (int t = 0; t < rs->dim(); ++t) {
      std::string label = rs->term_names[t] == "intercept"
                              ? prefix + " random intercept"
                              : (rs->dim() == 2 ? prefix + " random slope"
                                                : prefix + " random " +
                                                      rs->term_names[t]);
      varcomp_row(label, rs->sds[t],
                  rs->factor_name + ":sd:" + rs->term_names[t]);
    }
  }
  for (const RandomStructure* rs :
       {&fit.varcomp.by_item, &fit.varcomp.by_participant}) {
    const std::string prefix = "by-" + rs->factor_name;
    for (int i = 0; i < rs->dim(); ++i) {
      for (int j = i + 1; j < rs->dim(); ++j) {
        std::string label =
            rs->dim() == 2 ? prefix + " correlation"
                           : prefix + " corr(" + rs->term_names[i] + "," +
                                 rs->term_names[j] + ")";
        varcomp_row(label, rs->corr(i, j), rs->factor_name + ":corr:" +
                                               rs->term_names[i] + ":" +
                                               rs->term_names[j]);
      }
    }
  }
  varcomp_row("Residual error", fit.varcomp.residual_sd, "residual_sd");

  std::snprintf(line, sizeof(line),
                "\nstatus: %s | criterion: %s | n_obs: %ld | deviance: %.4f",
                to_string(fit.status), to_string(fit.criterion), fit.n_obs,
                fit.deviance);
  os << line;
  return os.str();
}

std::string power_table(const std::vector<PowerCell>& cells) {
  std::ostringstream os;
  char line[256];
  bool any_residual = false;
  for (const auto& cell : cells) {
    any_residual = any_residual || cell.residual_sd.has_value();
  }
  if (any_residual) {
    std::snprintf(line, sizeof(line), "%12s", "residual_sd");
    os << line;
  }
  std::snprintf(line, sizeof(line), " %12s %8s %8s %11s %8s %8s\n",
                "participants", "items", "n_sim", "n_converged", "power",
                "mc_se");
  os << line;
  for (const auto& cell : cells) {
    if (any_residual) {
      std::snprintf(line, sizeof(line), "%12.1f",
                    cell.residual_sd.value_or(0.0));
      os << line;
    }
    std::snprintf(line, sizeof(line), " %12d %8d %8d %11d %8.3f %8.4f\n",
                  cell.n_participants, cell.n_items, cell.n_sim,
                  cell.n_converged, cell.power, cell.mc_se);
    os << line;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int run_simulate(const GlobalOptions& global, const std::string& scenario_arg,
                 const std::string& out_path, int participants, int items,
                 int obs) {
  std::vector<std::string> warnings;
  Scenario scenario = resolve_scenario(scenario_arg, !global.lax, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  if (participants > 0) scenario.n_participants = participants;
  if (items > 0) scenario.n_items = items;
  if (obs > 0) scenario.obs_per_cell = obs;

  const TrialTable table = simulate_trials(scenario, global.seed);
  if (out_path.empty()) {
    std::cout << trials_to_csv(table);
  } else {
    write_trials(table, out_path);
    std::cout << "wrote " << table.size() << " trials to " << out_path << "\n";
  }
  std::cerr << "# reproduce: rtpower simulate --scenario " << scenario_arg
            << " --seed " << global.seed;
  if (participants > 0) std::cerr << " --participants " << participants;
  if (items > 0) std::cerr << " --items " << items;
  if (obs > 0) std::cerr << " --obs " << obs;
  if (!out_path.empty()) std::cerr << " --out " << out_path;
  std::cerr << "\n";
  return 0;
}

int run_fit(const GlobalOptions& global, const std::string& data_path,
            const std::vector<std::string>& col_specs, bool with_setting,
            bool allow_nonpositive, bool with_ci, int boot_draws) {
  const auto started = std::chrono::steady_clock::now();
  const TrialTable table =
      load_trials(data_path, csv_options(col_specs, allow_nonpositive));

  const ModelSpec spec =
      with_setting ? ModelSpec::setting_interaction_model(global.criterion_enum())
                   : ModelSpec::relatedness_model(global.criterion_enum());
  ContrastCoding contrasts; // (-0.5, +0.5) condition and setting coding
  const DesignBundle bundle =
      build_design(table.without_errors(), spec, contrasts);
  const FitResult fit = fit_lmm(bundle, global.fit_options());
  if (fit.status == FitStatus::failed) {
    throw NumericalError("fit did not converge; try --restarts or --criterion ml");
  }

  Report report;
  report.command = "fit";
  report.base_seed = global.seed;
  report.options = {{"data", data_path},
                    {"criterion", global.criterion},
                    {"restarts", std::to_string(global.restarts)}};
  if (with_setting) report.options.emplace_back("with-setting", "");
  if (with_ci) {
    report.options.emplace_back("ci", "");
    report.options.emplace_back("boot", std::to_string(boot_draws));
    report.options.emplace_back("seed", std::to_string(global.seed));
    report.options.emplace_back("threads", std::to_string(global.threads));
  }
  report.inputs.push_back(digest_path(data_path));
  report.fit = fit;

  if (with_ci) {
    const BootstrapResult boot = parametric_bootstrap(
        bundle, fit, boot_draws, global.seed, global.threads,
        global.fit_options());
    report.fit_cis = boot.intervals;
    if (boot.n_converged < boot.n_draws) {
      report.warnings.push_back(
          std::to_string(boot.n_draws - boot.n_converged) + " of " +
          std::to_string(boot.n_draws) + " bootstrap refits failed");
    }
  }

  emit_report(report, global, fit_table(fit, report.fit_cis), started);
  return 0;
}

int run_power(const GlobalOptions& global, const std::string& scenario_arg,
              std::vector<int> participants, std::vector<int> items,
              std::optional<double> slope_sd_override, bool zero_correlations,
              const std::vector<double>& residual_sds, bool sweep) {
  const auto started = std::chrono::steady_clock::now();
  std::vector<std::string> warnings;

  PowerGridRequest request;
  request.base = resolve_scenario(scenario_arg, !global.lax, &warnings);
  request.participants = std::move(participants);
  request.items = std::move(items);
  request.n_sim = global.nsim;
  request.threshold = global.threshold;
  request.base_seed = global.seed;
  request.criterion = global.criterion_enum();
  request.failures = global.failure_policy();
  request.participant_slope_sd = slope_sd_override;
  request.zero_correlations = zero_correlations;
  request.residual_sds = residual_sds;
  request.fit_options = global.fit_options();

  const PowerResult result = sweep ? residual_sweep(request, global.threads)
                                   : power_curve(request, global.threads);

  Report report;
  report.command = sweep ? "sweep" : "power";
  report.base_seed = global.seed;
  report.options = {{"scenario", scenario_arg},
                    {"participants", join_ints(request.participants)},
                    {"items", join_ints(request.items)}};
  if (sweep) {
    report.options.emplace_back("residual-sds", join_doubles(residual_sds));
  }
  report.options.emplace_back("nsim", std::to_string(request.n_sim));
  report.options.emplace_back("threshold", format_double(request.threshold));
  report.options.emplace_back("seed", std::to_string(request.base_seed));
  report.options.emplace_back("criterion", global.criterion);
  report.options.emplace_back("failures", global.failures);
  report.options.emplace_back("threads", std::to_string(global.threads));
  if (slope_sd_override.has_value()) {
    report.options.emplace_back("participant-slope-sd",
                                format_double(*slope_sd_override));
  }
  if (zero_correlations) report.options.emplace_back("zero-correlations", "");
  if (std::filesystem::exists(scenario_arg)) {
    report.inputs.push_back(digest_path(scenario_arg));
  } else {
    report.inputs.push_back(
        {"bundled:" + scenario_arg,
         fnv1a64_hex(bundled_scenario_json(scenario_arg))});
  }
  report.warnings = warnings;
  report.warnings.insert(report.warnings.end(), result.warnings.begin(),
                         result.warnings.end());
  report.power_cells = result.cells;

  emit_report(report, global, power_table(result.cells), started);
  return 0;
}

int run_reliability(const GlobalOptions& global, const std::string& data_path,
                    const std::string& data2_path,
                    const std::vector<std::string>& col_specs) {
  const auto started = std::chrono::steady_clock::now();
  const TrialCsvOptions options = csv_options(col_specs, false);

  Report report;
  report.command = "reliability";
  report.base_seed = global.seed;
  report.options = {{"data", data_path}};
  report.inputs.push_back(digest_path(data_path));

  const ReliabilityResult first = split_half(load_trials(data_path, options));
  report.reliability_rows = first.per_participant;
  report.metrics = {{"r", first.r},
                    {"ci_low", first.ci_low},
                    {"ci_high", first.ci_high},
                    {"n_participants",
                     static_cast<double>(first.per_participant.size())}};

  std::ostringstream table;
  table << std::fixed << std::setprecision(3);
  table << "split-half reliability (" << data_path << "): r = " << first.r
        << "  95% CI [" << first.ci_low << ", " << first.ci_high << "]";

  if (!data2_path.empty()) {
    report.options.emplace_back("data2", data2_path);
    report.inputs.push_back(digest_path(data2_path));
    const ReliabilityResult second = split_half(load_trials(data2_path, options));
    const CorrelationComparison comparison = compare_correlations(
        first.r, static_cast<long>(first.per_participant.size()), second.r,
        static_cast<long>(second.per_participant.size()));
    report.metrics.emplace_back("r2", second.r);
    report.metrics.emplace_back("r2_ci_low", second.ci_low);
    report.metrics.emplace_back("r2_ci_high", second.ci_high);
    report.metrics.emplace_back(
        "n_participants2", static_cast<double>(second.per_participant.size()));
    report.metrics.emplace_back("z", comparison.z);
    report.metrics.emplace_back("p_two_sided", comparison.p_two_sided);
    table << "\nsplit-half reliability (" << data2_path << "): r = " << second.r
          << "  95% CI [" << second.ci_low << ", " << second.ci_high << "]"
          << "\ncomparison (Fisher z): z = " << comparison.z
          << ", two-sided p = " << comparison.p_two_sided;
  }

  emit_report(report, global, table.str(), started);
  return 0;
}

int run_varcomp(const GlobalOptions& global, const std::string& data_path,
                const std::string& data2_path,
                const std::vector<std::string>& col_specs) {
  const auto started = std::chrono::steady_clock::now();
  const TrialCsvOptions options = csv_options(col_specs, false);

  Report report;
  report.command = "varcomp";
  report.base_seed = global.seed;
  report.options = {{"data", data_path},
                    {"criterion", global.criterion},
                    {"restarts", std::to_string(global.restarts)}};
  report.inputs.push_back(digest_path(data_path));

  struct DatasetSummary {
    FitResult fit;
    SlopeSdResult slopes;
    long n_participants = 0;
  };
  auto analyze = [&](const std::string& path) {
    const TrialTable table = load_trials(path, options).without_errors();
    DatasetSummary summary;
    summary.fit = fit_lmm(table, ModelSpec::relatedness_model(global.criterion_enum()),
                          ContrastCoding{}, global.fit_options());
    if (summary.fit.status == FitStatus::failed) {
      throw NumericalError("varcomp: fit failed for " + path);
    }
    summary.slopes = descriptive_slope_sd(table);
    summary.n_participants =
        static_cast<long>(summary.slopes.per_participant_diffs.size());
    return summary;
  };

  const DatasetSummary a = analyze(data_path);
  std::ostringstream table;
  std::vector<std::pair<std::string, std::string>> rows;

  auto add_dataset = [&](const std::string& tag, const DatasetSummary& d) {
    for (int t = 0; t < d.fit.varcomp.by_participant.dim(); ++t) {
      report.metrics.emplace_back(
          tag + ":participant_sd:" + d.fit.varcomp.by_participant.term_names[t],
          d.fit.varcomp.by_participant.sds[t]);
    }
    for (int t = 0; t < d.fit.varcomp.by_item.dim(); ++t) {
      report.metrics.emplace_back(
          tag + ":item_sd:" + d.fit.varcomp.by_item.term_names[t],
          d.fit.varcomp.by_item.sds[t]);
    }
    report.metrics.emplace_back(tag + ":residual_sd", d.fit.varcomp.residual_sd);
    report.metrics.emplace_back(tag + ":descriptive_slope_mean",
                                d.slopes.grand_mean);
    report.metrics.emplace_back(tag + ":descriptive_slope_sd", d.slopes.sd);
    report.metrics.emplace_back(tag + ":n_participants",
                                static_cast<double>(d.n_participants));

    rows.emplace_back("dataset " + tag, "");
    append_varcomp_rows(rows, d.fit.varcomp.by_item);
    append_varcomp_rows(rows, d.fit.varcomp.by_participant);
    rows.emplace_back("Residual error", fixed2(d.fit.varcomp.residual_sd));
    rows.emplace_back("descriptive slope mean", fixed2(d.slopes.grand_mean));
    rows.emplace_back("descriptive slope sd", fixed2(d.slopes.sd));
  };
  add_dataset("a", a);

  if (!data2_path.empty()) {
    report.options.emplace_back("data2", data2_path);
    report.inputs.push_back(digest_path(data2_path));
    const DatasetSummary b = analyze(data2_path);
    add_dataset("b", b);

    auto sd_of = [](const DatasetSummary& d, const std::string& term) {
      const RandomStructure& rs = d.fit.varcomp.by_participant;
      for (int t = 0; t < rs.dim(); ++t) {
        if (rs.term_names[t] == term) return rs.sds[t];
      }
      throw ValidationError("varcomp: fitted model has no participant term '" +
                            term + "'");
    };
    // Variance ratios are reported a-over-b, in the order given.
    for (const std::string term : {"intercept", "relatedness"}) {
      const VarianceRatioResult ratio =
          variance_ratio_test(sd_of(a, term), a.n_participants, sd_of(b, term),
                              b.n_participants);
      const std::string key =
          term == "intercept" ? "intercept" : "slope";
      report.metrics.emplace_back("f_" + key, ratio.f);
      report.metrics.emplace_back("p_" + key, ratio.p);
      char value[96];
      std::snprintf(value, sizeof(value), "%.2f  p = %.4f  df (%ld, %ld)",
                    ratio.f, ratio.p, ratio.df1, ratio.df2);
      rows.emplace_back("F ratio (" + key + " sds, a/b)", value);
    }
  }

  for (const auto& [label, value] : rows) {
    char line[192];
    std::snprintf(line, sizeof(line), "%-36s %s", label.c_str(), value.c_str());
    table << line << "\n";
  }
  emit_report(report, global, table.str(), started);
  return 0;
}

int run_compare(const GlobalOptions& global, const std::string& data_path,
                const std::string& data2_path,
                const std::vector<std::string>& col_specs, int n_boot) {
  const auto started = std::chrono::steady_clock::now();
  const TrialCsvOptions options = csv_options(col_specs, false);
  TrialTable a = load_trials(data_path, options);
  TrialTable b = load_trials(data2_path, options);

  Report report;
  report.command = "compare";
  report.base_seed = global.seed;
  report.options = {{"data", data_path},
                    {"data2", data2_path},
                    {"nboot", std::to_string(n_boot)},
                    {"seed", std::to_string(global.seed)},
                    {"criterion", global.criterion}};
  report.inputs.push_back(digest_path(data_path));
  report.inputs.push_back(digest_path(data2_path));

  const LocationScaleResult ls = location_scale_fit(a, b, n_boot, global.seed);
  report.metrics = {{"mean_a", ls.mean_a},
                    {"mean_b", ls.mean_b},
                    {"sd_a", ls.sd_a},
                    {"sd_b", ls.sd_b},
                    {"mean_diff", ls.mean_diff},
                    {"mean_ci_low", ls.mean_ci_low},
                    {"mean_ci_high", ls.mean_ci_high},
                    {"sd_diff", ls.sd_diff},
                    {"sd_ci_low", ls.sd_ci_low},
                    {"sd_ci_high", ls.sd_ci_high}};

  std::ostringstream table;
  table << std::fixed << std::setprecision(1);
  table << "location-scale comparison (b - a):\n"
        << "  mean difference: " << ls.mean_diff << "  95% CI ["
        << ls.mean_ci_low << ", " << ls.mean_ci_high << "]\n"
        << "  sd difference:   " << ls.sd_diff << "  95% CI [" << ls.sd_ci_low
        << ", " << ls.sd_ci_high << "]";

  // Interaction model on the pooled table. Distinct participant namespaces
  // per dataset; settings from the files or lab/online by argument order.
  TrialTable pooled;
  auto pool = [&pooled](const TrialTable& src, Setting fallback,
                        const char* prefix) {
    for (Trial row : src.rows) {
      if (!row.setting.has_value()) row.setting = fallback;
      row.participant_id = std::string(prefix) + row.participant_id;
      pooled.rows.push_back(std::move(row));
    }
  };
  pool(a, Setting::lab, "a:");
  pool(b, Setting::online, "b:");

  const FitResult fit =
      fit_lmm(pooled.without_errors(),
              ModelSpec::setting_interaction_model(global.criterion_enum()),
              ContrastCoding{}, global.fit_options());
  if (fit.status == FitStatus::failed) {
    throw NumericalError("compare: interaction model fit failed");
  }
  report.fit = fit;
  table << "\n\ninteraction model:\n" << fit_table(fit, {});

  emit_report(report, global, table.str(), started);
  return 0;
}

int run_scenarios(const std::string& export_dir) {
  for (const auto& name : bundled_scenario_names()) {
    std::cout << name << "\n";
    if (!export_dir.empty()) {
      std::filesystem::create_directories(export_dir);
      const std::string path = export_dir + "/" + name + ".json";
      atomic_write_file(path, bundled_scenario_json(name));
      std::cout << "  wrote " << path << "\n";
    }
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation-based power analysis and variability diagnostics "
               "for crossed participant x item response-time designs"};
  app.set_version_flag("--version", std::string("rtpower ") + version());
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Master seed (default 1)")
      ->capture_default_str();
  app.add_option("--nsim", global.nsim, "Simulations per grid cell")
      ->capture_default_str();
  app.add_option("--threads", global.threads,
                 "Worker threads (0 = hardware concurrency)")
      ->capture_default_str();
  app.add_option("--threshold", global.threshold,
                 "Wald |t| significance threshold")
      ->capture_default_str();
  app.add_option("--criterion", global.criterion, "Fit criterion")
      ->check(CLI::IsMember({"reml", "ml"}))
      ->capture_default_str();
  app.add_option("--failures", global.failures,
                 "Power denominator for failed fits")
      ->check(CLI::IsMember({"exclude", "nonsig"}))
      ->capture_default_str();
  app.add_option("--restarts", global.restarts, "Optimizer restarts")
      ->capture_default_str();
  app.add_option("--out", global.out, "Report base path (.json/.csv)");
  app.add_flag("--lax", global.lax, "Warn on unknown scenario keys instead of failing");
  app.fallthrough();

  // simulate
  auto* simulate_cmd =
      app.add_subcommand("simulate", "Draw a synthetic trial table from a scenario");
  std::string sim_scenario, sim_out;
  int sim_participants = 0, sim_items = 0, sim_obs = 0;
  simulate_cmd->add_option("--scenario", sim_scenario,
                           "Scenario file or bundled name")->required();
  simulate_cmd->add_option("--out", sim_out, "Output CSV path (default stdout)");
  simulate_cmd->add_option("--participants", sim_participants,
                           "Override n_participants");
  simulate_cmd->add_option("--items", sim_items, "Override n_items");
  simulate_cmd->add_option("--obs", sim_obs, "Override obs_per_cell");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit the mixed model to a trial CSV");
  std::string fit_data;
  std::vector<std::string> fit_cols;
  bool fit_with_setting = false, fit_allow_nonpositive = false, fit_ci = false;
  int fit_boot = 500;
  fit_cmd->add_option("--data", fit_data, "Trial CSV")->required();
  fit_cmd->add_option("--col", fit_cols, "Column remap field=column");
  fit_cmd->add_flag("--with-setting", fit_with_setting,
                    "Include setting and setting:relatedness terms");
  fit_cmd->add_flag("--allow-nonpositive-rt", fit_allow_nonpositive,
                    "Accept simulated tables with non-positive RTs");
  fit_cmd->add_flag("--ci", fit_ci, "Parametric-bootstrap percentile CIs");
  fit_cmd->add_option("--boot", fit_boot, "Bootstrap draws for --ci")
      ->capture_default_str();

  // power
  auto* power_cmd =
      app.add_subcommand("power", "Monte Carlo power over a participants x items grid");
  std::string power_scenario;
  std::vector<int> power_participants = {12, 24, 36, 48, 60, 72, 84, 96};
  std::vector<int> power_items = {20, 40, 90};
  double power_slope_sd = -1.0;
  bool power_zero_corr = false;
  power_cmd->add_option("--scenario", power_scenario,
                        "Scenario file or bundled name")->required();
  power_cmd->add_option("--participants", power_participants,
                        "Participant grid (default 12..96 by 12)")
      ->delimiter(',');
  power_cmd->add_option("--items", power_items, "Item grid (default 20,40,90)")
      ->delimiter(',');
  power_cmd->add_option("--participant-slope-sd", power_slope_sd,
                        "Override the by-participant slope sd (e.g. a "
                        "descriptive estimate)");
  power_cmd->add_flag("--zero-correlations", power_zero_corr,
                      "Zero all random-effect correlations before simulating");

  // sweep
  auto* sweep_cmd = app.add_subcommand(
      "sweep", "Power as a function of residual sd at one grid point");
  std::string sweep_scenario;
  int sweep_participants = 45, sweep_items = 90;
  std::vector<double> sweep_sds = {100, 150, 200, 250, 300};
  sweep_cmd->add_option("--scenario", sweep_scenario,
                        "Scenario file or bundled name")->required();
  sweep_cmd->add_option("--participants", sweep_participants,
                        "Number of participants")->capture_default_str();
  sweep_cmd->add_option("--items", sweep_items, "Number of items")
      ->capture_default_str();
  sweep_cmd->add_option("--residual-sds", sweep_sds,
                        "Residual sds to sweep (default 100..300 by 50)")
      ->delimiter(',');

  // reliability
  auto* reliability_cmd = app.add_subcommand(
      "reliability", "Odd/even split-half reliability (optionally compared "
                     "across two datasets)");
  std::string rel_data, rel_data2;
  std::vector<std::string> rel_cols;
  reliability_cmd->add_option("--data", rel_data, "Trial CSV")->required();
  reliability_cmd->add_option("--data2", rel_data2, "Second trial CSV");
  reliability_cmd->add_option("--col", rel_cols, "Column remap field=column");

  // varcomp
  auto* varcomp_cmd = app.add_subcommand(
      "varcomp", "Variance components, descriptive slope sds and F-ratio "
                 "tests across two datasets");
  std::string vc_data, vc_data2;
  std::vector<std::string> vc_cols;
  varcomp_cmd->add_option("--data", vc_data, "Trial CSV")->required();
  varcomp_cmd->add_option("--data2", vc_data2, "Second trial CSV");
  varcomp_cmd->add_option("--col", vc_cols, "Column remap field=column");

  // compare
  auto* compare_cmd = app.add_subcommand(
      "compare", "Two-group location-scale comparison plus the setting "
                 "interaction model");
  std::string cmp_data, cmp_data2;
  std::vector<std::string> cmp_cols;
  int cmp_boot = 1000;
  compare_cmd->add_option("--data", cmp_data, "Trial CSV (group a)")->required();
  compare_cmd->add_option("--data2", cmp_data2, "Trial CSV (group b)")->required();
  compare_cmd->add_option("--col", cmp_cols, "Column remap field=column");
  compare_cmd->add_option("--nboot", cmp_boot, "Bootstrap resamples")
      ->capture_default_str();

  // scenarios
  auto* scenarios_cmd =
      app.add_subcommand("scenarios", "List (or export) the bundled scenarios");
  std::string scenarios_export;
  scenarios_cmd->add_option("--export", scenarios_export,
                            "Write the bundled scenario files to a directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (simulate_cmd->parsed()) {
      return run_simulate(global, sim_scenario, sim_out, sim_participants,
                          sim_items, sim_obs);
    }
    if (fit_cmd->parsed()) {
      return run_fit(global, fit_data, fit_cols, fit_with_setting,
                     fit_allow_nonpositive, fit_ci, fit_boot);
    }
    if (power_cmd->parsed()) {
      return run_power(global, power_scenario, power_participants, power_items,
                       power_slope_sd >= 0.0
                           ? std::optional<double>(power_slope_sd)
                           : std::nullopt,
                       power_zero_corr, {}, false);
    }
    if (sweep_cmd->parsed()) {
      return run_power(global, sweep_scenario, {sweep_participants},
                       {sweep_items}, std::nullopt, false, sweep_sds, true);
    }
    if (reliability_cmd->parsed()) {
      return run_reliability(global, rel_data, rel_data2, rel_cols);
    }
    if (varcomp_cmd->parsed()) {
      return run_varcomp(global, vc_data, vc_data2, vc_cols);
    }
    if (compare_cmd->parsed()) {
      return run_compare(global, cmp_data, cmp_data2, cmp_cols, cmp_boot);
    }
    if (scenarios_cmd->parsed()) {
      return run_scenarios(scenarios_export);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
