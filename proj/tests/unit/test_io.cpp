#include "rtpower/errors.hpp"
#include "rtpower/io_util.hpp"
#include "rtpower/report.hpp"
#include "rtpower/scenario_io.hpp"
#include "rtpower/simulate.hpp"
#include "rtpower/trial_io.hpp"

#include <doctest.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace rtpower;

namespace {

std::string small_csv() {
  return "participant_id,item_id,condition,trial_index,rt_ms\n"
         "p1,i1,related,1,712.5\n"
         "p1,i1,unrelated,2,750\n"
         "p2,i1,related,1,820.25\n"
         "p2,i1,unrelated,2,801\n";
}

} // namespace

TEST_CASE("well-formed CSV loads every row") {
  const TrialTable table = trials_from_csv(small_csv());
  REQUIRE(table.size() == 4);
  CHECK(table.rows[0].participant_id == "p1");
  CHECK(table.rows[0].condition == Condition::related);
  CHECK(table.rows[0].rt_ms == 712.5);
  CHECK(table.rows[1].trial_index == 2);
  CHECK_FALSE(table.rows[0].setting.has_value());
  CHECK_FALSE(table.rows[0].correct.has_value());
}

TEST_CASE("non-positive rt is rejected citing the row") {
  std::string csv = "participant_id,item_id,condition,rt_ms\n";
  for (int i = 1; i <= 6; ++i) {
    csv += "p1,i" + std::to_string(i) + ",related,500\n";
  }
  csv += "p1,i7,related,-12\n"; // data row 7
  CHECK_THROWS_WITH_AS(trials_from_csv(csv), doctest::Contains("row 7"),
                       ValidationError);
}

TEST_CASE("missing required columns and unknown labels are named") {
  CHECK_THROWS_WITH_AS(trials_from_csv("participant_id,item_id,rt_ms\np,i,5\n"),
                       doctest::Contains("condition"), ValidationError);

  const std::string case_mismatch =
      "participant_id,item_id,condition,rt_ms\np1,i1,Related,500\n";
  CHECK_THROWS_WITH_AS(trials_from_csv(case_mismatch),
                       doctest::Contains("Related"), ValidationError);

  const std::string bad_setting =
      "participant_id,item_id,condition,setting,rt_ms\np1,i1,related,Lab,500\n";
  CHECK_THROWS_WITH_AS(trials_from_csv(bad_setting), doctest::Contains("Lab"),
                       ValidationError);
}

TEST_CASE("duplicate presentation positions are rejected") {
  const std::string csv =
      "participant_id,item_id,condition,trial_index,rt_ms\n"
      "p1,i1,related,1,500\n"
      "p1,i2,unrelated,1,520\n";
  CHECK_THROWS_WITH_AS(trials_from_csv(csv), doctest::Contains("duplicate"),
                       ValidationError);
}

TEST_CASE("column remapping covers foreign headers") {
  const std::string csv =
      "subject,word,cond,latency\n"
      "s1,w1,related,512\n"
      "s1,w1,unrelated,498\n";
  TrialCsvOptions options;
  options.column_map = {{"participant_id", "subject"},
                        {"item_id", "word"},
                        {"condition", "cond"},
                        {"rt_ms", "latency"}};
  const TrialTable table = trials_from_csv(csv, options);
  REQUIRE(table.size() == 2);
  CHECK(table.rows[0].participant_id == "s1");
  CHECK(table.rows[1].rt_ms == 498.0);
}

TEST_CASE("simulate -> serialize -> load is the identity") {
  Scenario s = bundled_scenario("lab_phonological");
  s.fixed.coefficients["intercept"] = 2000.0; // keep every rt positive
  s.n_participants = 6;
  s.n_items = 6;
  const TrialTable table = simulate_trials(s, 4711);
  const std::string csv = trials_to_csv(table);
  const TrialTable reloaded = trials_from_csv(csv);
  REQUIRE(reloaded.size() == table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    CHECK(reloaded.rows[i].participant_id == table.rows[i].participant_id);
    CHECK(reloaded.rows[i].item_id == table.rows[i].item_id);
    CHECK(reloaded.rows[i].condition == table.rows[i].condition);
    CHECK(reloaded.rows[i].trial_index == table.rows[i].trial_index);
    CHECK(reloaded.rows[i].rt_ms == table.rows[i].rt_ms); // bitwise
  }
  CHECK(trials_to_csv(reloaded) == csv);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 223.56, -59.59, 1e-9, 123456.789}) {
    const std::string text = format_double(v);
    double parsed = 0.0;
    std::from_chars(text.data(), text.data() + text.size(), parsed);
    CHECK(parsed == v);
  }
}

TEST_CASE("bundled scenario files match the embedded copies") {
  const std::string dir = std::string(RTPOWER_SOURCE_DIR) + "/scenarios/";
  for (const auto& name : bundled_scenario_names()) {
    CAPTURE(name);
    const std::string path = dir + name + ".json";
    REQUIRE(std::filesystem::exists(path));
    CHECK(read_file(path) == bundled_scenario_json(name));
  }
}

TEST_CASE("scenario files round-trip with bit-identical numbers") {
  const std::string dir = std::string(RTPOWER_SOURCE_DIR) + "/scenarios/";
  for (const auto& name : bundled_scenario_names()) {
    CAPTURE(name);
    const Scenario first = load_scenario(dir + name + ".json");
    const Scenario second = scenario_from_json(scenario_to_json(first));
    CHECK(scenario_to_json(first) == scenario_to_json(second));
    for (const auto& [term, value] : first.fixed.coefficients) {
      CHECK(second.fixed.coefficients.at(term) == value);
    }
    CHECK(second.by_participant.sds == first.by_participant.sds);
    CHECK(second.by_item.corr == first.by_item.corr);
    CHECK(second.residual_sd == first.residual_sd);
  }
}

TEST_CASE("online_semantic carries the expected values") {
  const Scenario s = bundled_scenario("online_semantic");
  CHECK(s.by_participant.sds[0] == 150.69);
  CHECK(s.by_participant.sds[1] == 11.88);
  CHECK(s.residual_sd == 272.85);
  CHECK(s.fixed.coefficients.at("relatedness") == 34.37);
  CHECK(s.n_participants == 45);
  CHECK(s.n_items == 90);
  CHECK(s.obs_per_cell == 1);
}

TEST_CASE("scenario parsing validates and applies defaults") {
  // correlation out of bounds is rejected with the bound named
  std::string bad = bundled_scenario_json("lab_semantic");
  const auto pos = bad.find("-0.73");
  REQUIRE(pos != std::string::npos);
  bad.replace(pos, 5, "1.20");
  const auto pos2 = bad.find("-0.73");
  REQUIRE(pos2 != std::string::npos);
  bad.replace(pos2, 5, "1.20");
  CHECK_THROWS_WITH_AS(scenario_from_json(bad), doctest::Contains("[-1, 1]"),
                       ValidationError);

  // obs_per_cell defaults to 1
  std::string no_obs = bundled_scenario_json("lab_semantic");
  const auto obs_pos = no_obs.find(",\n  \"obs_per_cell\": 1");
  REQUIRE(obs_pos != std::string::npos);
  no_obs.erase(obs_pos, std::string(",\n  \"obs_per_cell\": 1").size());
  CHECK(scenario_from_json(no_obs).obs_per_cell == 1);

  // unknown keys: strict rejects, lax warns
  std::string extra = bundled_scenario_json("lab_semantic");
  extra.insert(extra.find("\"fixed\""), "\"note\": \"hi\",\n  ");
  CHECK_THROWS_WITH_AS(scenario_from_json(extra), doctest::Contains("note"),
                       ValidationError);
  std::vector<std::string> warnings;
  (void)scenario_from_json(extra, false, &warnings);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("note") != std::string::npos);
}

TEST_CASE("reports round-trip exactly") {
  Report report;
  report.command = "power";
  report.tool_version = "0.1.0";
  report.base_seed = 123456789012345ULL;
  report.options = {{"scenario", "lab_phonological"}, {"nsim", "500"}};
  report.inputs = {{"bundled:lab_phonological", "0123456789abcdef"}};
  report.wall_ms = 1234.5678;
  report.warnings = {"cell (12 x 20): only 440 of 500 fits converged"};
  for (int i = 0; i < 24; ++i) {
    PowerCell cell;
    cell.n_participants = 12 * (1 + i % 8);
    cell.n_items = 20 + i;
    cell.n_sim = 500;
    cell.n_converged = 500 - i;
    cell.n_significant = 321 + i;
    cell.power = double(cell.n_significant) / cell.n_converged;
    cell.mc_se = std::sqrt(cell.power * (1 - cell.power) / cell.n_converged);
    report.power_cells.push_back(cell);
  }
  report.metrics = {{"alpha", 0.051239871}, {"drop", 0.0823}};

  const std::string json = report_to_json(report);
  const Report parsed = report_from_json(json);
  CHECK(report_to_json(parsed) == json);
  CHECK(parsed.base_seed == report.base_seed);
  REQUIRE(parsed.power_cells.size() == 24);
  for (std::size_t i = 0; i < 24; ++i) {
    CHECK(parsed.power_cells[i].power == report.power_cells[i].power);
    CHECK(parsed.power_cells[i].mc_se == report.power_cells[i].mc_se);
  }

  const std::string csv = report_to_csv(report);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 25); // header + 24 cells
  CHECK(csv.rfind("n_participants,n_items,n_sim,n_converged,power,mc_se\n", 0) ==
        0);
}

TEST_CASE("empty payload writes valid JSON and a header-only CSV") {
  Report report;
  report.command = "power";
  report.tool_version = "0.1.0";
  const std::string json = report_to_json(report);
  const Report parsed = report_from_json(json);
  CHECK(parsed.power_cells.empty());
  const std::string csv = report_to_csv(report);
  CHECK(csv == "n_participants,n_items,n_sim,n_converged,power,mc_se\n");
}

TEST_CASE("write_report creates both files atomically") {
  const std::string base =
      (std::filesystem::temp_directory_path() / "rtpower_report_test").string();
  Report report;
  report.command = "power";
  report.tool_version = "0.1.0";
  PowerCell cell;
  cell.n_participants = 12;
  cell.n_items = 20;
  cell.n_sim = 10;
  cell.n_converged = 10;
  cell.n_significant = 5;
  cell.power = 0.5;
  cell.mc_se = 0.1581;
  report.power_cells.push_back(cell);

  write_report(report, base, true, true);
  CHECK(std::filesystem::exists(base + ".json"));
  CHECK(std::filesystem::exists(base + ".csv"));
  CHECK_FALSE(std::filesystem::exists(base + ".json.tmp"));
  const Report reread = report_from_json(read_file(base + ".json"));
  CHECK(reread.power_cells.at(0).power == 0.5);
  std::filesystem::remove(base + ".json");
  std::filesystem::remove(base + ".csv");
}

TEST_CASE("fit results survive a report round-trip") {
  FitResult fit;
  fit.terms = {"intercept", "relatedness"};
  fit.estimates = {{"intercept", 884.0123456789}, {"relatedness", 30.85001}};
  fit.std_errors = {{"intercept", 18.2}, {"relatedness", 9.6412345}};
  fit.t_values = {{"intercept", 884.0123456789 / 18.2},
                  {"relatedness", 30.85001 / 9.6412345}};
  fit.varcomp.by_participant.factor_name = "participant";
  fit.varcomp.by_participant.term_names = {"intercept", "relatedness"};
  fit.varcomp.by_participant.sds = Eigen::Vector2d(112.42, 28.43);
  fit.varcomp.by_participant.corr = Eigen::Matrix2d::Identity();
  fit.varcomp.by_participant.corr(0, 1) = -0.11;
  fit.varcomp.by_participant.corr(1, 0) = -0.11;
  fit.varcomp.by_item = fit.varcomp.by_participant;
  fit.varcomp.by_item.factor_name = "item";
  fit.varcomp.residual_sd = 223.5601;
  fit.deviance = 111264.85879984338;
  fit.criterion = Criterion::reml;
  fit.status = FitStatus::converged;
  fit.n_obs = 8100;

  Report report;
  report.command = "fit";
  report.tool_version = "0.1.0";
  report.fit = fit;
  report.fit_cis["fixed:relatedness"] = BootstrapCi{11.9, 49.8};

  const std::string json = report_to_json(report);
  const Report parsed = report_from_json(json);
  REQUIRE(parsed.fit.has_value());
  CHECK(parsed.fit->estimates.at("relatedness") == 30.85001);
  CHECK(parsed.fit->deviance == fit.deviance);
  CHECK(parsed.fit->varcomp.by_participant.corr(0, 1) == -0.11);
  CHECK(parsed.fit_cis.at("fixed:relatedness").hi == 49.8);
  CHECK(report_to_json(parsed) == json);

  const std::string csv = report_to_csv(report);
  CHECK(csv.rfind("term,estimate,std_error,t_value,ci_low,ci_high\n", 0) == 0);
}

TEST_CASE("cli pipeline: simulate, fit, exit codes") {
  namespace fs = std::filesystem;
  const std::string cli = RTPOWER_CLI_PATH;
  const std::string dir =
      (fs::temp_directory_path() / "rtpower_cli_test").string();
  fs::create_directories(dir);

  auto run = [&](const std::string& args) {
    const std::string command =
        cli + " " + args + " >" + dir + "/out.txt 2>" + dir + "/err.txt";
    const int raw = std::system(command.c_str());
    return WEXITSTATUS(raw);
  };

  CHECK(run("simulate --scenario lab_phonological --seed 3 --participants 5 "
            "--items 6 --out " + dir + "/trials.csv") == 0);
  CHECK(run("fit --data " + dir + "/trials.csv --allow-nonpositive-rt --out " +
            dir + "/fit") == 0);
  CHECK(fs::exists(dir + "/fit.json"));
  CHECK(fs::exists(dir + "/fit.csv"));

  CHECK(run("fit --data " + dir + "/does_not_exist.csv") == 3); // io error
  CHECK(run("simulate --scenario " + dir + "/missing.json") == 3);
  CHECK(run("power --scenario lab_phonological --nsim 0") == 1); // validation
  CHECK(run("definitely-not-a-subcommand") == 1);

  // a scenario file with an out-of-range correlation fails validation
  {
    std::ofstream bad(dir + "/bad.json");
    std::string text = bundled_scenario_json("lab_semantic");
    const auto pos = text.find("-0.73");
    text.replace(pos, 5, "1.20");
    const auto pos2 = text.find("-0.73");
    text.replace(pos2, 5, "1.20");
    bad << text;
  }
  CHECK(run("simulate --scenario " + dir + "/bad.json") == 1);

  fs::remove_all(dir);
}
