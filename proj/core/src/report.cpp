#include "rtpower/report.hpp"

#include "rtpower/errors.hpp"
#include "rtpower/io_util.hpp"

#include <json.hpp>

namespace rtpower {

namespace {

using json = nlohmann::ordered_json;

json random_structure_to_json(const RandomStructure& rs) {
  json object;
  object["factor_name"] = rs.factor_name;
  object["term_names"] = rs.term_names;
  object["sds"] = json::array();
  for (Eigen::Index i = 0; i < rs.sds.size(); ++i) object["sds"].push_back(rs.sds[i]);
  object["corr"] = json::array();
  for (Eigen::Index i = 0; i < rs.corr.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < rs.corr.cols(); ++j) row.push_back(rs.corr(i, j));
    object["corr"].push_back(std::move(row));
  }
  return object;
}

RandomStructure random_structure_from_json(const json& object) {
  RandomStructure rs;
  rs.factor_name = object.at("factor_name").get<std::string>();
  for (const auto& t : object.at("term_names")) {
    rs.term_names.push_back(t.get<std::string>());
  }
  const auto& sds = object.at("sds");
  rs.sds.resize(static_cast<Eigen::Index>(sds.size()));
  for (Eigen::Index i = 0; i < rs.sds.size(); ++i) {
    rs.sds[i] = sds[static_cast<std::size_t>(i)].get<double>();
  }
  const auto& corr = object.at("corr");
  const auto dim = static_cast<Eigen::Index>(corr.size());
  rs.corr.resize(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      rs.corr(i, j) =
          corr[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
    }
  }
  return rs;
}

json fit_to_json(const FitResult& fit) {
  json object;
  object["status"] = to_string(fit.status);
  object["criterion"] = to_string(fit.criterion);
  object["n_obs"] = fit.n_obs;
  object["deviance"] = fit.deviance;
  object["optimizer_evals"] = fit.optimizer_evals;
  object["terms"] = fit.terms;
  json fixed = json::array();
  for (const auto& term : fit.terms) {
    json row;
    row["term"] = term;
    row["estimate"] = fit.estimates.at(term);
    row["std_error"] = fit.std_errors.at(term);
    row["t_value"] = fit.t_values.at(term);
    fixed.push_back(std::move(row));
  }
  object["fixed_effects"] = std::move(fixed);
  object["varcomp"]["by_participant"] =
      random_structure_to_json(fit.varcomp.by_participant);
  object["varcomp"]["by_item"] = random_structure_to_json(fit.varcomp.by_item);
  object["varcomp"]["residual_sd"] = fit.varcomp.residual_sd;
  return object;
}

FitResult fit_from_json(const json& object) {
  FitResult fit;
  const std::string status = object.at("status").get<std::string>();
  fit.status = status == "converged"
                   ? FitStatus::converged
                   : (status == "converged_singular" ? FitStatus::converged_singular
                                                     : FitStatus::failed);
  fit.criterion = object.at("criterion").get<std::string>() == "ml"
                      ? Criterion::ml
                      : Criterion::reml;
  fit.n_obs = object.at("n_obs").get<long>();
  fit.deviance = object.at("deviance").get<double>();
  fit.optimizer_evals = object.at("optimizer_evals").get<long>();
  for (const auto& t : object.at("terms")) fit.terms.push_back(t.get<std::string>());
  for (const auto& row : object.at("fixed_effects")) {
    const std::string term = row.at("term").get<std::string>();
    fit.estimates[term] = row.at("estimate").get<double>();
    fit.std_errors[term] = row.at("std_error").get<double>();
    fit.t_values[term] = row.at("t_value").get<double>();
  }
  fit.varcomp.by_participant =
      random_structure_from_json(object.at("varcomp").at("by_participant"));
  fit.varcomp.by_item = random_structure_from_json(object.at("varcomp").at("by_item"));
  fit.varcomp.residual_sd = object.at("varcomp").at("residual_sd").get<double>();
  return fit;
}

json cell_to_json(const PowerCell& cell) {
  json object;
  object["n_participants"] = cell.n_participants;
  object["n_items"] = cell.n_items;
  if (cell.residual_sd.has_value()) object["residual_sd"] = *cell.residual_sd;
  object["n_sim"] = cell.n_sim;
  object["n_converged"] = cell.n_converged;
  object["n_significant"] = cell.n_significant;
  object["power"] = cell.power;
  object["mc_se"] = cell.mc_se;
  return object;
}

PowerCell cell_from_json(const json& object) {
  PowerCell cell;
  cell.n_participants = object.at("n_participants").get<int>();
  cell.n_items = object.at("n_items").get<int>();
  if (object.contains("residual_sd")) {
    cell.residual_sd = object.at("residual_sd").get<double>();
  }
  cell.n_sim = object.at("n_sim").get<int>();
  cell.n_converged = object.at("n_converged").get<int>();
  cell.n_significant = object.at("n_significant").get<int>();
  cell.power = object.at("power").get<double>();
  cell.mc_se = object.at("mc_se").get<double>();
  return cell;
}

} // namespace

std::string report_to_json(const Report& report) {
  json root;
  root["tool"] = {{"name", "rtpower"}, {"version", report.tool_version}};
  root["command"] = report.command;
  root["base_seed"] = report.base_seed;
  root["options"] = json::object();
  for (const auto& [key, value] : report.options) root["options"][key] = value;
  root["inputs"] = json::array();
  for (const auto& input : report.inputs) {
    root["inputs"].push_back({{"path", input.path}, {"fnv1a64", input.fnv1a64}});
  }
  root["timing"] = {{"wall_ms", report.wall_ms}};
  root["warnings"] = report.warnings;

  json results = json::object();
  results["cells"] = json::array();
  for (const auto& cell : report.power_cells) {
    results["cells"].push_back(cell_to_json(cell));
  }
  if (report.fit.has_value()) results["fit"] = fit_to_json(*report.fit);
  if (!report.fit_cis.empty()) {
    json cis = json::object();
    for (const auto& [key, ci] : report.fit_cis) {
      cis[key] = {{"lo", ci.lo}, {"hi", ci.hi}};
    }
    results["fit_cis"] = std::move(cis);
  }
  if (!report.reliability_rows.empty()) {
    json rows = json::array();
    for (const auto& row : report.reliability_rows) {
      rows.push_back({{"participant_id", row.participant_id},
                      {"odd_mean", row.odd_mean},
                      {"even_mean", row.even_mean}});
    }
    results["per_participant"] = std::move(rows);
  }
  if (!report.metrics.empty()) {
    json metrics = json::object();
    for (const auto& [key, value] : report.metrics) metrics[key] = value;
    results["metrics"] = std::move(metrics);
  }
  root["results"] = std::move(results);
  return root.dump(2) + "\n";
}

Report report_from_json(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("report: JSON parse error: ") + e.what());
  }

  Report report;
  report.tool_version = root.at("tool").at("version").get<std::string>();
  report.command = root.at("command").get<std::string>();
  report.base_seed = root.at("base_seed").get<std::uint64_t>();
  for (const auto& [key, value] : root.at("options").items()) {
    report.options.emplace_back(key, value.get<std::string>());
  }
  for (const auto& input : root.at("inputs")) {
    report.inputs.push_back({input.at("path").get<std::string>(),
                             input.at("fnv1a64").get<std::string>()});
  }
  report.wall_ms = root.at("timing").at("wall_ms").get<double>();
  for (const auto& w : root.at("warnings")) {
    report.warnings.push_back(w.get<std::string>());
  }

  const json& results = root.at("results");
  for (const auto& cell : results.at("cells")) {
    report.power_cells.push_back(cell_from_json(cell));
  }
  if (results.contains("fit")) report.fit = fit_from_json(results.at("fit"));
  if (results.contains("fit_cis")) {
    for (const auto& [key, ci] : results.at("fit_cis").items()) {
      report.fit_cis[key] =
          BootstrapCi{ci.at("lo").get<double>(), ci.at("hi").get<double>()};
    }
  }
  if (results.contains("per_participant")) {
    for (const auto& row : results.at("per_participant")) {
      report.reliability_rows.push_back(
          {row.at("participant_id").get<std::string>(),
           row.at("odd_mean").get<double>(), row.at("even_mean").get<double>()});
    }
  }
  if (results.contains("metrics")) {
    for (const auto& [key, value] : results.at("metrics").items()) {
      report.metrics.emplace_back(key, value.get<double>());
    }
  }
  return report;
}

std::string report_to_csv(const Report& report) {
  std::string out;
  if (report.command == "power" || report.command == "sweep" ||
      !report.power_cells.empty()) {
    bool any_residual = false;
    for (const auto& cell : report.power_cells) {
      any_residual = any_residual || cell.residual_sd.has_value();
    }
    if (any_residual) out += "residual_sd,";
    out += "n_participants,n_items,n_sim,n_converged,power,mc_se\n";
    for (const auto& cell : report.power_cells) {
      if (any_residual) {
        out += (cell.residual_sd.has_value() ? format_double(*cell.residual_sd)
                                             : std::string()) +
               ",";
      }
      out += std::to_string(cell.n_participants) + "," +
             std::to_string(cell.n_items) + "," + std::to_string(cell.n_sim) +
             "," + std::to_string(cell.n_converged) + "," +
             format_double(cell.power) + "," + format_double(cell.mc_se) + "\n";
    }
    return out;
  }
  if (report.fit.has_value()) {
    const FitResult& fit = *report.fit;
    const bool with_ci = !report.fit_cis.empty();
    out += "term,estimate,std_error,t_value";
    if (with_ci) out += ",ci_low,ci_high";
    out += "\n";
    for (const auto& term : fit.terms) {
      out += term + "," + format_double(fit.estimates.at(term)) + "," +
             format_double(fit.std_errors.at(term)) + "," +
             format_double(fit.t_values.at(term));
      if (with_ci) {
        auto it = report.fit_cis.find("fixed:" + term);
        if (it != report.fit_cis.end()) {
          out += "," + format_double(it->second.lo) + "," +
                 format_double(it->second.hi);
        } else {
          out += ",,";
        }
      }
      out += "\n";
    }
    return out;
  }
  if (!report.reliability_rows.empty()) {
    out += "participant_id,odd_mean,even_mean\n";
    for (const auto& row : report.reliability_rows) {
      out += row.participant_id + "," + format_double(row.odd_mean) + "," +
             format_double(row.even_mean) + "\n";
    }
    return out;
  }
  out += "metric,value\n";
  for (const auto& [key, value] : report.metrics) {
    out += key + "," + format_double(value) + "\n";
  }
  return out;
}

void write_report(const Report& report, const std::string& base_path,
                  bool with_json, bool with_csv) {
  if (with_json) atomic_write_file(base_path + ".json", report_to_json(report));
  if (with_csv) atomic_write_file(base_path + ".csv", report_to_csv(report));
}

} // namespace rtpower
