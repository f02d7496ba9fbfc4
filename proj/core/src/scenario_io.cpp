#include "rtpower/scenario_io.hpp"

#include "rtpower/errors.hpp"
#include "rtpower/io_util.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>

namespace rtpower {

namespace {

using json = nlohmann::ordered_json;

const std::vector<std::string> kKnownTerms = {
    "intercept", "relatedness", "setting", "setting:relatedness"};

void reject_or_warn(bool strict, std::vector<std::string>* warnings,
                    const std::string& message) {
  if (strict) {
    throw ValidationError(message);
  }
  if (warnings) warnings->push_back(message);
}

void check_keys(const json& object, const std::vector<std::string>& known,
                const std::string& where, bool strict,
                std::vector<std::string>* warnings) {
  for (const auto& [key, value] : object.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      reject_or_warn(strict, warnings, where + ": unknown key '" + key + "'");
    }
  }
}

double require_number(const json& object, const std::string& key,
                      const std::string& where) {
  if (!object.contains(key)) {
    throw ValidationError(where + ": missing key '" + key + "'");
  }
  if (!object[key].is_number()) {
    throw ValidationError(where + ": '" + key + "' must be a number");
  }
  return object[key].get<double>();
}

RandomStructure random_structure_from_json(const json& object,
                                           const std::string& default_name,
                                           bool strict,
                                           std::vector<std::string>* warnings) {
  const std::string where = "scenario." + default_name;
  if (!object.is_object()) {
    throw ValidationError(where + ": must be an object");
  }
  check_keys(object, {"factor_name", "term_names", "sds", "corr"}, where,
             strict, warnings);

  RandomStructure rs;
  rs.factor_name = object.value("factor_name",
                                default_name == "by_participant" ? "participant"
                                                                 : "item");
  if (!object.contains("term_names") || !object["term_names"].is_array()) {
    throw ValidationError(where + ": 'term_names' must be an array of strings");
  }
  for (const auto& t : object["term_names"]) {
    rs.term_names.push_back(t.get<std::string>());
  }
  if (!object.contains("sds") || !object["sds"].is_array()) {
    throw ValidationError(where + ": 'sds' must be an array of numbers");
  }
  rs.sds.resize(static_cast<Eigen::Index>(object["sds"].size()));
  for (Eigen::Index i = 0; i < rs.sds.size(); ++i) {
    rs.sds[i] = object["sds"][static_cast<std::size_t>(i)].get<double>();
  }
  if (!object.contains("corr") || !object["corr"].is_array()) {
    throw ValidationError(where + ": 'corr' must be an array of rows");
  }
  const auto dim = static_cast<Eigen::Index>(object["corr"].size());
  rs.corr.resize(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const auto& row = object["corr"][static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != dim) {
      throw ValidationError(where + ": 'corr' must be square");
    }
    for (Eigen::Index j = 0; j < dim; ++j) {
      rs.corr(i, j) = row[static_cast<std::size_t>(j)].get<double>();
    }
  }
  return rs;
}

json random_structure_to_json(const RandomStructure& rs) {
  json object;
  object["factor_name"] = rs.factor_name;
  object["term_names"] = rs.term_names;
  object["sds"] = json::array();
  for (Eigen::Index i = 0; i < rs.sds.size(); ++i) {
    object["sds"].push_back(rs.sds[i]);
  }
  object["corr"] = json::array();
  for (Eigen::Index i = 0; i < rs.corr.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < rs.corr.cols(); ++j) {
      row.push_back(rs.corr(i, j));
    }
    object["corr"].push_back(std::move(row));
  }
  return object;
}

} // namespace

Scenario scenario_from_json(const std::string& json_text, bool strict,
                            std::vector<std::string>* warnings) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("scenario: JSON parse error: ") + e.what());
  }
  if (!root.is_object()) {
    throw ValidationError("scenario: top level must be an object");
  }
  check_keys(root,
             {"fixed", "by_participant", "by_item", "residual_sd", "contrasts",
              "n_participants", "n_items", "obs_per_cell"},
             "scenario", strict, warnings);

  Scenario s;
  if (!root.contains("fixed") || !root["fixed"].is_object()) {
    throw ValidationError("scenario: 'fixed' must be an object of term -> ms");
  }
  for (const auto& [term, value] : root["fixed"].items()) {
    if (std::find(kKnownTerms.begin(), kKnownTerms.end(), term) ==
        kKnownTerms.end()) {
      reject_or_warn(strict, warnings,
                     "scenario.fixed: unknown term '" + term + "'");
      continue;
    }
    if (!value.is_number()) {
      throw ValidationError("scenario.fixed: '" + term + "' must be a number");
    }
    s.fixed.coefficients[term] = value.get<double>();
  }

  if (!root.contains("by_participant") || !root.contains("by_item")) {
    throw ValidationError(
        "scenario: 'by_participant' and 'by_item' are both required");
  }
  s.by_participant = random_structure_from_json(root["by_participant"],
                                                "by_participant", strict,
                                                warnings);
  s.by_item =
      random_structure_from_json(root["by_item"], "by_item", strict, warnings);

  s.residual_sd = require_number(root, "residual_sd", "scenario");

  if (!root.contains("contrasts") || !root["contrasts"].is_object()) {
    throw ValidationError("scenario: 'contrasts' must be an object");
  }
  const json& contrasts = root["contrasts"];
  check_keys(contrasts, {"related_code", "unrelated_code", "online_code", "lab_code"},
             "scenario.contrasts", strict, warnings);
  s.contrasts.related_code =
      require_number(contrasts, "related_code", "scenario.contrasts");
  s.contrasts.unrelated_code =
      require_number(contrasts, "unrelated_code", "scenario.contrasts");
  if (contrasts.contains("online_code")) {
    s.contrasts.online_code = contrasts["online_code"].get<double>();
  }
  if (contrasts.contains("lab_code")) {
    s.contrasts.lab_code = contrasts["lab_code"].get<double>();
  }

  s.n_participants =
      static_cast<int>(require_number(root, "n_participants", "scenario"));
  s.n_items = static_cast<int>(require_number(root, "n_items", "scenario"));
  s.obs_per_cell = root.contains("obs_per_cell")
                       ? static_cast<int>(
                             require_number(root, "obs_per_cell", "scenario"))
                       : 1;

  auto violations = validate_scenario(s);
  if (!violations.empty()) {
    std::string msg = "scenario: validation failed:";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw ValidationError(msg);
  }
  return s;
}

std::string scenario_to_json(const Scenario& s) {
  json root;
  root["fixed"] = json::object();
  for (const auto& term : kKnownTerms) {
    auto it = s.fixed.coefficients.find(term);
    if (it != s.fixed.coefficients.end()) root["fixed"][term] = it->second;
  }
  root["by_participant"] = random_structure_to_json(s.by_participant);
  root["by_item"] = random_structure_to_json(s.by_item);
  root["residual_sd"] = s.residual_sd;
  root["contrasts"] = json::object();
  root["contrasts"]["related_code"] = s.contrasts.related_code;
  root["contrasts"]["unrelated_code"] = s.contrasts.unrelated_code;
  if (s.contrasts.online_code.has_value()) {
    root["contrasts"]["online_code"] = *s.contrasts.online_code;
  }
  if (s.contrasts.lab_code.has_value()) {
    root["contrasts"]["lab_code"] = *s.contrasts.lab_code;
  }
  root["n_participants"] = s.n_participants;
  root["n_items"] = s.n_items;
  root["obs_per_cell"] = s.obs_per_cell;
  return root.dump(2) + "\n";
}

Scenario load_scenario(const std::string& path, bool strict,
                       std::vector<std::string>* warnings) {
  return scenario_from_json(read_file(path), strict, warnings);
}

void save_scenario(const Scenario& s, const std::string& path) {
  atomic_write_file(path, scenario_to_json(s));
}

namespace {

// Mixed-model estimates from a picture-naming experiment run both in the lab
// and online, one scenario per setting x manipulation, shipped verbatim as
// ready-to-use generative parameterizations.
const std::map<std::string, std::string>& bundled_table() {
  static const std::map<std::string, std::string> table = {
      {"lab_semantic", R"({
  "fixed": { "intercept": 930.84, "relatedness": -59.59 },
  "by_participant": {
    "factor_name": "participant",
    "term_names": ["intercept", "relatedness"],
    "sds": [116.60, 30.20],
    "corr": [[1.0, -0.73], [-0.73, 1.0]]
  },
  "by_item": {
    "factor_name": "item",
    "term_names": ["intercept", "relatedness"],
    "sds": [77.87, 55.38],
    "corr": [[1.0, -0.22], [-0.22, 1.0]]
  },
  "residual_sd": 236.92,
  "contrasts": { "related_code": 0.5, "unrelated_code": -0.5 },
  "n_participants": 45,
  "n_items": 90,
  "obs_per_cell": 1
}
)"},
      {"lab_phonological", R"({
  "fixed": { "intercept": 884.01, "relatedness": 30.85 },
  "by_participant": {
    "factor_name": "participant",
    "term_names": ["intercept", "relatedness"],
    "sds": [112.42, 28.43],
    "corr": [[1.0, -0.11], [-0.11, 1.0]]
  },
  "by_item": {
    "factor_name": "item",
    "term_names": ["intercept", "relatedness"],
    "sds": [76.07, 64.28],
    "corr": [[1.0, -0.07], [-0.07, 1.0]]
  },
  "residual_sd": 223.56,
  "contrasts": { "related_code": 0.5, "unrelated_code": -0.5 },
  "n_participants": 45,
  "n_items": 90,
  "obs_per_cell": 1
}
)"},
      {"online_semantic", R"({
  "fixed": { "intercept": 1193.20, "relatedness": 34.37 },
  "by_participant": {
    "factor_name": "participant",
    "term_names": ["intercept", "relatedness"],
    "sds": [150.69, 11.88],
    "corr": [[1.0, 0.02], [0.02, 1.0]]
  },
  "by_item": {
    "factor_name": "item",
    "term_names": ["intercept", "relatedness"],
    "sds": [76.45, 53.11],
    "corr": [[1.0, -0.44], [-0.44, 1.0]]
  },
  "residual_sd": 272.85,
  "contrasts": { "related_code": 0.5, "unrelated_code": -0.5 },
  "n_participants": 45,
  "n_items": 90,
  "obs_per_cell": 1
}
)"},
      {"online_phonological", R"({
  "fixed": { "intercept": 1177.61, "relatedness": -21.50 },
  "by_participant": {
    "factor_name": "participant",
    "term_names": ["intercept", "relatedness"],
    "sds": [145.71, 20.84],
    "corr": [[1.0, 0.21], [0.21, 1.0]]
  },
  "by_item": {
    "factor_name": "item",
    "term_names": ["intercept", "relatedness"],
    "sds": [74.64, 62.33],
    "corr": [[1.0, -0.34], [-0.34, 1.0]]
  },
  "residual_sd": 264.69,
  "contrasts": { "related_code": 0.5, "unrelated_code": -0.5 },
  "n_participants": 45,
  "n_items": 90,
  "obs_per_cell": 1
}
)"},
  };
  return table;
}

} // namespace

const std::vector<std::string>& bundled_scenario_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, text] : bundled_table()) {
      (void)text;
      out.push_back(name);
    }
    return out;
  }();
  return names;
}

bool is_bundled_scenario(const std::string& name) {
  return bundled_table().count(name) != 0;
}

const std::string& bundled_scenario_json(const std::string& name) {
  auto it = bundled_table().find(name);
  if (it == bundled_table().end()) {
    throw ValidationError("unknown bundled scenario '" + name + "'");
  }
  return it->second;
}

Scenario bundled_scenario(const std::string& name) {
  return scenario_from_json(bundled_scenario_json(name));
}

Scenario resolve_scenario(const std::string& path_or_name, bool strict,
                          std::vector<std::string>* warnings) {
  if (std::filesystem::exists(path_or_name)) {
    return load_scenario(path_or_name, strict, warnings);
  }
  if (is_bundled_scenario(path_or_name)) {
    return bundled_scenario(path_or_name);
  }
  throw IoError("scenario '" + path_or_name +
                "' is neither a file nor a bundled scenario name (bundled: "
                "lab_semantic, lab_phonological, online_semantic, "
                "online_phonological)");
}

} // namespace rtpower
