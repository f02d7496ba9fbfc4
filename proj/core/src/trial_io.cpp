#include "rtpower/trial_io.hpp"

#include "rtpower/errors.hpp"
#include "rtpower/io_util.hpp"

#include <algorithm>
#include <charconv>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace rtpower {

namespace {

// Minimal RFC-4180-ish parsing: quoted fields may contain commas and
// doubled quotes. Newlines inside quotes are not supported.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string csv_escape(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::optional<double> parse_double(const std::string& text) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

std::optional<long> parse_long(const std::string& text) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  long value = 0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

} // namespace

TrialTable trials_from_csv(const std::string& csv_text,
                           const TrialCsvOptions& options) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError("trial CSV: empty input, header row required");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto column_name = [&](const std::string& field) {
    auto it = options.column_map.find(field);
    return it != options.column_map.end() ? it->second : field;
  };

  const std::vector<std::string> header = split_csv_line(line);
  std::unordered_map<std::string, int> column_of;
  for (std::size_t c = 0; c < header.size(); ++c) {
    column_of[header[c]] = static_cast<int>(c);
  }
  auto find_column = [&](const std::string& field, bool required) -> int {
    const std::string name = column_name(field);
    auto it = column_of.find(name);
    if (it == column_of.end()) {
      if (required) {
        throw ValidationError("trial CSV: missing required column '" + name + "'");
      }
      return -1;
    }
    return it->second;
  };

  const int col_participant = find_column("participant_id", true);
  const int col_item = find_column("item_id", true);
  const int col_condition = find_column("condition", true);
  const int col_rt = find_column("rt_ms", true);
  const int col_setting = find_column("setting", false);
  const int col_trial_index = find_column("trial_index", false);
  const int col_correct = find_column("correct", false);

  TrialTable table;
  std::vector<long> bad_rt_rows;
  std::unordered_set<std::string> order_keys; // setting|participant|trial_index
  long row_number = 0;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row_number;
    const std::vector<std::string> fields = split_csv_line(line);
    auto field_at = [&](int col) -> const std::string& {
      static const std::string empty;
      if (col < 0 || col >= static_cast<int>(fields.size())) return empty;
      return fields[col];
    };

    Trial trial;
    trial.participant_id = field_at(col_participant);
    trial.item_id = field_at(col_item);
    if (trial.participant_id.empty() || trial.item_id.empty()) {
      throw ValidationError("trial CSV: row " + std::to_string(row_number) +
                            ": participant_id and item_id must be non-empty");
    }

    const std::string& condition = field_at(col_condition);
    if (condition == "related") {
      trial.condition = Condition::related;
    } else if (condition == "unrelated") {
      trial.condition = Condition::unrelated;
    } else {
      throw ValidationError("trial CSV: row " + std::to_string(row_number) +
                            ": unknown condition label '" + condition +
                            "' (expected 'related' or 'unrelated')");
    }

    if (col_setting >= 0 && !field_at(col_setting).empty()) {
      const std::string& setting = field_at(col_setting);
      if (setting == "lab") {
        trial.setting = Setting::lab;
      } else if (setting == "online") {
        trial.setting = Setting::online;
      } else {
        throw ValidationError("trial CSV: row " + std::to_string(row_number) +
                              ": unknown setting label '" + setting +
                              "' (expected 'lab' or 'online')");
      }
    }

    if (col_trial_index >= 0 && !field_at(col_trial_index).empty()) {
      const auto idx = parse_long(field_at(col_trial_index));
      if (!idx.has_value() || *idx <= 0) {
        throw ValidationError("trial CSV: row " + std::to_string(row_number) +
                              ": trial_index '" + field_at(col_trial_index) +
                              "' is not a positive integer");
      }
      trial.trial_index = static_cast<int>(*idx);
      const std::string key =
          (trial.setting.has_value() ? std::string(to_string(*trial.setting))
                                     : std::string()) +
          "|" + trial.participant_id + "|" + std::to_string(*idx);
      if (!order_keys.insert(key).second) {
        throw ValidationError("trial CSV: row " + std::to_string(row_number) +
                              ": duplicate trial for participant '" +
                              trial.participant_id + "' at trial_index " +
                              std::to_string(*idx));
      }
    }

    const auto rt = parse_double(field_at(col_rt));
    if (!rt.has_value()) {
      throw ValidationError("trial CSV: row " + std::to_string(row_number) +
                            ": rt_ms '" + field_at(col_rt) +
                            "' is not a number");
    }
    trial.rt_ms = *rt;
    if (!options.allow_nonpositive_rt && !(*rt > 0.0)) {
      bad_rt_rows.push_back(row_number);
    }

    if (col_correct >= 0 && !field_at(col_correct).empty()) {
      const std::string value = lower(field_at(col_correct));
      if (value == "1" || value == "true") {
        trial.correct = true;
      } else if (value == "0" || value == "false") {
        trial.correct = false;
      } else {
        throw ValidationError("trial CSV: row " + std::to_string(row_number) +
                              ": correct '" + field_at(col_correct) +
                              "' is not a boolean (1/0/true/false)");
      }
    }

    table.rows.push_back(std::move(trial));
  }

  if (!bad_rt_rows.empty()) {
    std::string msg = "trial CSV: non-positive rt_ms rejected on row";
    if (bad_rt_rows.size() > 1) msg += "s";
    msg += " ";
    const std::size_t shown = std::min<std::size_t>(bad_rt_rows.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) {
      if (i) msg += ", ";
      msg += std::to_string(bad_rt_rows[i]);
    }
    if (bad_rt_rows.size() > shown) {
      msg += " and " + std::to_string(bad_rt_rows.size() - shown) + " more";
    }
    throw ValidationError(msg);
  }
  return table;
}

TrialTable load_trials(const std::string& path, const TrialCsvOptions& options) {
  return trials_from_csv(read_file(path), options);
}

std::string trials_to_csv(const TrialTable& table) {
  bool any_setting = false, any_index = false, any_correct = false;
  for (const auto& row : table.rows) {
    any_setting = any_setting || row.setting.has_value();
    any_index = any_index || row.trial_index.has_value();
    any_correct = any_correct || row.correct.has_value();
  }

  std::string out = "participant_id,item_id,condition";
  if (any_setting) out += ",setting";
  if (any_index) out += ",trial_index";
  out += ",rt_ms";
  if (any_correct) out += ",correct";
  out += "\n";

  for (const auto& row : table.rows) {
    out += csv_escape(row.participant_id);
    out += ',';
    out += csv_escape(row.item_id);
    out += ',';
    out += to_string(row.condition);
    if (any_setting) {
      out += ',';
      if (row.setting.has_value()) out += to_string(*row.setting);
    }
    if (any_index) {
      out += ',';
      if (row.trial_index.has_value()) out += std::to_string(*row.trial_index);
    }
    out += ',';
    out += format_double(row.rt_ms);
    if (any_correct) {
      out += ',';
      if (row.correct.has_value()) out += *row.correct ? "1" : "0";
    }
    out += '\n';
  }
  return out;
}

void write_trials(const TrialTable& table, const std::string& path) {
  atomic_write_file(path, trials_to_csv(table));
}

} // namespace rtpower
