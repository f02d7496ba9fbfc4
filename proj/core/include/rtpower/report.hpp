#pragma once

#include "rtpower/lmm.hpp"
#include "rtpower/types.hpp"
#include "rtpower/variability.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rtpower {

struct InputDigest {
  std::string path;
  std::string fnv1a64;
};

// Everything needed to reproduce and consume a CLI run: the command, the
// seed and option echo, input digests, and one results payload. JSON
// serialization is lossless for every numeric field; CSV is the flat results
// table only.
struct Report {
  std::string command;
  std::string tool_version;
  std::uint64_t base_seed = 0;
  std::vector<std::pair<std::string, std::string>> options;
  std::vector<InputDigest> inputs;
  double wall_ms = 0.0;
  std::vector<std::string> warnings;

  // payloads; whichever the command produced
  std::vector<PowerCell> power_cells;
  std::optional<FitResult> fit;
  std::map<std::string, BootstrapCi> fit_cis;
  std::vector<ParticipantHalves> reliability_rows;
  std::vector<std::pair<std::string, double>> metrics;
};

std::string report_to_json(const Report& report);
Report report_from_json(const std::string& json_text);
std::string report_to_csv(const Report& report);

// Writes <base_path>.json and/or <base_path>.csv atomically.
void write_report(const Report& report, const std::string& base_path,
                  bool with_json, bool with_csv);

} // namespace rtpower
