#pragma once

#include "rtpower/types.hpp"

#include <map>
#include <string>

namespace rtpower {

struct TrialCsvOptions {
  // Schema field -> column name in the file, for datasets with different
  // headers (e.g. {"participant_id", "subject"}).
  std::map<std::string, std::string> column_map;
  // Simulated data can contain extreme-tail negative RTs; real data cannot.
  bool allow_nonpositive_rt = false;
};

// Long-format trial CSV. Required columns: participant_id, item_id,
// condition ("related" | "unrelated"), rt_ms. Optional: setting
// ("lab" | "online"), trial_index (positive integer), correct (1/0 or
// true/false). Row numbers in error messages count data rows, 1-based.
TrialTable load_trials(const std::string& path,
                       const TrialCsvOptions& options = {});
TrialTable trials_from_csv(const std::string& csv_text,
                           const TrialCsvOptions& options = {});

std::string trials_to_csv(const TrialTable& table);
void write_trials(const TrialTable& table, const std::string& path);

} // namespace rtpower
