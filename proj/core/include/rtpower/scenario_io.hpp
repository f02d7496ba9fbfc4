#pragma once

#include "rtpower/types.hpp"

#include <string>
#include <vector>

namespace rtpower {

// JSON schema: an object with keys fixed, by_participant, by_item,
// residual_sd, contrasts, n_participants, n_items, obs_per_cell. Strict mode
// rejects unknown keys; lax mode collects warnings instead. obs_per_cell
// defaults to 1 when omitted.
Scenario scenario_from_json(const std::string& json_text, bool strict = true,
                            std::vector<std::string>* warnings = nullptr);

std::string scenario_to_json(const Scenario& s);

// Loads and validates; validation violations are reported verbatim.
Scenario load_scenario(const std::string& path, bool strict = true,
                       std::vector<std::string>* warnings = nullptr);

void save_scenario(const Scenario& s, const std::string& path);

// Scenarios bundled with the library (also shipped as files under
// scenarios/): lab_semantic, lab_phonological, online_semantic,
// online_phonological.
const std::vector<std::string>& bundled_scenario_names();
bool is_bundled_scenario(const std::string& name);
const std::string& bundled_scenario_json(const std::string& name);
Scenario bundled_scenario(const std::string& name);

// Resolves a CLI argument: an existing file path is loaded from disk, a
// bundled name from the embedded table; anything else is an IoError.
Scenario resolve_scenario(const std::string& path_or_name, bool strict = true,
                          std::vector<std::string>* warnings = nullptr);

} // namespace rtpower
