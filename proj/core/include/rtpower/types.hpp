#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rtpower {

// ---------------------------------------------------------------------------
// Generative model description
// ---------------------------------------------------------------------------

// Random-effect structure of one grouping factor: a standard deviation (ms)
// per term plus the correlation matrix over terms.
struct RandomStructure {
  std::string factor_name;              // "participant" or "item"
  std::vector<std::string> term_names;  // e.g. {"intercept", "relatedness"}
  Eigen::VectorXd sds;                  // one per term, ms
  Eigen::MatrixXd corr;                 // square, unit diagonal

  int dim() const { return static_cast<int>(term_names.size()); }

  // diag(sds) * corr * diag(sds)
  Eigen::MatrixXd covariance() const;

  // Violations of the structural invariants (empty when valid). PSD is
  // checked with a 1e-8 tolerance on the smallest eigenvalue.
  std::vector<std::string> validate() const;
};

struct FixedEffects {
  // Term label -> coefficient in ms. Must contain "intercept"; recognized
  // additional terms are "relatedness", "setting", "setting:relatedness".
  std::map<std::string, double> coefficients;

  bool has(const std::string& term) const {
    return coefficients.count(term) != 0;
  }
};

struct ContrastCoding {
  double related_code = 0.5;
  double unrelated_code = -0.5;
  std::optional<double> online_code;
  std::optional<double> lab_code;

  double condition_code(bool related) const {
    return related ? related_code : unrelated_code;
  }
  // Defaults mirror the usual sum coding when a setting term is requested
  // but the file did not specify codes.
  double setting_code(bool online) const {
    if (online) return online_code.value_or(0.5);
    return lab_code.value_or(-0.5);
  }
};

// Complete generative parameterization for one setting/manipulation.
struct Scenario {
  FixedEffects fixed;
  RandomStructure by_participant;
  RandomStructure by_item;
  double residual_sd = 0.0; // ms
  ContrastCoding contrasts;
  int n_participants = 0;
  int n_items = 0;
  int obs_per_cell = 1; // observations per participant x item x condition
};

// Returns every violated invariant as a human-readable description; empty
// means the scenario is valid. Never throws, never mutates.
std::vector<std::string> validate_scenario(const Scenario& s);

// ---------------------------------------------------------------------------
// Trial-level data
// ---------------------------------------------------------------------------

enum class Condition { related, unrelated };
enum class Setting { lab, online };

const char* to_string(Condition c);
const char* to_string(Setting s);

struct Trial {
  std::string participant_id;
  std::string item_id;
  Condition condition = Condition::unrelated;
  std::optional<Setting> setting;
  std::optional<int> trial_index; // presentation order within participant, 1-based
  double rt_ms = 0.0;
  std::optional<bool> correct;
};

struct TrialTable {
  std::vector<Trial> rows;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }

  // Distinct labels in order of first appearance.
  std::vector<std::string> participant_levels() const;
  std::vector<std::string> item_levels() const;

  // Copy without rows flagged correct == false.
  TrialTable without_errors() const;
};

// ---------------------------------------------------------------------------
// Fit output
// ---------------------------------------------------------------------------

enum class Criterion { reml, ml };
enum class FitStatus { converged, converged_singular, failed };

const char* to_string(Criterion c);
const char* to_string(FitStatus s);

struct VarianceComponents {
  RandomStructure by_participant;
  RandomStructure by_item;
  double residual_sd = 0.0;
};

struct FitResult {
  std::vector<std::string> terms; // fixed-effect order
  std::map<std::string, double> estimates;  // ms
  std::map<std::string, double> std_errors; // ms
  std::map<std::string, double> t_values;
  VarianceComponents varcomp;
  double deviance = 0.0;
  Criterion criterion = Criterion::reml;
  FitStatus status = FitStatus::failed;
  long n_obs = 0;
  long optimizer_evals = 0;
};

// ---------------------------------------------------------------------------
// Power estimates
// ---------------------------------------------------------------------------

struct PowerCell {
  int n_participants = 0;
  int n_items = 0;
  std::optional<double> residual_sd; // set by residual sweeps
  int n_sim = 0;
  int n_converged = 0;
  int n_significant = 0;
  double power = 0.0;
  double mc_se = 0.0;
};

} // namespace rtpower
