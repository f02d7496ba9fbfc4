#pragma once

#include "rtpower/types.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace rtpower {

// Model formula: which fixed effects enter X and which of them get a random
// deviation per level of each grouping factor.
struct ModelSpec {
  std::vector<std::string> fixed_terms; // must contain "intercept"
  // factor name ("participant" | "item") -> ordered term labels, each of
  // which must also be a fixed term.
  std::map<std::string, std::vector<std::string>> random_terms;
  Criterion criterion = Criterion::reml;

  // Spec for the standard single-manipulation model: intercept + relatedness
  // as fixed effects, random intercepts and slopes for both factors.
  static ModelSpec relatedness_model(Criterion criterion = Criterion::reml);

  // Two-setting model with the setting main effect and interaction. Items
  // cross settings, so they carry all four random terms; participants are
  // nested in setting and carry intercept + relatedness only.
  static ModelSpec setting_interaction_model(Criterion criterion = Criterion::reml);

  // Spec matching a scenario's generative structure exactly.
  static ModelSpec matching(const Scenario& s, Criterion criterion);
};

// Fixed-effect matrix, response vector and per-factor random-effect
// incidence structure for one dataset. Random-term design values equal the
// fixed-term columns of the same label, so factors store column indices
// into X rather than separate Z matrices.
struct DesignBundle {
  struct Factor {
    std::string name;
    std::vector<std::string> terms;
    std::vector<int> term_cols;      // X column of each term
    std::vector<std::string> levels; // labels, first-appearance order
    std::vector<int> unit;           // per row: level index
    int q() const { return static_cast<int>(terms.size()); }
    int n_levels() const { return static_cast<int>(levels.size()); }
    int n_params() const { return q() * (q() + 1) / 2; } // theta block size
  };

  std::vector<std::string> fixed_terms;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<Factor> factors; // participant first when present, then item
  Criterion criterion = Criterion::reml;

  long n() const { return X.rows(); }
  int p() const { return static_cast<int>(X.cols()); }
  int theta_dim() const;
};

// Assembles the design bundle. Throws ValidationError on an empty table, a
// malformed spec, or a requested term whose column is absent from the data
// (e.g. a setting term when no row carries a setting).
DesignBundle build_design(const TrialTable& table, const ModelSpec& spec,
                          const ContrastCoding& contrasts);

} // namespace rtpower
