#include "rtpower/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace rtpower {

namespace {

constexpr double kPsdTolerance = 1e-8;

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

} // namespace

Eigen::MatrixXd RandomStructure::covariance() const {
  const Eigen::VectorXd& s = sds;
  return s.asDiagonal() * corr * s.asDiagonal();
}

std::vector<std::string> RandomStructure::validate() const {
  std::vector<std::string> violations;
  const std::string who = factor_name.empty() ? "random structure" : factor_name;
  const auto n = static_cast<Eigen::Index>(term_names.size());

  if (sds.size() != n || corr.rows() != n || corr.cols() != n) {
    violations.push_back(who + ": term_names, sds and corr dimensions disagree (" +
                         std::to_string(term_names.size()) + " terms, " +
                         std::to_string(sds.size()) + " sds, " +
                         std::to_string(corr.rows()) + "x" +
                         std::to_string(corr.cols()) + " corr)");
    return violations; // remaining checks assume consistent shapes
  }
  if (n == 0) {
    violations.push_back(who + ": at least one term is required");
    return violations;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(sds[i] >= 0.0) || !std::isfinite(sds[i])) {
      violations.push_back(who + ": sd for term '" + term_names[i] +
                           "' must be >= 0 (got " + fmt(sds[i]) + ")");
    }
  }

  bool bounds_ok = true;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(corr(i, i) - 1.0) > 1e-12) {
      violations.push_back(who + ": correlation diagonal entry " +
                           std::to_string(i) + " is " + fmt(corr(i, i)) +
                           ", must be 1");
      bounds_ok = false;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (corr(i, j) < -1.0 || corr(i, j) > 1.0 || !std::isfinite(corr(i, j))) {
        violations.push_back(who + ": correlation (" + std::to_string(i) + "," +
                             std::to_string(j) + ") = " + fmt(corr(i, j)) +
                             " outside [-1, 1]");
        bounds_ok = false;
      }
      if (std::abs(corr(i, j) - corr(j, i)) > 1e-12) {
        violations.push_back(who + ": correlation matrix is not symmetric at (" +
                             std::to_string(i) + "," + std::to_string(j) + ")");
        bounds_ok = false;
      }
    }
  }

  if (bounds_ok && n > 1) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
    if (eig.info() == Eigen::Success &&
        eig.eigenvalues().minCoeff() < -kPsdTolerance) {
      violations.push_back(who + ": correlation matrix is not positive semi-definite "
                           "(smallest eigenvalue " +
                           fmt(eig.eigenvalues().minCoeff()) + ")");
    }
  }

  std::unordered_set<std::string> seen;
  for (const auto& t : term_names) {
    if (!seen.insert(t).second) {
      violations.push_back(who + ": duplicate term name '" + t + "'");
    }
  }

  return violations;
}

std::vector<std::string> validate_scenario(const Scenario& s) {
  std::vector<std::string> violations;

  if (!s.fixed.has("intercept")) {
    violations.push_back("fixed effects must include an 'intercept' term");
  }

  auto check_terms = [&](const RandomStructure& rs) {
    for (const auto& t : rs.term_names) {
      if (t != "intercept" && !s.fixed.has(t)) {
        violations.push_back(rs.factor_name + ": random term '" + t +
                             "' has no matching fixed-effect coefficient");
      }
    }
  };

  for (const auto* rs : {&s.by_participant, &s.by_item}) {
    auto v = rs->validate();
    violations.insert(violations.end(), v.begin(), v.end());
    check_terms(*rs);
  }

  if (!(s.residual_sd > 0.0) || !std::isfinite(s.residual_sd)) {
    violations.push_back("residual_sd must be > 0 (got " + fmt(s.residual_sd) + ")");
  }
  if (s.n_participants < 2) {
    violations.push_back("n_participants must be >= 2 (got " +
                         std::to_string(s.n_participants) + ")");
  }
  if (s.n_items < 2) {
    violations.push_back("n_items must be >= 2 (got " +
                         std::to_string(s.n_items) + ")");
  }
  if (s.obs_per_cell < 1) {
    violations.push_back("obs_per_cell must be >= 1 (got " +
                         std::to_string(s.obs_per_cell) + ")");
  }
  if (s.contrasts.related_code == s.contrasts.unrelated_code) {
    violations.push_back("contrasts: related_code and unrelated_code must differ");
  }

  return violations;
}

const char* to_string(Condition c) {
  return c == Condition::related ? "related" : "unrelated";
}

const char* to_string(Setting s) {
  return s == Setting::lab ? "lab" : "online";
}

const char* to_string(Criterion c) {
  return c == Criterion::reml ? "reml" : "ml";
}

const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::converged: return "converged";
    case FitStatus::converged_singular: return "converged_singular";
    default: return "failed";
  }
}

namespace {

std::vector<std::string> levels_of(const std::vector<Trial>& rows,
                                   const std::string Trial::*field) {
  std::vector<std::string> levels;
  std::unordered_set<std::string> seen;
  for (const auto& r : rows) {
    if (seen.insert(r.*field).second) levels.push_back(r.*field);
  }
  return levels;
}

} // namespace

std::vector<std::string> TrialTable::participant_levels() const {
  return levels_of(rows, &Trial::participant_id);
}

std::vector<std::string> TrialTable::item_levels() const {
  return levels_of(rows, &Trial::item_id);
}

TrialTable TrialTable::without_errors() const {
  TrialTable out;
  out.rows.reserve(rows.size());
  for (const auto& r : rows) {
    if (!r.correct.has_value() || *r.correct) out.rows.push_back(r);
  }
  return out;
}

} // namespace rtpower
