#include "rtpower/scenario_io.hpp"
#include "rtpower/types.hpp"

#include <doctest.h>

#include <string>

using namespace rtpower;

namespace {

bool any_violation_mentions(const std::vector<std::string>& violations,
                            const std::string& needle) {
  for (const auto& v : violations) {
    if (v.find(needle) != std::string::npos) return true;
  }
  return false;
}

} // namespace

TEST_CASE("bundled scenarios are valid") {
  for (const auto& name : bundled_scenario_names()) {
    const Scenario s = bundled_scenario(name);
    CHECK(validate_scenario(s).empty());
  }
}

TEST_CASE("zero residual sd is a single named violation") {
  Scenario s = bundled_scenario("lab_phonological");
  s.residual_sd = 0.0;
  const auto violations = validate_scenario(s);
  REQUIRE(violations.size() == 1);
  CHECK(violations.front().find("residual_sd") != std::string::npos);
}

TEST_CASE("correlation entries outside [-1, 1] are rejected") {
  Scenario s = bundled_scenario("lab_phonological");
  s.by_participant.corr(0, 1) = 1.2;
  s.by_participant.corr(1, 0) = 1.2;
  const auto violations = validate_scenario(s);
  CHECK(any_violation_mentions(violations, "[-1, 1]"));
}

TEST_CASE("negative sds and malformed shapes are rejected") {
  Scenario s = bundled_scenario("lab_semantic");
  s.by_item.sds[1] = -3.0;
  CHECK(any_violation_mentions(validate_scenario(s), "must be >= 0"));

  Scenario mismatched = bundled_scenario("lab_semantic");
  mismatched.by_item.sds.resize(3);
  CHECK(any_violation_mentions(validate_scenario(mismatched), "disagree"));
}

TEST_CASE("all-zero sds denote a valid deterministic factor") {
  Scenario s = bundled_scenario("lab_phonological");
  s.by_participant.sds.setZero();
  s.by_item.sds.setZero();
  CHECK(validate_scenario(s).empty());
}

TEST_CASE("PSD check uses an eigenvalue tolerance") {
  RandomStructure rs;
  rs.factor_name = "item";
  rs.term_names = {"intercept", "relatedness", "setting"};
  rs.sds = Eigen::VectorXd::Constant(3, 10.0);
  rs.corr = Eigen::MatrixXd::Identity(3, 3);
  rs.corr(0, 1) = rs.corr(1, 0) = 0.9;
  rs.corr(1, 2) = rs.corr(2, 1) = 0.9;
  rs.corr(0, 2) = rs.corr(2, 0) = -0.9; // eigenvalue well below 0
  CHECK(any_violation_mentions(rs.validate(), "positive semi-definite"));

  // boundary case: |corr| = 1 is singular but PSD
  RandomStructure boundary;
  boundary.factor_name = "participant";
  boundary.term_names = {"intercept", "relatedness"};
  boundary.sds = Eigen::VectorXd::Constant(2, 5.0);
  boundary.corr = Eigen::MatrixXd::Ones(2, 2);
  CHECK(boundary.validate().empty());
}

TEST_CASE("random terms must have fixed-effect coefficients") {
  Scenario s = bundled_scenario("lab_phonological");
  s.fixed.coefficients.erase("relatedness");
  CHECK(any_violation_mentions(validate_scenario(s),
                               "no matching fixed-effect coefficient"));
}

TEST_CASE("validate_scenario does not mutate its input") {
  const Scenario s = bundled_scenario("online_semantic");
  const std::string before = scenario_to_json(s);
  (void)validate_scenario(s);
  CHECK(scenario_to_json(s) == before);
}

TEST_CASE("error-trial filter keeps rows without a correct flag") {
  TrialTable table;
  Trial t;
  t.participant_id = "p1";
  t.item_id = "i1";
  t.rt_ms = 500.0;
  table.rows.push_back(t);
  t.correct = false;
  table.rows.push_back(t);
  t.correct = true;
  table.rows.push_back(t);
  CHECK(table.without_errors().size() == 2);
}
