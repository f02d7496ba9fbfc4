#include "rtpower/errors.hpp"
#include "rtpower/lmm.hpp"
#include "rtpower/rng.hpp"
#include "rtpower/scenario_io.hpp"
#include "rtpower/simulate.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <random>

using namespace rtpower;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Direct evaluation of the profiled deviance through the explicit n x n
// marginal covariance V0 = I + sum_f Z_f G_f Z_f'. Deliberately shares
// nothing with the blocked implementation beyond the theta packing
// convention.
double dense_profiled_deviance(const DesignBundle& bundle, const Theta& theta,
                               Criterion criterion) {
  const long n = bundle.n();
  const int p = bundle.p();

  Eigen::MatrixXd v0 = Eigen::MatrixXd::Identity(n, n);
  int offset = 0;
  for (const auto& factor : bundle.factors) {
    const int q = factor.q();
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(q, q);
    for (int c = 0; c < q; ++c) {
      for (int r = c; r < q; ++r) lambda(r, c) = theta[offset++];
    }
    const Eigen::MatrixXd g = lambda * lambda.transpose();
    for (long r = 0; r < n; ++r) {
      for (long s = 0; s < n; ++s) {
        if (factor.unit[r] != factor.unit[s]) continue;
        double value = 0.0;
        for (int a = 0; a < q; ++a) {
          for (int b = 0; b < q; ++b) {
            value += bundle.X(r, factor.term_cols[a]) * g(a, b) *
                     bundle.X(s, factor.term_cols[b]);
          }
        }
        v0(r, s) += value;
      }
    }
  }

  const Eigen::LLT<Eigen::MatrixXd> llt(v0);
  REQUIRE(llt.info() == Eigen::Success);
  double logdet_v = 0.0;
  for (long i = 0; i < n; ++i) {
    logdet_v += 2.0 * std::log(llt.matrixLLT()(i, i));
  }

  const Eigen::MatrixXd vinv_x = llt.solve(bundle.X);
  const Eigen::VectorXd vinv_y = llt.solve(bundle.y);
  const Eigen::MatrixXd xtvx = bundle.X.transpose() * vinv_x;
  const Eigen::VectorXd beta =
      xtvx.ldlt().solve(bundle.X.transpose() * vinv_y);
  const Eigen::VectorXd resid = bundle.y - bundle.X * beta;
  const double r2 = resid.dot(llt.solve(resid));

  if (criterion == Criterion::ml) {
    return logdet_v + n * (1.0 + std::log(kTwoPi * r2 / n));
  }
  return logdet_v + std::log(xtvx.determinant()) +
         (n - p) * (1.0 + std::log(kTwoPi * r2 / (n - p)));
}

Scenario small_scenario(int n_participants, int n_items) {
  Scenario s = bundled_scenario("lab_phonological");
  s.n_participants = n_participants;
  s.n_items = n_items;
  return s;
}

DesignBundle bundle_for(const TrialTable& table, Criterion criterion) {
  return build_design(table, ModelSpec::relatedness_model(criterion),
                      ContrastCoding{});
}

struct Ols {
  Eigen::VectorXd beta;
  double rss = 0.0;
  double sigma = 0.0;
};

Ols ols_fit(const DesignBundle& bundle) {
  Ols out;
  out.beta = bundle.X.householderQr().solve(bundle.y);
  out.rss = (bundle.y - bundle.X * out.beta).squaredNorm();
  out.sigma = std::sqrt(out.rss / (bundle.n() - bundle.p()));
  return out;
}

} // namespace

TEST_CASE("build_design counts columns and levels") {
  Scenario s = small_scenario(2, 2);
  const TrialTable table = simulate_trials(s, 3);
  const DesignBundle bundle = bundle_for(table, Criterion::reml);

  CHECK(bundle.X.rows() == 8);
  CHECK(bundle.X.cols() == 2);
  for (long r = 0; r < bundle.n(); ++r) {
    CHECK(bundle.X(r, 0) == 1.0);
    CHECK(std::abs(bundle.X(r, 1)) == 0.5);
  }
  REQUIRE(bundle.factors.size() == 2);
  CHECK(bundle.factors[0].name == "participant");
  CHECK(bundle.factors[0].n_levels() == 2);
  CHECK(bundle.factors[0].q() == 2); // 4 random-effect columns per the 2 levels
  CHECK(bundle.factors[0].n_levels() * bundle.factors[0].q() == 4);
}

TEST_CASE("build_design full interaction model on a two-setting table") {
  // 2 settings x 2 participants x 2 items x 2 conditions, enumerated by hand
  TrialTable table;
  int idx = 0;
  for (Setting setting : {Setting::lab, Setting::online}) {
    for (const char* pid : {"pa", "pb"}) {
      for (const char* iid : {"ia", "ib"}) {
        for (Condition cond : {Condition::related, Condition::unrelated}) {
          Trial t;
          t.participant_id = std::string(to_string(setting)) + ":" + pid;
          t.item_id = iid;
          t.condition = cond;
          t.setting = setting;
          t.trial_index = ++idx;
          t.rt_ms = 800.0 + idx;
          table.rows.push_back(t);
        }
      }
    }
  }

  const DesignBundle bundle = build_design(
      table, ModelSpec::setting_interaction_model(Criterion::reml),
      ContrastCoding{});
  CHECK(bundle.X.cols() == 4);
  CHECK(bundle.X.rows() == 16);
  // row 0: lab, related -> [1, 0.5, -0.5, -0.25]
  CHECK(bundle.X(0, 0) == 1.0);
  CHECK(bundle.X(0, 1) == 0.5);
  CHECK(bundle.X(0, 2) == -0.5);
  CHECK(bundle.X(0, 3) == -0.25);
  // last row: online, unrelated -> [1, -0.5, 0.5, -0.25]
  CHECK(bundle.X(15, 1) == -0.5);
  CHECK(bundle.X(15, 2) == 0.5);
  CHECK(bundle.X(15, 3) == -0.25);

  // by-item random structure carries all four terms
  REQUIRE(bundle.factors.size() == 2);
  CHECK(bundle.factors[1].name == "item");
  CHECK(bundle.factors[1].q() == 4);
  CHECK(bundle.factors[0].q() == 2);
}

TEST_CASE("build_design reports a missing setting column") {
  const TrialTable table = simulate_trials(small_scenario(2, 2), 4);
  CHECK_THROWS_WITH_AS(
      build_design(table, ModelSpec::setting_interaction_model(Criterion::reml),
                   ContrastCoding{}),
      doctest::Contains("setting"), ValidationError);
}

TEST_CASE("profiled deviance at theta zero equals the OLS deviance") {
  const TrialTable table = simulate_trials(small_scenario(6, 6), 21);
  for (Criterion criterion : {Criterion::ml, Criterion::reml}) {
    const DesignBundle bundle = bundle_for(table, criterion);
    const Ols ols = ols_fit(bundle);
    const long n = bundle.n();
    const int p = bundle.p();

    double expected;
    if (criterion == Criterion::ml) {
      expected = n * (1.0 + std::log(kTwoPi * ols.rss / n));
    } else {
      const Eigen::MatrixXd xtx = bundle.X.transpose() * bundle.X;
      expected = std::log(xtx.determinant()) +
                 (n - p) * (1.0 + std::log(kTwoPi * ols.rss / (n - p)));
    }
    const double at_zero =
        profiled_deviance(Theta::Zero(bundle.theta_dim()), bundle);
    CHECK(at_zero == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("profiled deviance matches the dense marginal-covariance oracle") {
  Xoshiro256 gen(4242);
  for (int dataset = 0; dataset < 4; ++dataset) {
    const TrialTable table =
        simulate_trials(small_scenario(3, 3), 100 + dataset);
    for (Criterion criterion : {Criterion::ml, Criterion::reml}) {
      const DesignBundle bundle = bundle_for(table, criterion);
      ProfiledDevianceEvaluator evaluator(bundle);
      for (int trial = 0; trial < 12; ++trial) {
        Theta theta(bundle.theta_dim());
        for (int i = 0; i < theta.size(); ++i) {
          theta[i] = gen.next_normal() * 0.8;
        }
        // diagonal entries must be nonnegative
        int offset = 0;
        for (const auto& factor : bundle.factors) {
          for (int c = 0; c < factor.q(); ++c) {
            theta[offset] = std::abs(theta[offset]);
            offset += factor.q() - c;
          }
        }
        const double fast = evaluator(theta);
        const double dense = dense_profiled_deviance(bundle, theta, criterion);
        CHECK(fast == doctest::Approx(dense).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("deviance is invariant to row permutation") {
  const TrialTable table = simulate_trials(small_scenario(4, 5), 9);
  TrialTable shuffled = table;
  std::mt19937 urbg(17);
  std::shuffle(shuffled.rows.begin(), shuffled.rows.end(), urbg);

  const DesignBundle a = bundle_for(table, Criterion::reml);
  const DesignBundle b = bundle_for(shuffled, Criterion::reml);
  const Theta theta = default_start_theta(a);
  const double da = profiled_deviance(theta, a);
  const double db = profiled_deviance(theta, b);
  CHECK(da == doctest::Approx(db).epsilon(1e-9));
}

TEST_CASE("theta mismatch and numerical failures are reported") {
  const TrialTable table = simulate_trials(small_scenario(3, 3), 12);
  const DesignBundle bundle = bundle_for(table, Criterion::reml);
  ProfiledDevianceEvaluator evaluator(bundle);
  CHECK_THROWS_AS(evaluator(Theta::Zero(2)), ValidationError);
}

TEST_CASE("fit on zero-variance data reduces to OLS and is flagged singular") {
  Scenario s = small_scenario(20, 20);
  s.by_participant.sds.setZero();
  s.by_item.sds.setZero();
  s.residual_sd = 50.0;
  const TrialTable table = simulate_trials(s, 31);
  const DesignBundle bundle = bundle_for(table, Criterion::reml);
  const Ols ols = ols_fit(bundle);

  const FitResult fit = fit_lmm(bundle);
  REQUIRE(fit.status == FitStatus::converged_singular);
  CHECK(std::abs(fit.estimates.at("intercept") - ols.beta[0]) < 1e-3);
  CHECK(std::abs(fit.estimates.at("relatedness") - ols.beta[1]) < 1e-3);
  // REML positive-part noise keeps some fitted sds a few ms above zero at
  // this size; they must stay far below the residual scale and the optimum
  // must not be worse than the all-zero theta.
  CHECK(fit.varcomp.by_participant.sds.maxCoeff() < 15.0);
  CHECK(fit.varcomp.by_item.sds.maxCoeff() < 15.0);
  ProfiledDevianceEvaluator evaluator(bundle);
  CHECK(fit.deviance <= evaluator(Theta::Zero(bundle.theta_dim())) + 1e-9);
}

TEST_CASE("REML and ML fixed effects agree when variances are zero") {
  Scenario s = small_scenario(10, 10);
  s.by_participant.sds.setZero();
  s.by_item.sds.setZero();
  s.residual_sd = 40.0;
  const TrialTable table = simulate_trials(s, 8);
  const FitResult reml = fit_lmm(bundle_for(table, Criterion::reml));
  const FitResult ml = fit_lmm(bundle_for(table, Criterion::ml));
  for (const auto& term : reml.terms) {
    CHECK(std::abs(reml.estimates.at(term) - ml.estimates.at(term)) < 1e-6);
  }
}

TEST_CASE("moderate-size fit recovers the generating parameters") {
  const Scenario s = small_scenario(24, 40);
  const TrialTable table = simulate_trials(s, 2718);
  const FitResult fit = fit_lmm(bundle_for(table, Criterion::reml));
  REQUIRE(fit.status != FitStatus::failed);
  CHECK(std::abs(fit.estimates.at("intercept") - 884.01) < 80.0);
  CHECK(std::abs(fit.varcomp.residual_sd - 223.56) / 223.56 < 0.08);
  // t values are estimates over standard errors, exactly
  for (const auto& term : fit.terms) {
    const double ratio = fit.estimates.at(term) / fit.std_errors.at(term);
    CHECK(std::abs(fit.t_values.at(term) - ratio) <=
          1e-10 * std::max(1.0, std::abs(ratio)));
  }
}

TEST_CASE("scale equivariance: rts times c scale every ms quantity by c") {
  const double c = 2.0;
  const TrialTable table = simulate_trials(small_scenario(8, 8), 55);
  TrialTable scaled = table;
  for (auto& row : scaled.rows) row.rt_ms *= c;

  const FitResult base = fit_lmm(bundle_for(table, Criterion::reml));
  const FitResult times = fit_lmm(bundle_for(scaled, Criterion::reml));
  REQUIRE(base.status != FitStatus::failed);
  for (const auto& term : base.terms) {
    CHECK(times.estimates.at(term) ==
          doctest::Approx(c * base.estimates.at(term)).epsilon(1e-8));
    CHECK(times.t_values.at(term) ==
          doctest::Approx(base.t_values.at(term)).epsilon(1e-8));
  }
  CHECK(times.varcomp.residual_sd ==
        doctest::Approx(c * base.varcomp.residual_sd).epsilon(1e-8));
  for (int t = 0; t < 2; ++t) {
    CHECK(times.varcomp.by_participant.sds[t] ==
          doctest::Approx(c * base.varcomp.by_participant.sds[t])
              .epsilon(1e-8));
    CHECK(times.varcomp.by_item.sds[t] ==
          doctest::Approx(c * base.varcomp.by_item.sds[t]).epsilon(1e-8));
  }
}

TEST_CASE("shift equivariance: adding c moves only the intercept") {
  const double c = 100.0;
  const TrialTable table = simulate_trials(small_scenario(8, 8), 56);
  TrialTable shifted = table;
  for (auto& row : shifted.rows) row.rt_ms += c;

  const FitResult base = fit_lmm(bundle_for(table, Criterion::reml));
  const FitResult plus = fit_lmm(bundle_for(shifted, Criterion::reml));
  CHECK(plus.estimates.at("intercept") - base.estimates.at("intercept") ==
        doctest::Approx(c).epsilon(1e-8));
  CHECK(plus.estimates.at("relatedness") ==
        doctest::Approx(base.estimates.at("relatedness")).epsilon(1e-8));
  CHECK(plus.varcomp.residual_sd ==
        doctest::Approx(base.varcomp.residual_sd).epsilon(1e-8));
}

TEST_CASE("degenerate designs are reported as validation errors") {
  // all trials in one condition: the relatedness column is constant and
  // collinear with the intercept
  TrialTable table;
  for (int p = 0; p < 3; ++p) {
    for (int i = 0; i < 3; ++i) {
      Trial t;
      t.participant_id = "p" + std::to_string(p);
      t.item_id = "i" + std::to_string(i);
      t.condition = Condition::related;
      t.rt_ms = 700.0 + 10.0 * p + i;
      table.rows.push_back(t);
    }
  }
  CHECK_THROWS_AS(fit_lmm(bundle_for(table, Criterion::reml)), ValidationError);
}

TEST_CASE("fewer than two levels per factor is rejected") {
  TrialTable table;
  for (int i = 0; i < 6; ++i) {
    Trial t;
    t.participant_id = "p0";
    t.item_id = "i" + std::to_string(i % 3);
    t.condition = i % 2 == 0 ? Condition::related : Condition::unrelated;
    t.rt_ms = 650.0 + i;
    table.rows.push_back(t);
  }
  CHECK_THROWS_WITH_AS(fit_lmm(bundle_for(table, Criterion::reml)),
                       doctest::Contains("fewer than 2 levels"),
                       ValidationError);
}

TEST_CASE("wald test thresholds and errors") {
  FitResult fit;
  fit.terms = {"relatedness"};
  fit.estimates["relatedness"] = 30.85;
  fit.std_errors["relatedness"] = 9.64;
  fit.t_values["relatedness"] = 30.85 / 9.64;

  const WaldTest test = wald_test(fit, "relatedness");
  CHECK(test.t == doctest::Approx(3.20).epsilon(0.005));
  CHECK(test.significant);

  fit.t_values["relatedness"] = 1.95;
  CHECK_FALSE(wald_test(fit, "relatedness", 1.96).significant);
  fit.t_values["relatedness"] = -2.50;
  CHECK(wald_test(fit, "relatedness", 1.96).significant);

  CHECK_THROWS_AS(wald_test(fit, "setting"), ValidationError);
}

TEST_CASE("the four-term interaction model fits a pooled two-setting table") {
  // 13 theta parameters: 3 by-participant, 10 by-item
  TrialTable pooled;
  int tag = 0;
  for (const char* name : {"lab_semantic", "online_semantic"}) {
    Scenario s = bundled_scenario(name);
    s.n_participants = 12;
    s.n_items = 20;
    const TrialTable part = simulate_trials(s, 600 + tag);
    const Setting setting = tag == 0 ? Setting::lab : Setting::online;
    for (Trial row : part.rows) {
      row.setting = setting;
      row.participant_id = std::string(to_string(setting)) + ":" +
                           row.participant_id;
      pooled.rows.push_back(std::move(row));
    }
    ++tag;
  }

  const FitResult fit =
      fit_lmm(pooled, ModelSpec::setting_interaction_model(Criterion::reml),
              ContrastCoding{});
  REQUIRE(fit.status != FitStatus::failed);
  REQUIRE(fit.terms.size() == 4);
  // the generating setting gap is 1193.20 - 930.84
  CHECK(fit.estimates.at("setting") == doctest::Approx(262.36).epsilon(0.5));
  CHECK(fit.varcomp.by_item.dim() == 4);
  CHECK(fit.varcomp.by_participant.dim() == 2);
}

TEST_CASE("parametric bootstrap is centered on the generating fit") {
  const Scenario s = small_scenario(8, 10);
  const TrialTable table = simulate_trials(s, 99);
  const DesignBundle bundle = bundle_for(table, Criterion::reml);
  const FitResult fit = fit_lmm(bundle);
  REQUIRE(fit.status != FitStatus::failed);

  FitOptions quick;
  quick.n_restarts = 1;
  const BootstrapResult boot =
      parametric_bootstrap(bundle, fit, 200, 1234, 1, quick);
  CHECK(boot.n_converged > 180);

  const BootstrapCi rel = boot.intervals.at("fixed:relatedness");
  CHECK(rel.lo < fit.estimates.at("relatedness"));
  CHECK(rel.hi > fit.estimates.at("relatedness"));
  const BootstrapCi resid = boot.intervals.at("residual_sd");
  CHECK(resid.lo < fit.varcomp.residual_sd);
  CHECK(resid.hi > fit.varcomp.residual_sd);

  // identical seed, different thread count: identical intervals
  const BootstrapResult boot3 =
      parametric_bootstrap(bundle, fit, 200, 1234, 3, quick);
  CHECK(boot3.intervals.at("fixed:relatedness").lo == rel.lo);
  CHECK(boot3.intervals.at("fixed:relatedness").hi == rel.hi);
}
