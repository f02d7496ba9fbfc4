#include "rtpower/power.hpp"

#include "rtpower/errors.hpp"
#include "rtpower/parallel.hpp"
#include "rtpower/rng.hpp"
#include "rtpower/simulate.hpp"

#include <cmath>
#include <string>

namespace rtpower {

const char* to_string(FailurePolicy p) {
  return p == FailurePolicy::exclude ? "exclude" : "nonsig";
}

namespace {

enum class Outcome : unsigned char { failed = 0, nonsignificant = 1, significant = 2 };

void validate_request(const PowerGridRequest& req, bool sweep) {
  auto violations = validate_scenario(req.base);
  if (!violations.empty()) {
    std::string msg = "power request: invalid base scenario:";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw ValidationError(msg);
  }
  if (!req.base.fixed.has("relatedness")) {
    throw ValidationError(
        "power request: base scenario has no 'relatedness' coefficient to test");
  }
  // Simulated tables carry no setting column, so a scenario with setting
  // terms cannot be refit with its matching model.
  for (const auto& [term, value] : req.base.fixed.coefficients) {
    (void)value;
    if (term != "intercept" && term != "relatedness") {
      throw ValidationError("power request: scenario term '" + term +
                            "' is not supported in power simulation "
                            "(single-setting scenarios only)");
    }
  }
  if (req.n_sim < 1) {
    throw ValidationError("power request: n_sim must be >= 1");
  }
  auto check_increasing = [](const auto& values, const char* name) {
    if (values.empty()) {
      throw ValidationError(std::string("power request: ") + name +
                            " list must be non-empty");
    }
    for (std::size_t i = 1; i < values.size(); ++i) {
      if (!(values[i] > values[i - 1])) {
        throw ValidationError(std::string("power request: ") + name +
                              " list must be strictly increasing");
      }
    }
  };
  check_increasing(req.participants, "participants");
  check_increasing(req.items, "items");
  if (sweep) {
    check_increasing(req.residual_sds, "residual_sds");
    for (double sd : req.residual_sds) {
      if (!(sd > 0.0)) {
        throw ValidationError("power request: residual sds must be > 0");
      }
    }
    if (req.participants.size() != 1 || req.items.size() != 1) {
      throw ValidationError(
          "residual sweep: participants and items must each contain exactly "
          "one value");
    }
  }
}

Scenario scenario_for_cell(const PowerGridRequest& req, int n_participants,
                           int n_items, std::optional<double> residual_sd) {
  Scenario s = req.base;
  s.n_participants = n_participants;
  s.n_items = n_items;
  if (residual_sd.has_value()) s.residual_sd = *residual_sd;
  if (req.participant_slope_sd.has_value()) {
    for (int t = 0; t < s.by_participant.dim(); ++t) {
      if (s.by_participant.term_names[t] == "relatedness") {
        s.by_participant.sds[t] = *req.participant_slope_sd;
      }
    }
  }
  if (req.zero_correlations) {
    for (RandomStructure* rs : {&s.by_participant, &s.by_item}) {
      rs->corr = Eigen::MatrixXd::Identity(rs->dim(), rs->dim());
    }
  }
  return s;
}

Outcome run_replicate(const Scenario& s, const PowerGridRequest& req,
                      std::uint64_t seed) {
  const TrialTable table = simulate_trials(s, seed);
  const ModelSpec spec = ModelSpec::matching(s, req.criterion);
  FitResult fit;
  try {
    fit = fit_lmm(table, spec, s.contrasts, req.fit_options);
  } catch (const NumericalError&) {
    return Outcome::failed;
  }
  if (fit.status == FitStatus::failed) return Outcome::failed;
  return wald_test(fit, "relatedness", req.threshold).significant
             ? Outcome::significant
             : Outcome::nonsignificant;
}

PowerCell make_cell(const PowerGridRequest& req,
                    const std::vector<Outcome>& outcomes, int n_participants,
                    int n_items, std::optional<double> residual_sd,
                    std::vector<std::string>& warnings) {
  PowerCell cell;
  cell.n_participants = n_participants;
  cell.n_items = n_items;
  cell.residual_sd = residual_sd;
  cell.n_sim = req.n_sim;
  for (Outcome o : outcomes) {
    if (o != Outcome::failed) ++cell.n_converged;
    if (o == Outcome::significant) ++cell.n_significant;
  }

  const int denom = req.failures == FailurePolicy::exclude ? cell.n_converged
                                                           : cell.n_sim;
  if (denom > 0) {
    cell.power = static_cast<double>(cell.n_significant) / denom;
    cell.mc_se = std::sqrt(cell.power * (1.0 - cell.power) / denom);
  }

  if (cell.n_converged < 0.9 * cell.n_sim) {
    std::string where = "cell (" + std::to_string(n_participants) + " x " +
                        std::to_string(n_items) + ")";
    if (residual_sd.has_value()) {
      where += " residual_sd " + std::to_string(*residual_sd);
    }
    warnings.push_back(where + ": only " + std::to_string(cell.n_converged) +
                       " of " + std::to_string(cell.n_sim) + " fits converged");
  }
  return cell;
}

} // namespace

PowerResult power_curve(const PowerGridRequest& req, int threads) {
  validate_request(req, false);

  const long n_cells =
      static_cast<long>(req.participants.size()) * req.items.size();
  const long n_tasks = n_cells * req.n_sim;
  std::vector<Outcome> outcomes(n_tasks, Outcome::failed);
  const RngStream master = RngStream(req.base_seed).substream(kStreamPowerCell);

  // Scenarios per cell are cheap; build once up front.
  std::vector<Scenario> scenarios;
  scenarios.reserve(n_cells);
  for (int n_p : req.participants) {
    for (int n_i : req.items) {
      scenarios.push_back(scenario_for_cell(req, n_p, n_i, std::nullopt));
    }
  }

  parallel_for(n_tasks, threads, [&](long task) {
    const long cell = task / req.n_sim;
    const long rep = task % req.n_sim;
    const long i = cell / static_cast<long>(req.items.size());
    const long j = cell % static_cast<long>(req.items.size());
    const std::uint64_t seed = master.substream(static_cast<std::uint64_t>(i))
                                   .substream(static_cast<std::uint64_t>(j))
                                   .substream(static_cast<std::uint64_t>(rep))
                                   .key();
    outcomes[task] = run_replicate(scenarios[cell], req, seed);
  });

  PowerResult result;
  long cell = 0;
  for (std::size_t i = 0; i < req.participants.size(); ++i) {
    for (std::size_t j = 0; j < req.items.size(); ++j, ++cell) {
      const std::vector<Outcome> slice(
          outcomes.begin() + cell * req.n_sim,
          outcomes.begin() + (cell + 1) * req.n_sim);
      result.cells.push_back(make_cell(req, slice, req.participants[i],
                                       req.items[j], std::nullopt,
                                       result.warnings));
    }
  }
  return result;
}

PowerResult residual_sweep(const PowerGridRequest& req, int threads) {
  validate_request(req, true);

  const int n_p = req.participants.front();
  const int n_i = req.items.front();
  const long n_cells = static_cast<long>(req.residual_sds.size());
  const long n_tasks = n_cells * req.n_sim;
  std::vector<Outcome> outcomes(n_tasks, Outcome::failed);
  const RngStream master =
      RngStream(req.base_seed).substream(kStreamResidualSweep);

  std::vector<Scenario> scenarios;
  scenarios.reserve(n_cells);
  for (double sd : req.residual_sds) {
    scenarios.push_back(scenario_for_cell(req, n_p, n_i, sd));
  }

  parallel_for(n_tasks, threads, [&](long task) {
    const long cell = task / req.n_sim;
    const long rep = task % req.n_sim;
    const std::uint64_t seed = master.substream(static_cast<std::uint64_t>(cell))
                                   .substream(static_cast<std::uint64_t>(rep))
                                   .key();
    outcomes[task] = run_replicate(scenarios[cell], req, seed);
  });

  PowerResult result;
  for (long cell = 0; cell < n_cells; ++cell) {
    const std::vector<Outcome> slice(outcomes.begin() + cell * req.n_sim,
                                     outcomes.begin() + (cell + 1) * req.n_sim);
    result.cells.push_back(make_cell(req, slice, n_p, n_i,
                                     req.residual_sds[cell], result.warnings));
  }
  return result;
}

} // namespace rtpower
