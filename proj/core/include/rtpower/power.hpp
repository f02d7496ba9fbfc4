#pragma once

#include "rtpower/lmm.hpp"
#include "rtpower/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rtpower {

enum class FailurePolicy {
  exclude, // failed fits leave the denominator (default)
  nonsig,  // failed fits count as non-significant over n_sim
};

const char* to_string(FailurePolicy p);

struct PowerGridRequest {
  Scenario base;
  std::vector<int> participants; // strictly increasing
  std::vector<int> items;        // strictly increasing
  int n_sim = 500;
  double threshold = 1.96;
  std::uint64_t base_seed = 0;
  Criterion criterion = Criterion::reml;
  FailurePolicy failures = FailurePolicy::exclude;
  // Replaces the by-participant slope sd (e.g. with a descriptive estimate).
  std::optional<double> participant_slope_sd;
  // Residual-sd sweep values, used by residual_sweep only; strictly increasing.
  std::vector<double> residual_sds;
  // Sensitivity switch: zero all random-effect correlations before simulating.
  bool zero_correlations = false;
  FitOptions fit_options;
};

struct PowerResult {
  std::vector<PowerCell> cells;
  std::vector<std::string> warnings;
};

// Monte Carlo power over the participants x items grid. For each cell,
// simulates n_sim datasets from the base scenario with the sizes overridden,
// fits the model matching the generative structure, and Wald-tests the
// relatedness term at the given threshold. Replicate r of cell (i, j) uses a
// substream derived from (base_seed, i, j, r), so the counts are identical
// for any thread count and execution order. Cells where fewer than 90% of
// fits converge are flagged in warnings, not failed.
PowerResult power_curve(const PowerGridRequest& req, int threads = 0);

// Power as a function of residual sd at fixed (n_participants, n_items)
// taken from the grids (each must contain exactly one value). One cell per
// residual sd, keyed via PowerCell::residual_sd.
PowerResult residual_sweep(const PowerGridRequest& req, int threads = 0);

} // namespace rtpower
