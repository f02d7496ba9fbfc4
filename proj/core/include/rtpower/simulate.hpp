#pragma once

#include "rtpower/rng.hpp"
#include "rtpower/types.hpp"

#include <Eigen/Dense>

#include <cstdint>

namespace rtpower {

// Factor F of a covariance matrix such that F * F^T == cov, for simulating
// multivariate normals. Uses a Cholesky factorization when the matrix is
// positive definite and falls back to an eigenvalue-clipped square root for
// PSD-but-singular matrices (sd of zero, |correlation| of 1). Throws
// NumericalError when the matrix is indefinite beyond tolerance.
Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& cov);

// n_units x dim matrix of random-effect draws for one grouping factor.
// Row j is drawn from substream j of `stream`, so the result for unit j does
// not depend on n_units or on any other unit.
Eigen::MatrixXd draw_random_effects(const RandomStructure& rs, int n_units,
                                    const RngStream& stream);

// Synthetic trials under the generative model
//   rt = sum_t beta_t x_t + sum_t u_{p,t} x_t + sum_t v_{i,t} x_t + eps
// with x the contrast-coded design values, u/v the participant/item effects
// and eps ~ Normal(0, residual_sd). Every participant sees every item in
// both conditions, obs_per_cell times. trial_index is a seeded shuffle of
// each participant's rows. Deterministic function of (scenario, seed).
// Negative RTs in extreme tails are retained, not truncated.
TrialTable simulate_trials(const Scenario& s, std::uint64_t seed);

} // namespace rtpower
