#pragma once

#include <Eigen/Dense>

#include <functional>

namespace rtpower {

// Box-constrained Nelder-Mead simplex minimizer. Candidate points are
// projected onto [lower, upper] before evaluation. Terminates when both the
// spread of function values and the spread of vertices across the simplex
// fall below the tolerances, or when the evaluation budget is exhausted.
struct NelderMeadOptions {
  double f_tol = 1e-6;
  double x_tol = 1e-6;
  long max_evals = 2000;
  double initial_step = 0.25;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double f = 0.0;
  long evals = 0;
  bool converged = false;
};

NelderMeadResult nelder_mead_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& start, const Eigen::VectorXd& lower,
    const Eigen::VectorXd& upper, const NelderMeadOptions& options);

} // namespace rtpower
