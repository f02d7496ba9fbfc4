#pragma once

#include "rtpower/design.hpp"
#include "rtpower/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rtpower {

// Theta packs the per-factor lower-triangular relative-covariance factors
// (random-effect covariance divided by the residual variance), column-major
// within each factor, factors in bundle order. Diagonal entries are >= 0.
using Theta = Eigen::VectorXd;

// Evaluates the profiled ML/REML deviance: fixed effects and the residual
// scale are concentrated out, leaving theta as the only free parameter.
// Cross-products of the design are computed once at construction; each
// evaluation then costs O(m^2) in the random-effect dimension via a blocked
// Cholesky that exploits the block-diagonal structure of the larger factor.
class ProfiledDevianceEvaluator {
public:
  explicit ProfiledDevianceEvaluator(const DesignBundle& bundle);

  // Deviance at theta. Throws NumericalError when an inner factorization
  // fails (reported, never a silent NaN).
  double operator()(const Theta& theta);

  struct Details {
    double deviance = 0.0;
    Eigen::VectorXd beta;
    Eigen::MatrixXd beta_cov; // sigma^2 * (X' V0^-1 X)^-1
    double sigma = 0.0;       // residual sd
    double r2 = 0.0;          // penalized residual sum of squares
  };
  Details details(const Theta& theta);

  int theta_dim() const { return theta_dim_; }
  long n() const { return n_; }
  int p() const { return p_; }

  // Relative covariance factor of one grouping factor (bundle order).
  Eigen::MatrixXd lambda(const Theta& theta, int factor) const;

private:
  struct FactorBlocks {
    int q = 0;
    int levels = 0;
    std::vector<Eigen::MatrixXd> gram;  // per level: q x q
    Eigen::MatrixXd zt_xy;              // (q * levels) x (p + 1)
    int theta_offset = 0;
    int columns() const { return q * levels; }
  };

  double evaluate(const Theta& theta, Details* details);

  long n_ = 0;
  int p_ = 0;
  int theta_dim_ = 0;
  Criterion criterion_ = Criterion::reml;
  std::vector<FactorBlocks> factors_; // bundle order
  int primary_ = 0;                   // block-diagonal factor (larger)
  int secondary_ = -1;                // Schur-complement factor, -1 if absent
  Eigen::MatrixXd cross_k_;           // Z_sec' Z_pri
  Eigen::MatrixXd xy_gram_;           // [X y]' [X y]

  // workspace, sized once
  Eigen::MatrixXd w_;       // L10
  Eigen::MatrixXd s_;       // Schur complement
  Eigen::MatrixXd c_pri_;   // forward-solved primary rhs
  Eigen::MatrixXd c_sec_;
};

// Convenience wrapper matching the operation signature; prefer the
// evaluator when calling repeatedly on one design.
double profiled_deviance(const Theta& theta, const DesignBundle& bundle);

struct FitOptions {
  // Objective-evaluation budget per restart; raised automatically to
  // 400 x theta-dimension for high-dimensional random structures.
  long max_iter = 2000;
  double tol = 1e-6; // deviance and parameter spread tolerance
  int n_restarts = 3;
};

// Default optimizer start: relative sds at 0.5 (i.e. sds at half the OLS
// residual sd), correlations at zero.
Theta default_start_theta(const DesignBundle& bundle);

// Maximum-likelihood / REML fit by derivative-free bound-constrained search
// over theta. Throws ValidationError for degenerate designs (a constant-zero
// or collinear X column, or fewer than 2 levels in a grouping factor);
// optimizer non-convergence is reported through FitResult::status instead.
FitResult fit_lmm(const DesignBundle& bundle, const FitOptions& options = {});
FitResult fit_lmm(const TrialTable& table, const ModelSpec& spec,
                  const ContrastCoding& contrasts, const FitOptions& options = {});

struct WaldTest {
  double t = 0.0;
  bool significant = false;
};

// Two-sided Wald test: significant iff |t| >= threshold.
WaldTest wald_test(const FitResult& fit, const std::string& term,
                   double threshold = 1.96);

// Percentile confidence intervals by parametric bootstrap: simulate from the
// fitted model on the same design, refit, take quantiles. Draw d uses a
// substream derived from (seed, d), so results are independent of thread
// count.
struct BootstrapCi {
  double lo = 0.0;
  double hi = 0.0;
};

struct BootstrapResult {
  std::map<std::string, BootstrapCi> intervals; // keys like "fixed:relatedness"
  int n_draws = 0;
  int n_converged = 0;
};

BootstrapResult parametric_bootstrap(const DesignBundle& bundle,
                                     const FitResult& fit, int n_draws,
                                     std::uint64_t seed, int threads = 1,
                                     const FitOptions& options = {});

} // namespace rtpower
