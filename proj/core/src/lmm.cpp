#include "rtpower/lmm.hpp"

#include "rtpower/errors.hpp"
#include "rtpower/nelder_mead.hpp"
#include "rtpower/parallel.hpp"
#include "rtpower/rng.hpp"
#include "rtpower/simulate.hpp"
#include "rtpower/stats.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace rtpower {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kFailedObjective = 1e30;
constexpr double kThetaBound = 1e6;
constexpr double kSingularTol = 1e-4;
constexpr int kMaxQ = 4;

using SmallMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                  kMaxQ, kMaxQ>;
using SmallRhs =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor,
                  kMaxQ, kMaxQ + 1>;

// In-place Cholesky of a small symmetric matrix; lower triangle of a is
// replaced by L. Returns false when a pivot is not positive.
bool small_cholesky(Eigen::Ref<SmallMat> a) {
  const int q = static_cast<int>(a.rows());
  for (int c = 0; c < q; ++c) {
    double d = a(c, c);
    for (int k = 0; k < c; ++k) d -= a(c, k) * a(c, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double root = std::sqrt(d);
    a(c, c) = root;
    for (int r = c + 1; r < q; ++r) {
      double v = a(r, c);
      for (int k = 0; k < c; ++k) v -= a(r, k) * a(c, k);
      a(r, c) = v / root;
    }
  }
  return true;
}

// Solves L x = b in place, column by column; L lower triangular.
template <typename MatA, typename MatB>
void forward_solve_in_place(const MatA& l, MatB&& b) {
  const int q = static_cast<int>(l.rows());
  for (Eigen::Index col = 0; col < b.cols(); ++col) {
    for (int r = 0; r < q; ++r) {
      double v = b(r, col);
      for (int k = 0; k < r; ++k) v -= l(r, k) * b(k, col);
      b(r, col) = v / l(r, r);
    }
  }
}

// Solves x L^T = b in place for every row of b; L lower triangular.
template <typename MatA, typename MatB>
void right_solve_transposed_in_place(const MatA& l, MatB&& b) {
  const int q = static_cast<int>(l.cols());
  for (Eigen::Index row = 0; row < b.rows(); ++row) {
    for (int c = 0; c < q; ++c) {
      double v = b(row, c);
      for (int k = 0; k < c; ++k) v -= b(row, k) * l(c, k);
      b(row, c) = v / l(c, c);
    }
  }
}

} // namespace

ProfiledDevianceEvaluator::ProfiledDevianceEvaluator(const DesignBundle& bundle) {
  n_ = bundle.n();
  p_ = bundle.p();
  criterion_ = bundle.criterion;
  if (bundle.factors.empty()) {
    throw ValidationError("profiled deviance: at least one grouping factor required");
  }
  if (n_ <= p_) {
    throw ValidationError("profiled deviance: more coefficients than observations");
  }

  const int pp1 = p_ + 1;
  factors_.resize(bundle.factors.size());
  theta_dim_ = 0;
  for (std::size_t f = 0; f < bundle.factors.size(); ++f) {
    const auto& src = bundle.factors[f];
    if (src.q() > kMaxQ) {
      throw ValidationError("profiled deviance: more than " +
                            std::to_string(kMaxQ) + " random terms per factor");
    }
    if (src.n_levels() < 2) {
      throw ValidationError("profiled deviance: factor '" + src.name +
                            "' has fewer than 2 levels");
    }
    auto& dst = factors_[f];
    dst.q = src.q();
    dst.levels = src.n_levels();
    dst.gram.assign(dst.levels, Eigen::MatrixXd::Zero(dst.q, dst.q));
    dst.zt_xy = Eigen::MatrixXd::Zero(dst.columns(), pp1);
    dst.theta_offset = theta_dim_;
    theta_dim_ += src.n_params();
  }

  // Block-diagonal ("primary") factor: the one spanning more columns, so the
  // dense Schur complement lands on the smaller side.
  primary_ = 0;
  secondary_ = -1;
  if (factors_.size() == 2) {
    primary_ = factors_[0].columns() >= factors_[1].columns() ? 0 : 1;
    secondary_ = 1 - primary_;
    cross_k_ = Eigen::MatrixXd::Zero(factors_[secondary_].columns(),
                                     factors_[primary_].columns());
  }

  xy_gram_ = Eigen::MatrixXd::Zero(pp1, pp1);

  Eigen::VectorXd xy_row(pp1);
  std::vector<Eigen::VectorXd> zvals(factors_.size());
  for (std::size_t f = 0; f < factors_.size(); ++f) {
    zvals[f].resize(factors_[f].q);
  }

  for (long r = 0; r < n_; ++r) {
    xy_row.head(p_) = bundle.X.row(r);
    xy_row[p_] = bundle.y[r];
    xy_gram_.noalias() += xy_row * xy_row.transpose();

    for (std::size_t f = 0; f < factors_.size(); ++f) {
      const auto& src = bundle.factors[f];
      for (int t = 0; t < factors_[f].q; ++t) {
        zvals[f][t] = bundle.X(r, src.term_cols[t]);
      }
      const int level = src.unit[r];
      factors_[f].gram[level].noalias() += zvals[f] * zvals[f].transpose();
      factors_[f]
          .zt_xy.middleRows(level * factors_[f].q, factors_[f].q)
          .noalias() += zvals[f] * xy_row.transpose();
    }
    if (secondary_ >= 0) {
      const auto& pri = bundle.factors[primary_];
      const auto& sec = bundle.factors[secondary_];
      cross_k_
          .block(sec.unit[r] * factors_[secondary_].q,
                 pri.unit[r] * factors_[primary_].q, factors_[secondary_].q,
                 factors_[primary_].q)
          .noalias() += zvals[secondary_] * zvals[primary_].transpose();
    }
  }

  c_pri_.resize(factors_[primary_].columns(), pp1);
  if (secondary_ >= 0) {
    const int m1 = factors_[secondary_].columns();
    w_.resize(m1, factors_[primary_].columns());
    s_.resize(m1, m1);
    c_sec_.resize(m1, pp1);
  }
}

Eigen::MatrixXd ProfiledDevianceEvaluator::lambda(const Theta& theta,
                                                  int factor) const {
  const auto& f = factors_[factor];
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(f.q, f.q);
  int idx = f.theta_offset;
  for (int c = 0; c < f.q; ++c) {
    for (int r = c; r < f.q; ++r) l(r, c) = theta[idx++];
  }
  return l;
}

double ProfiledDevianceEvaluator::operator()(const Theta& theta) {
  return evaluate(theta, nullptr);
}

ProfiledDevianceEvaluator::Details ProfiledDevianceEvaluator::details(
    const Theta& theta) {
  Details d;
  evaluate(theta, &d);
  return d;
}

double ProfiledDevianceEvaluator::evaluate(const Theta& theta, Details* details) {
  if (theta.size() != theta_dim_) {
    throw ValidationError("profiled deviance: theta has length " +
                          std::to_string(theta.size()) + ", expected " +
                          std::to_string(theta_dim_));
  }
  const int pp1 = p_ + 1;
  const auto& pri = factors_[primary_];
  const int q0 = pri.q;

  const Eigen::MatrixXd lambda_pri = lambda(theta, primary_);
  Eigen::MatrixXd lambda_sec;
  if (secondary_ >= 0) lambda_sec = lambda(theta, secondary_);

  double logdet = 0.0;

  // Primary factor: per-level Cholesky of Lambda' G Lambda + I and forward
  // solve of the stacked [X y] cross products.
  SmallMat a_block(q0, q0);
  SmallRhs rhs_block(q0, pp1);
  Eigen::MatrixXd lb_all(q0, pri.columns());
  for (int level = 0; level < pri.levels; ++level) {
    a_block.noalias() = lambda_pri.transpose() * pri.gram[level] * lambda_pri;
    a_block.diagonal().array() += 1.0;
    if (!small_cholesky(a_block)) {
      throw NumericalError("profiled deviance: primary-block factorization failed");
    }
    for (int c = 0; c < q0; ++c) logdet += 2.0 * std::log(a_block(c, c));
    lb_all.middleCols(level * q0, q0) = a_block;

    rhs_block.noalias() =
        lambda_pri.transpose() * pri.zt_xy.middleRows(level * q0, q0);
    forward_solve_in_place(a_block, rhs_block);
    c_pri_.middleRows(level * q0, q0) = rhs_block;
  }

  if (secondary_ >= 0) {
    const auto& sec = factors_[secondary_];
    const int q1 = sec.q;
    const int m0 = pri.columns();
    const int m1 = sec.columns();

    // L10 = Lambda_sec' K Lambda_pri L00^-T, built in place.
    w_ = cross_k_;
    SmallMat col_tmp;
    for (int level = 0; level < pri.levels; ++level) {
      for (long row = 0; row < m1; ++row) {
        // right-multiply this q0-column stripe by lambda_pri
        double tmp[kMaxQ];
        for (int c = 0; c < q0; ++c) {
          double v = 0.0;
          for (int k = c; k < q0; ++k) {
            v += w_(row, level * q0 + k) * lambda_pri(k, c);
          }
          tmp[c] = v;
        }
        for (int c = 0; c < q0; ++c) w_(row, level * q0 + c) = tmp[c];
      }
    }
    for (int s = 0; s < sec.levels; ++s) {
      // left-multiply this q1-row stripe by lambda_sec'
      for (long col = 0; col < m0; ++col) {
        double tmp[kMaxQ];
        for (int r = 0; r < q1; ++r) {
          double v = 0.0;
          for (int k = r; k < q1; ++k) v += lambda_sec(k, r) * w_(s * q1 + k, col);
          tmp[r] = v;
        }
        for (int r = 0; r < q1; ++r) w_(s * q1 + r, col) = tmp[r];
      }
    }
    for (int level = 0; level < pri.levels; ++level) {
      right_solve_transposed_in_place(lb_all.middleCols(level * q0, q0),
                                      w_.middleCols(level * q0, q0));
    }

    // Schur complement S = A11 - L10 L10', lower triangle.
    s_.setZero();
    SmallMat sec_block(q1, q1);
    for (int s = 0; s < sec.levels; ++s) {
      sec_block.noalias() = lambda_sec.transpose() * sec.gram[s] * lambda_sec;
      sec_block.diagonal().array() += 1.0;
      s_.block(s * q1, s * q1, q1, q1) = sec_block;
    }
    s_.selfadjointView<Eigen::Lower>().rankUpdate(w_, -1.0);

    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(s_);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("profiled deviance: Schur-complement factorization failed");
    }
    for (int i = 0; i < m1; ++i) logdet += 2.0 * std::log(s_(i, i));

    for (int s = 0; s < sec.levels; ++s) {
      c_sec_.middleRows(s * q1, q1).noalias() =
          lambda_sec.transpose() * sec.zt_xy.middleRows(s * q1, q1);
    }
    c_sec_.noalias() -= w_ * c_pri_;
    s_.triangularView<Eigen::Lower>().solveInPlace(c_sec_);
  }

  Eigen::MatrixXd m = xy_gram_;
  m.noalias() -= c_pri_.transpose() * c_pri_;
  if (secondary_ >= 0) m.noalias() -= c_sec_.transpose() * c_sec_;

  SmallMat lx = m.topLeftCorner(p_, p_);
  if (!small_cholesky(lx)) {
    throw NumericalError(
        "profiled deviance: fixed-effect normal equations are singular");
  }
  Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxQ + 1, 1> w_fixed =
      m.block(0, p_, p_, 1);
  forward_solve_in_place(lx, w_fixed);

  const double r2 = m(p_, p_) - w_fixed.squaredNorm();
  if (!(r2 > 0.0) || !std::isfinite(r2)) {
    throw NumericalError("profiled deviance: non-positive residual sum of squares");
  }

  double deviance;
  if (criterion_ == Criterion::ml) {
    deviance = logdet + n_ * (1.0 + std::log(kTwoPi * r2 / n_));
  } else {
    double logdet_rx = 0.0;
    for (int c = 0; c < p_; ++c) logdet_rx += 2.0 * std::log(lx(c, c));
    deviance = logdet + logdet_rx +
               (n_ - p_) * (1.0 + std::log(kTwoPi * r2 / (n_ - p_)));
  }

  if (details) {
    details->deviance = deviance;
    details->r2 = r2;
    const double dof = criterion_ == Criterion::ml ? double(n_) : double(n_ - p_);
    const double sigma2 = r2 / dof;
    details->sigma = std::sqrt(sigma2);

    // beta from the back solve, covariance from (Lx Lx')^-1.
    Eigen::VectorXd beta = w_fixed;
    for (int r = p_ - 1; r >= 0; --r) {
      double v = beta[r];
      for (int k = r + 1; k < p_; ++k) v -= lx(k, r) * beta[k];
      beta[r] = v / lx(r, r);
    }
    details->beta = beta;

    Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(p_, p_);
    forward_solve_in_place(lx, inv);
    details->beta_cov = sigma2 * (inv.transpose() * inv);
  }
  return deviance;
}

double profiled_deviance(const Theta& theta, const DesignBundle& bundle) {
  ProfiledDevianceEvaluator evaluator(bundle);
  return evaluator(theta);
}

Theta default_start_theta(const DesignBundle& bundle) {
  Theta theta = Theta::Zero(bundle.theta_dim());
  int idx = 0;
  for (const auto& f : bundle.factors) {
    for (int c = 0; c < f.q(); ++c) {
      theta[idx] = 0.5; // diagonal entry
      idx += f.q() - c;
    }
  }
  return theta;
}

namespace {

void check_design_rank(const DesignBundle& bundle) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(bundle.X);
  qr.setThreshold(1e-10);
  if (qr.rank() < bundle.p()) {
    for (int c = 0; c < bundle.p(); ++c) {
      if (bundle.X.col(c).cwiseAbs().maxCoeff() == 0.0) {
        throw ValidationError("fit_lmm: design column '" +
                              bundle.fixed_terms[c] + "' is constant zero");
      }
    }
    throw ValidationError("fit_lmm: fixed-effect design matrix is collinear");
  }
}

struct FactorSummary {
  Eigen::VectorXd sds;
  Eigen::MatrixXd corr;
  bool singular = false;
};

FactorSummary summarize_factor(const Eigen::MatrixXd& lambda, double sigma) {
  const int q = static_cast<int>(lambda.rows());
  FactorSummary out;
  out.sds.resize(q);
  out.corr = Eigen::MatrixXd::Identity(q, q);

  Eigen::VectorXd row_norm(q);
  for (int t = 0; t < q; ++t) {
    row_norm[t] = lambda.row(t).norm();
    out.sds[t] = sigma * row_norm[t];
    if (row_norm[t] < kSingularTol) out.singular = true;
  }
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < i; ++j) {
      double rho = 0.0;
      if (row_norm[i] > 0.0 && row_norm[j] > 0.0) {
        rho = lambda.row(i).dot(lambda.row(j)) / (row_norm[i] * row_norm[j]);
        rho = std::clamp(rho, -1.0, 1.0);
        if (std::abs(rho) > 1.0 - kSingularTol) out.singular = true;
      }
      out.corr(i, j) = rho;
      out.corr(j, i) = rho;
    }
  }
  return out;
}

} // namespace

FitResult fit_lmm(const DesignBundle& bundle, const FitOptions& options) {
  for (const auto& f : bundle.factors) {
    if (f.n_levels() < 2) {
      throw ValidationError("fit_lmm: factor '" + f.name +
                            "' has fewer than 2 levels");
    }
  }
  check_design_rank(bundle);

  ProfiledDevianceEvaluator evaluator(bundle);
  const int dim = evaluator.theta_dim();

  Eigen::VectorXd lower = Eigen::VectorXd::Constant(dim, -kThetaBound);
  Eigen::VectorXd upper = Eigen::VectorXd::Constant(dim, kThetaBound);
  {
    int idx = 0;
    for (const auto& f : bundle.factors) {
      for (int c = 0; c < f.q(); ++c) {
        lower[idx] = 0.0;
        idx += f.q() - c;
      }
    }
  }

  auto objective = [&](const Eigen::VectorXd& theta) -> double {
    try {
      return evaluator(theta);
    } catch (const NumericalError&) {
      return kFailedObjective;
    }
  };

  const Theta theta0 = default_start_theta(bundle);
  FitResult result;
  result.criterion = bundle.criterion;
  result.n_obs = bundle.n();

  Eigen::VectorXd best_theta = theta0;
  double best_f = std::numeric_limits<double>::infinity();
  bool any_converged = false;
  long total_evals = 0;

  const int n_restarts = std::max(1, options.n_restarts);
  for (int restart = 0; restart < n_restarts; ++restart) {
    Eigen::VectorXd start = theta0;
    NelderMeadOptions nm;
    nm.f_tol = options.tol;
    nm.x_tol = options.tol;
    // High-dimensional theta (the four-term interaction models reach 13
    // parameters) needs a budget that grows with the dimension.
    nm.max_evals = std::max(options.max_iter, 400L * dim);
    if (restart > 0 && std::isfinite(best_f)) {
      start = best_theta;
      for (int i = 0; i < dim; ++i) {
        const double sign = ((i + restart) % 2 == 0) ? 1.0 : -1.0;
        start[i] += 0.2 * restart * sign;
      }
      start = start.cwiseMax(lower).cwiseMin(upper);
      nm.initial_step = 0.125;
    }

    NelderMeadResult nm_result =
        nelder_mead_minimize(objective, start, lower, upper, nm);
    total_evals += nm_result.evals;

    const bool improved = nm_result.f < best_f;
    const bool agrees =
        std::isfinite(best_f) && std::abs(nm_result.f - best_f) <= options.tol;
    if (improved) {
      best_f = nm_result.f;
      best_theta = nm_result.x;
    }
    any_converged = any_converged || nm_result.converged;

    // Two runs landing on the same deviance confirm the optimum.
    if (restart > 0 && nm_result.converged && agrees) break;
  }

  result.optimizer_evals = total_evals;
  result.status = any_converged ? FitStatus::converged : FitStatus::failed;

  if (!std::isfinite(best_f) || best_f >= kFailedObjective) {
    result.status = FitStatus::failed;
    return result;
  }

  ProfiledDevianceEvaluator::Details details;
  try {
    details = evaluator.details(best_theta);
  } catch (const NumericalError&) {
    result.status = FitStatus::failed;
    return result;
  }

  result.deviance = details.deviance;
  result.terms = bundle.fixed_terms;
  for (int c = 0; c < bundle.p(); ++c) {
    const std::string& term = bundle.fixed_terms[c];
    const double est = details.beta[c];
    const double se = std::sqrt(details.beta_cov(c, c));
    result.estimates[term] = est;
    result.std_errors[term] = se;
    result.t_values[term] = est / se;
  }

  result.varcomp.residual_sd = details.sigma;
  bool singular = false;
  for (std::size_t f = 0; f < bundle.factors.size(); ++f) {
    const auto& src = bundle.factors[f];
    FactorSummary summary = summarize_factor(
        evaluator.lambda(best_theta, static_cast<int>(f)), details.sigma);
    singular = singular || summary.singular;

    RandomStructure rs;
    rs.factor_name = src.name;
    rs.term_names = src.terms;
    rs.sds = summary.sds;
    rs.corr = summary.corr;
    if (src.name == "participant") {
      result.varcomp.by_participant = rs;
    } else {
      result.varcomp.by_item = rs;
    }
  }
  if (result.status == FitStatus::converged && singular) {
    result.status = FitStatus::converged_singular;
  }
  return result;
}

FitResult fit_lmm(const TrialTable& table, const ModelSpec& spec,
                  const ContrastCoding& contrasts, const FitOptions& options) {
  return fit_lmm(build_design(table, spec, contrasts), options);
}

WaldTest wald_test(const FitResult& fit, const std::string& term,
                   double threshold) {
  auto it = fit.t_values.find(term);
  if (it == fit.t_values.end()) {
    throw ValidationError("wald_test: unknown term '" + term + "'");
  }
  WaldTest test;
  test.t = it->second;
  test.significant = std::abs(test.t) >= threshold;
  return test;
}

BootstrapResult parametric_bootstrap(const DesignBundle& bundle,
                                     const FitResult& fit, int n_draws,
                                     std::uint64_t seed, int threads,
                                     const FitOptions& options) {
  if (n_draws < 1) {
    throw ValidationError("parametric_bootstrap: n_draws must be >= 1");
  }
  if (fit.status == FitStatus::failed) {
    throw ValidationError("parametric_bootstrap: cannot resample from a failed fit");
  }

  Eigen::VectorXd beta(bundle.p());
  for (int c = 0; c < bundle.p(); ++c) {
    beta[c] = fit.estimates.at(bundle.fixed_terms[c]);
  }
  const Eigen::VectorXd mean = bundle.X * beta;
  const RngStream master = RngStream(seed).substream(kStreamBootstrap);

  struct DrawResult {
    bool ok = false;
    std::map<std::string, double> values;
  };
  std::vector<DrawResult> draws(n_draws);

  parallel_for(n_draws, threads, [&](long d) {
    const RngStream stream = master.substream(static_cast<std::uint64_t>(d));

    DesignBundle local = bundle;
    local.y = mean;
    for (std::size_t f = 0; f < bundle.factors.size(); ++f) {
      const auto& src = bundle.factors[f];
      const RandomStructure& rs = src.name == "participant"
                                      ? fit.varcomp.by_participant
                                      : fit.varcomp.by_item;
      const Eigen::MatrixXd effects = draw_random_effects(
          rs, src.n_levels(), stream.substream(static_cast<std::uint64_t>(f) + 1));
      for (long r = 0; r < bundle.n(); ++r) {
        double v = 0.0;
        for (int t = 0; t < src.q(); ++t) {
          v += effects(src.unit[r], t) * bundle.X(r, src.term_cols[t]);
        }
        local.y[r] += v;
      }
    }
    Xoshiro256 resid = stream.substream(0).generator();
    for (long r = 0; r < bundle.n(); ++r) {
      local.y[r] += fit.varcomp.residual_sd * resid.next_normal();
    }

    FitResult refit;
    try {
      refit = fit_lmm(local, options);
    } catch (const NumericalError&) {
      return;
    }
    if (refit.status == FitStatus::failed) return;

    auto& values = draws[d].values;
    for (const auto& term : refit.terms) {
      values["fixed:" + term] = refit.estimates.at(term);
    }
    auto add_factor = [&](const RandomStructure& rs) {
      for (int t = 0; t < rs.dim(); ++t) {
        values[rs.factor_name + ":sd:" + rs.term_names[t]] = rs.sds[t];
        for (int u = 0; u < t; ++u) {
          values[rs.factor_name + ":corr:" + rs.term_names[u] + ":" +
                 rs.term_names[t]] = rs.corr(u, t);
        }
      }
    };
    add_factor(refit.varcomp.by_participant);
    add_factor(refit.varcomp.by_item);
    values["residual_sd"] = refit.varcomp.residual_sd;
    draws[d].ok = true;
  });

  BootstrapResult out;
  out.n_draws = n_draws;
  std::map<std::string, std::vector<double>> samples;
  for (const auto& draw : draws) {
    if (!draw.ok) continue;
    ++out.n_converged;
    for (const auto& [key, value] : draw.values) samples[key].push_back(value);
  }
  if (out.n_converged == 0) {
    throw NumericalError("parametric_bootstrap: every bootstrap refit failed");
  }
  for (auto& [key, values] : samples) {
    std::sort(values.begin(), values.end());
    out.intervals[key] = BootstrapCi{quantile_sorted(values, 0.025),
                                     quantile_sorted(values, 0.975)};
  }
  return out;
}

} // namespace rtpower
