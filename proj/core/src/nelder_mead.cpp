#include "rtpower/nelder_mead.hpp"

#include "rtpower/errors.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace rtpower {

namespace {

Eigen::VectorXd project(Eigen::VectorXd x, const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

} // namespace

NelderMeadResult nelder_mead_minimize(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& start, const Eigen::VectorXd& lower,
    const Eigen::VectorXd& upper, const NelderMeadOptions& options) {
  const int dim = static_cast<int>(start.size());
  if (dim == 0 || lower.size() != dim || upper.size() != dim) {
    throw ValidationError("nelder_mead: inconsistent dimensions");
  }

  NelderMeadResult result;
  result.evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++result.evals;
    return objective(x);
  };

  // Initial simplex: start plus a step along each coordinate, stepping away
  // from whichever bound is closer.
  std::vector<Eigen::VectorXd> vertex(dim + 1);
  std::vector<double> value(dim + 1);
  vertex[0] = project(start, lower, upper);
  value[0] = eval(vertex[0]);
  for (int i = 0; i < dim; ++i) {
    Eigen::VectorXd v = vertex[0];
    double step = options.initial_step;
    if (v[i] + step > upper[i]) step = -step;
    v[i] = std::clamp(v[i] + step, lower[i], upper[i]);
    if (v[i] == vertex[0][i]) v[i] = std::clamp(v[i] + 0.5 * step, lower[i], upper[i]);
    vertex[i + 1] = v;
    value[i + 1] = eval(v);
  }

  std::vector<int> order(dim + 1);
  std::iota(order.begin(), order.end(), 0);

  auto sort_simplex = [&] {
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return value[a] < value[b]; });
  };

  while (result.evals < options.max_evals) {
    sort_simplex();
    const int best = order[0];
    const int worst = order[dim];
    const int second_worst = order[dim - 1];

    double f_spread = value[worst] - value[best];
    double x_spread = 0.0;
    for (int i = 1; i <= dim; ++i) {
      x_spread = std::max(
          x_spread, (vertex[order[i]] - vertex[best]).cwiseAbs().maxCoeff());
    }
    if (f_spread <= options.f_tol && x_spread <= options.x_tol) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < dim; ++i) centroid += vertex[order[i]];
    centroid /= dim;

    const Eigen::VectorXd reflected =
        project(centroid + (centroid - vertex[worst]), lower, upper);
    const double f_reflected = eval(reflected);

    if (f_reflected < value[best]) {
      const Eigen::VectorXd expanded =
          project(centroid + 2.0 * (centroid - vertex[worst]), lower, upper);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        vertex[worst] = expanded;
        value[worst] = f_expanded;
      } else {
        vertex[worst] = reflected;
        value[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < value[second_worst]) {
      vertex[worst] = reflected;
      value[worst] = f_reflected;
      continue;
    }

    if (f_reflected < value[worst]) {
      // outside contraction
      const Eigen::VectorXd contracted =
          project(centroid + 0.5 * (reflected - centroid), lower, upper);
      const double f_contracted = eval(contracted);
      if (f_contracted <= f_reflected) {
        vertex[worst] = contracted;
        value[worst] = f_contracted;
        continue;
      }
    } else {
      // inside contraction
      const Eigen::VectorXd contracted =
          project(centroid - 0.5 * (centroid - vertex[worst]), lower, upper);
      const double f_contracted = eval(contracted);
      if (f_contracted < value[worst]) {
        vertex[worst] = contracted;
        value[worst] = f_contracted;
        continue;
      }
    }

    // shrink toward the best vertex
    for (int i = 1; i <= dim; ++i) {
      const int v = order[i];
      vertex[v] = project(vertex[best] + 0.5 * (vertex[v] - vertex[best]),
                          lower, upper);
      value[v] = eval(vertex[v]);
      if (result.evals >= options.max_evals) break;
    }
  }

  sort_simplex();
  result.x = vertex[order[0]];
  result.f = value[order[0]];
  return result;
}

} // namespace rtpower
