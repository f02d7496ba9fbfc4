#include "rtpower/stats.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace rtpower;

namespace {

// Composite-Simpson quadrature oracle for the F CDF, independent of the
// continued-fraction implementation. The df1 == 1 density has an integrable
// singularity at 0; the substitution x = s^2 turns it into the smooth
// integrand 2 C (1 + s^2/df2)^{-(1+df2)/2}, evaluated in closed form so the
// s = 0 endpoint carries its true limit value.
double f_cdf_by_quadrature(double f, double df1, double df2, long intervals) {
  if (intervals % 2 == 1) ++intervals;
  auto simpson = [&](auto&& g, double a, double b) {
    const double h = (b - a) / intervals;
    double sum = g(a) + g(b);
    for (long i = 1; i < intervals; ++i) {
      sum += g(a + i * h) * ((i % 2 == 1) ? 4.0 : 2.0);
    }
    return sum * h / 3.0;
  };
  if (df1 == 1.0) {
    const double log_c = 0.5 * std::log(1.0 / df2) - log_beta(0.5, df2 / 2.0);
    auto integrand = [&](double s) {
      return 2.0 * std::exp(log_c -
                            0.5 * (1.0 + df2) * std::log1p(s * s / df2));
    };
    return simpson(integrand, 0.0, std::sqrt(f));
  }
  auto integrand = [&](double x) { return f_pdf(x, df1, df2); };
  return simpson(integrand, 0.0, f);
}

} // namespace

TEST_CASE("incomplete beta basics") {
  CHECK(regularized_incomplete_beta(0.0, 2.0, 3.0) == 0.0);
  CHECK(regularized_incomplete_beta(1.0, 2.0, 3.0) == 1.0);
  // I_x(1,1) = x
  for (double x : {0.1, 0.37, 0.5, 0.93}) {
    CHECK(regularized_incomplete_beta(x, 1.0, 1.0) == doctest::Approx(x).epsilon(1e-14));
  }
  // symmetry at the median for equal shapes
  CHECK(regularized_incomplete_beta(0.5, 22.0, 22.0) ==
        doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("F upper tail matches a 1e6-point quadrature oracle") {
  const std::vector<std::pair<double, double>> dfs = {{1, 1}, {44, 44}, {89, 89}};
  for (const auto& [df1, df2] : dfs) {
    for (int k = 1; k <= 20; ++k) {
      // quantiles spanning the bulk of each distribution
      const double f = 0.15 * k;
      const double oracle_cdf = f_cdf_by_quadrature(f, df1, df2, 1000000);
      const double mine = 1.0 - f_upper_tail(f, df1, df2);
      CHECK(std::abs(mine - oracle_cdf) < 1e-8);
    }
  }
}

TEST_CASE("F reciprocal identity: upper tails sum to one") {
  struct Case {
    double f, d1, d2;
  };
  for (const Case& c : {Case{1.67, 44, 44}, Case{0.54, 44, 44},
                        Case{2.3, 10, 30}, Case{0.2, 89, 89}, Case{5.0, 3, 7}}) {
    const double p1 = f_upper_tail(c.f, c.d1, c.d2);
    const double p2 = f_upper_tail(1.0 / c.f, c.d2, c.d1);
    CHECK(std::abs(p1 + p2 - 1.0) < 1e-10);
  }
}

TEST_CASE("normal cdf reference values") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(normal_cdf(1.96) == doctest::Approx(0.9750021048517795).epsilon(1e-12));
  CHECK(normal_two_sided_p(1.96) == doctest::Approx(0.04999579).epsilon(1e-5));
}

TEST_CASE("type-7 quantiles interpolate") {
  const std::vector<double> values = {1.0, 2.0, 3.0, 4.0};
  CHECK(quantile_sorted(values, 0.0) == 1.0);
  CHECK(quantile_sorted(values, 1.0) == 4.0);
  CHECK(quantile_sorted(values, 0.5) == doctest::Approx(2.5));
  CHECK(quantile_sorted({7.0}, 0.25) == 7.0);
}
