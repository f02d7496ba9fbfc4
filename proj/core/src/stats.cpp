#include "rtpower/stats.hpp"

#include "rtpower/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace rtpower {

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace {

// Continued fraction for I_x(a,b), modified Lentz algorithm. Converges
// quickly for x < (a+1)/(a+b+2); the public wrapper applies the symmetry
// transform for the other half.
double ibeta_continued_fraction(double x, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 3e-16;
  constexpr int max_iter = 500;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;

  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;

  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;

    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge (x=" +
                       std::to_string(x) + ", a=" + std::to_string(a) +
                       ", b=" + std::to_string(b) + ")");
}

} // namespace

double regularized_incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw ValidationError("incomplete beta requires a > 0 and b > 0");
  }
  if (!(x >= 0.0) || !(x <= 1.0)) {
    throw ValidationError("incomplete beta requires x in [0, 1], got " +
                          std::to_string(x));
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;

  const double front =
      std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * ibeta_continued_fraction(x, a, b) / a;
  }
  return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - log_beta(a, b)) *
                   ibeta_continued_fraction(1.0 - x, b, a) / b;
}

double f_upper_tail(double f, double df1, double df2) {
  if (!(df1 > 0.0) || !(df2 > 0.0)) {
    throw ValidationError("F distribution requires positive degrees of freedom");
  }
  if (!(f >= 0.0)) {
    throw ValidationError("F statistic must be >= 0, got " + std::to_string(f));
  }
  if (f == 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  // P(F >= f) = I_{df2/(df2 + df1 f)}(df2/2, df1/2)
  const double x = df2 / (df2 + df1 * f);
  return regularized_incomplete_beta(x, df2 / 2.0, df1 / 2.0);
}

double f_pdf(double x, double df1, double df2) {
  if (!(x > 0.0)) return 0.0;
  const double a = df1 / 2.0;
  const double b = df2 / 2.0;
  const double log_pdf = a * std::log(df1 / df2) + (a - 1.0) * std::log(x) -
                         (a + b) * std::log1p(df1 * x / df2) - log_beta(a, b);
  return std::exp(log_pdf);
}

double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / 1.4142135623730951);
}

double normal_two_sided_p(double z) {
  return std::erfc(std::abs(z) / 1.4142135623730951);
}

double quantile_sorted(const std::vector<double>& sorted_values, double prob) {
  if (sorted_values.empty()) {
    throw ValidationError("quantile of an empty sample");
  }
  if (!(prob >= 0.0) || !(prob <= 1.0)) {
    throw ValidationError("quantile probability must be in [0, 1]");
  }
  const double pos = prob * static_cast<double>(sorted_values.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted_values.size()) return sorted_values.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[lo + 1] - sorted_values[lo]);
}

} // namespace rtpower
