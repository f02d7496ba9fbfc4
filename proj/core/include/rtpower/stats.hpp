#pragma once

#include <vector>

namespace rtpower {

// log of the complete beta function B(a, b)
double log_beta(double a, double b);

// Regularized incomplete beta function I_x(a, b) for x in [0, 1], a, b > 0.
// Continued-fraction evaluation, accurate to ~1e-14 over the df ranges used
// by the F tests here.
double regularized_incomplete_beta(double x, double a, double b);

// Upper-tail probability P(F >= f) for an F(df1, df2) variate.
double f_upper_tail(double f, double df1, double df2);

// F density, used by tests as an independent quadrature oracle and exposed
// for completeness.
double f_pdf(double x, double df1, double df2);

// Standard normal CDF via erfc.
double normal_cdf(double z);

// Two-sided p-value for a standard normal z.
double normal_two_sided_p(double z);

// Linear-interpolation quantile (R type 7) of an ascending-sorted sample.
double quantile_sorted(const std::vector<double>& sorted_values, double prob);

} // namespace rtpower
