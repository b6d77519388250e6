#pragma once

#include <span>

namespace geopt {

double normal_cdf(double x);

/// Upper tail 1 - Phi(x).
double normal_sf(double x);

/// Lower regularized incomplete gamma P(s, x).
double regularized_gamma_p(double s, double x);

/// Upper regularized incomplete gamma Q(s, x) = 1 - P(s, x).
double regularized_gamma_q(double s, double x);

/// P(X > x) for a chi-square variable with `dof` degrees of freedom.
double chi_square_sf(double x, int dof);

/// Sample standard deviation, divisor n-1. Requires at least 2 values.
double sample_stddev(std::span<const double> values);

double median_of(std::span<const double> values);

}  // namespace geopt
