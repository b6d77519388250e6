#include "geopt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "geopt/errors.hpp"

namespace geopt {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

namespace {

// Series expansion of P(s, x), valid for x < s + 1.
double gamma_p_series(double s, double x) {
  double ap = s;
  double sum = 1.0 / s;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// Continued fraction for Q(s, x), valid for x >= s + 1 (modified Lentz).
double gamma_q_cf(double s, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

}  // namespace

double regularized_gamma_p(double s, double x) {
  if (s <= 0.0 || x < 0.0) throw invalid_argument("regularized_gamma_p: require s > 0, x >= 0");
  if (x == 0.0) return 0.0;
  return (x < s + 1.0) ? gamma_p_series(s, x) : 1.0 - gamma_q_cf(s, x);
}

double regularized_gamma_q(double s, double x) {
  if (s <= 0.0 || x < 0.0) throw invalid_argument("regularized_gamma_q: require s > 0, x >= 0");
  if (x == 0.0) return 1.0;
  return (x < s + 1.0) ? 1.0 - gamma_p_series(s, x) : gamma_q_cf(s, x);
}

double chi_square_sf(double x, int dof) {
  if (dof < 1) throw invalid_argument("chi_square_sf: dof must be >= 1");
  if (x <= 0.0) return 1.0;
  return regularized_gamma_q(0.5 * dof, 0.5 * x);
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) throw invalid_argument("sample_stddev: need at least 2 values");
  // Two-pass for accuracy.
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double median_of(std::span<const double> values) {
  if (values.empty()) throw invalid_argument("median_of: empty input");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace geopt
