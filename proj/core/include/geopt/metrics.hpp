#pragma once

#include <span>
#include <vector>

#include "geopt/errors.hpp"
#include "geopt/portfolio.hpp"

namespace geopt {

/// Table row of the benchmark indicators: percentage-deviation-error
/// statistics plus the distance errors, with the frontier sizes.
struct MetricReport {
  double pde_mean = 0.0;
  double pde_median = 0.0;
  double pde_min = 0.0;
  double pde_max = 0.0;
  double meucd = 0.0;
  double vre = 0.0;
  double mre = 0.0;
  int n_heuristic = 0;  // epsilon
  int n_standard = 0;   // epsilon*
};

/// Percentage improvement of the generator-enhanced best cost over the
/// classical one: positive when the enhanced run wins.
double relative_enhancement(double c_classical, double c_geo);

/// Percentage deviation error per heuristic point: for (x_i, y_i), the
/// standard frontier is linearly interpolated in the return coordinate to
/// get x*_i and in the risk coordinate to get y*_i; PDE_i is the smaller of
/// the two percentage deviations. Points outside the standard frontier's
/// coordinate range clamp to the nearest endpoint.
std::vector<double> pde(const FrontierSet& standard, const FrontierSet& heuristic);

struct DistanceErrors {
  double meucd = 0.0;  // mean Euclidean distance to the closest standard point
  double vre = 0.0;    // mean percentage risk error
  double mre = 0.0;    // mean percentage return error
};

/// Nearest-standard-point errors. Heuristic points with a zero coordinate in
/// a ratio term are excluded from that term's mean with a warning.
DistanceErrors meucd_vre_mre(const FrontierSet& standard, const FrontierSet& heuristic,
                             WarningLog* warnings = nullptr);

MetricReport metric_report(const FrontierSet& standard, const FrontierSet& heuristic,
                           WarningLog* warnings = nullptr);

struct WilcoxonOutcome {
  int wins = 0;    // pairs where a is lower
  int losses = 0;  // pairs where b is lower
  int ties = 0;
  double statistic = 0.0;  // signed-rank sum of the positive differences
  double p_value = 1.0;
  double alpha = 0.05;
  bool reject = false;
};

/// Two-sided signed-rank test on paired samples. Zero differences are
/// dropped, tied ranks averaged; exact null distribution below 10 effective
/// pairs, normal approximation with tie correction otherwise.
WilcoxonOutcome wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                     double alpha = 0.05);

}  // namespace geopt
