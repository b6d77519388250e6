#include "geopt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "geopt/log.hpp"
#include "geopt/stats.hpp"

namespace geopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double percentage_deviation(double value, double reference) {
  const double num = 100.0 * (value - reference);
  if (reference == 0.0) return num == 0.0 ? 0.0 : kInf;
  return std::fabs(num / reference);
}

// Interpolates `ord` (the other coordinate) at abscissa `at`, bracketing by
// the largest key <= at and the smallest key >= at; out-of-range points
// clamp to the nearest key.
double interpolate_at(const std::vector<double>& key, const std::vector<double>& ord, double at) {
  int below = -1, above = -1;
  for (std::size_t l = 0; l < key.size(); ++l) {
    if (key[l] <= at && (below < 0 || key[l] > key[static_cast<std::size_t>(below)]))
      below = static_cast<int>(l);
    if (key[l] >= at && (above < 0 || key[l] < key[static_cast<std::size_t>(above)]))
      above = static_cast<int>(l);
  }
  if (below < 0) return ord[static_cast<std::size_t>(above)];
  if (above < 0) return ord[static_cast<std::size_t>(below)];
  const double kb = key[static_cast<std::size_t>(below)];
  const double ka = key[static_cast<std::size_t>(above)];
  if (ka == kb) return ord[static_cast<std::size_t>(below)];
  const double ob = ord[static_cast<std::size_t>(below)];
  const double oa = ord[static_cast<std::size_t>(above)];
  return ob + (oa - ob) * (at - kb) / (ka - kb);
}

}  // namespace

double relative_enhancement(double c_classical, double c_geo) {
  if (c_classical == 0.0)
    throw invalid_argument("relative_enhancement: classical cost must be nonzero");
  return 100.0 - 100.0 * c_geo / c_classical;
}

std::vector<double> pde(const FrontierSet& standard, const FrontierSet& heuristic) {
  if (standard.points.size() < 2)
    throw invalid_argument("pde: standard frontier needs at least 2 points");
  for (std::size_t l = 1; l < standard.points.size(); ++l)
    if (!(standard.points[l].ret > standard.points[l - 1].ret))
      throw invalid_argument("pde: standard frontier returns must be strictly increasing");

  std::vector<double> risks(standard.points.size()), rets(standard.points.size());
  for (std::size_t l = 0; l < standard.points.size(); ++l) {
    risks[l] = standard.points[l].risk;
    rets[l] = standard.points[l].ret;
  }

  std::vector<double> out;
  out.reserve(heuristic.points.size());
  for (const auto& pt : heuristic.points) {
    const double x_star = interpolate_at(rets, risks, pt.ret);   // risk at the point's return
    const double y_star = interpolate_at(risks, rets, pt.risk);  // return at the point's risk
    out.push_back(std::min(percentage_deviation(pt.risk, x_star),
                           percentage_deviation(pt.ret, y_star)));
  }
  return out;
}

DistanceErrors meucd_vre_mre(const FrontierSet& standard, const FrontierSet& heuristic,
                             WarningLog* warnings) {
  if (standard.points.empty() || heuristic.points.empty())
    throw invalid_argument("meucd_vre_mre: frontiers must be nonempty");

  double dist_sum = 0.0, vre_sum = 0.0, mre_sum = 0.0;
  int vre_n = 0, mre_n = 0;
  for (const auto& pt : heuristic.points) {
    double best_d2 = kInf;
    FrontierPoint closest = standard.points.front();
    for (const auto& sp : standard.points) {
      const double d2 = (sp.risk - pt.risk) * (sp.risk - pt.risk) +
                        (sp.ret - pt.ret) * (sp.ret - pt.ret);
      if (d2 < best_d2) {
        best_d2 = d2;
        closest = sp;
      }
    }
    dist_sum += std::sqrt(best_d2);
    if (pt.risk != 0.0) {
      vre_sum += 100.0 * std::fabs(closest.risk - pt.risk) / pt.risk;
      ++vre_n;
    } else {
      warn(warnings, "metrics-zero-risk", "heuristic point with zero risk excluded from VRE");
    }
    if (pt.ret != 0.0) {
      mre_sum += 100.0 * std::fabs(closest.ret - pt.ret) / pt.ret;
      ++mre_n;
    } else {
      warn(warnings, "metrics-zero-return", "heuristic point with zero return excluded from MRE");
    }
  }

  DistanceErrors out;
  out.meucd = dist_sum / static_cast<double>(heuristic.points.size());
  out.vre = vre_n > 0 ? vre_sum / vre_n : 0.0;
  out.mre = mre_n > 0 ? mre_sum / mre_n : 0.0;
  return out;
}

MetricReport metric_report(const FrontierSet& standard, const FrontierSet& heuristic,
                           WarningLog* warnings) {
  const std::vector<double> devs = pde(standard, heuristic);
  if (devs.empty()) throw invalid_argument("metric_report: heuristic frontier is empty");

  MetricReport report;
  report.pde_mean = std::accumulate(devs.begin(), devs.end(), 0.0) / static_cast<double>(devs.size());
  report.pde_median = median_of(devs);
  report.pde_min = *std::min_element(devs.begin(), devs.end());
  report.pde_max = *std::max_element(devs.begin(), devs.end());
  const DistanceErrors d = meucd_vre_mre(standard, heuristic, warnings);
  report.meucd = d.meucd;
  report.vre = d.vre;
  report.mre = d.mre;
  report.n_heuristic = static_cast<int>(heuristic.points.size());
  report.n_standard = static_cast<int>(standard.points.size());
  return report;
}

WilcoxonOutcome wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                     double alpha) {
  if (a.size() != b.size()) throw invalid_argument("wilcoxon: paired samples differ in length");
  if (a.empty()) throw invalid_argument("wilcoxon: empty samples");

  WilcoxonOutcome out;
  out.alpha = alpha;

  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = b[i] - a[i];
    if (d > 0) ++out.wins;
    else if (d < 0) ++out.losses;
    else ++out.ties;
    if (d != 0.0) diffs.push_back(d);
  }

  const std::size_t n = diffs.size();
  if (n == 0) {
    out.statistic = 0.0;
    out.p_value = 1.0;
    out.reject = false;
    return out;
  }
  if (n < 5) throw invalid_argument("wilcoxon: need at least 5 nonzero differences");

  // Ranks of |d| with ties averaged.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t i, std::size_t j) { return std::fabs(diffs[i]) < std::fabs(diffs[j]); });
  std::vector<double> rank(n);
  std::vector<std::size_t> tie_sizes;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::fabs(diffs[idx[j]]) == std::fabs(diffs[idx[i]])) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) rank[idx[k]] = avg;
    if (j - i > 1) tie_sizes.push_back(j - i);
    i = j;
  }

  double w_plus = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (diffs[i] > 0) w_plus += rank[i];
  out.statistic = w_plus;

  if (n < 10) {
    // Exact null distribution: every sign assignment of the ranks is equally
    // likely; count tail mass at and beyond the observed sum.
    const std::uint64_t combos = std::uint64_t{1} << n;
    std::vector<double> sorted_ranks(rank);
    std::uint64_t le = 0, ge = 0;
    for (std::uint64_t mask = 0; mask < combos; ++mask) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (std::uint64_t{1} << i)) s += sorted_ranks[i];
      if (s <= w_plus + 1e-9) ++le;
      if (s >= w_plus - 1e-9) ++ge;
    }
    const double p_le = static_cast<double>(le) / static_cast<double>(combos);
    const double p_ge = static_cast<double>(ge) / static_cast<double>(combos);
    out.p_value = std::min(1.0, 2.0 * std::min(p_le, p_ge));
  } else {
    const double nn = static_cast<double>(n);
    const double mu = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    for (std::size_t t : tie_sizes) {
      const double tt = static_cast<double>(t);
      var -= (tt * tt * tt - tt) / 48.0;
    }
    if (var <= 0.0) {
      out.p_value = 1.0;
    } else {
      const double z = (w_plus - mu) / std::sqrt(var);
      out.p_value = std::min(1.0, 2.0 * normal_sf(std::fabs(z)));
    }
  }
  out.reject = out.p_value < alpha;
  return out;
}

}  // namespace geopt
