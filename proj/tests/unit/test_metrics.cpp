#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "geopt/metrics.hpp"
#include "geopt/rng.hpp"

using namespace geopt;

namespace {

FrontierSet frontier(std::vector<FrontierPoint> pts, FrontierKind kind = FrontierKind::standard) {
  return make_frontier(std::move(pts), kind);
}

// Published benchmark indicator pairs (mean and median rows per index),
// fixture data for the signed-rank comparison.
const std::vector<double> kTnGeo = {1.0958, 1.2181, 2.3142, 2.5660, 0.8445,
                                    1.0841, 1.2918, 1.1452, 0.5793, 0.5855};
const std::vector<double> kGts = {1.0957, 1.2181, 2.5424, 2.5466, 1.1076,
                                  1.0841, 1.9328, 1.1823, 0.6066, 0.6093};
const std::vector<double> kPbild = {1.1431, 1.2390, 2.4251, 2.5866, 0.9706,
                                    1.0841, 1.6386, 1.1692, 0.5972, 0.5896};

}  // namespace

TEST_CASE("relative enhancement: exact sign and magnitude contracts") {
  CHECK(relative_enhancement(2.0, 1.8) == 10.0);  // exact, not approximate
  CHECK(relative_enhancement(0.37, 0.37) == 0.0);
  CHECK(relative_enhancement(123.456, 123.456) == 0.0);
  CHECK(relative_enhancement(1.8, 2.0) == doctest::Approx(-11.1111111111).epsilon(1e-9));
  CHECK_THROWS_AS(relative_enhancement(0.0, 1.0), invalid_argument);
}

TEST_CASE("pde: hand-derived interpolation fixture") {
  const FrontierSet standard = frontier({{1.0, 1.0}, {2.0, 2.0}});

  SUBCASE("point on a segment has zero deviation") {
    const auto devs = pde(standard, frontier({{1.5, 1.5}}, FrontierKind::heuristic));
    REQUIRE(devs.size() == 1);
    CHECK(devs[0] == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("off-frontier point picks the smaller percentage deviation") {
    const auto devs = pde(standard, frontier({{1.5, 1.65}}, FrontierKind::heuristic));
    REQUIRE(devs.size() == 1);
    const double expected = std::min(std::fabs(100.0 * (1.5 - 1.65) / 1.65),
                                     std::fabs(100.0 * (1.65 - 1.5) / 1.5));
    CHECK(devs[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(devs[0] == doctest::Approx(9.0909090909).epsilon(1e-9));
  }

  SUBCASE("identical frontiers give all-zero deviations") {
    const auto devs = pde(standard, frontier({{1.0, 1.0}, {2.0, 2.0}}, FrontierKind::heuristic));
    for (double d : devs) CHECK(d == doctest::Approx(0.0).epsilon(1e-12));
    const MetricReport report =
        metric_report(standard, frontier({{1.0, 1.0}, {2.0, 2.0}}, FrontierKind::heuristic));
    CHECK(report.pde_mean == doctest::Approx(0.0));
    CHECK(report.pde_median == doctest::Approx(0.0));
    CHECK(report.pde_min == doctest::Approx(0.0));
    CHECK(report.pde_max == doctest::Approx(0.0));
  }

  SUBCASE("out-of-range points clamp to the nearest endpoint") {
    const auto devs = pde(standard, frontier({{0.5, 0.5}}, FrontierKind::heuristic));
    REQUIRE(devs.size() == 1);
    CHECK(devs[0] == doctest::Approx(50.0).epsilon(1e-12));
  }

  SUBCASE("a single standard point is rejected") {
    CHECK_THROWS_AS(pde(frontier({{1.0, 1.0}}), frontier({{1.0, 1.0}}, FrontierKind::heuristic)),
                    invalid_argument);
  }
}

TEST_CASE("pde is invariant under heuristic point relabeling") {
  const FrontierSet standard = frontier({{1.0, 1.0}, {1.5, 1.8}, {2.0, 2.2}});
  std::vector<FrontierPoint> pts = {{1.1, 1.2}, {1.7, 1.9}, {1.4, 1.5}};
  const auto a = pde(standard, frontier(pts, FrontierKind::heuristic));
  std::reverse(pts.begin(), pts.end());
  const auto b = pde(standard, frontier(pts, FrontierKind::heuristic));
  CHECK(a == b);
}

TEST_CASE("distance errors: single-pair fixture and degenerate cases") {
  const FrontierSet standard = frontier({{1.0, 1.0}});
  const FrontierSet heuristic = frontier({{1.3, 1.4}}, FrontierKind::heuristic);
  const DistanceErrors d = meucd_vre_mre(standard, heuristic);
  CHECK(d.meucd == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.vre == doctest::Approx(100.0 * 0.3 / 1.3).epsilon(1e-10));
  CHECK(d.mre == doctest::Approx(100.0 * 0.4 / 1.4).epsilon(1e-10));

  const DistanceErrors zero = meucd_vre_mre(standard, frontier({{1.0, 1.0}}, FrontierKind::heuristic));
  CHECK(zero.meucd == doctest::Approx(0.0));
  CHECK(zero.vre == doctest::Approx(0.0));
  CHECK(zero.mre == doctest::Approx(0.0));

  // Zero coordinates are excluded from the ratio terms, with warnings.
  WarningLog warnings;
  const DistanceErrors excl =
      meucd_vre_mre(standard, frontier({{0.0, 1.0}, {1.0, 2.0}}, FrontierKind::heuristic), &warnings);
  CHECK(excl.vre == doctest::Approx(0.0));  // only the risk-1 point contributes, at distance 0 risk error 0
  CHECK(warnings.size() == 1);
  CHECK(warnings[0].code == "metrics-zero-risk");
}

TEST_CASE("shifting the heuristic frontier toward the standard one shrinks MEUCD") {
  const FrontierSet standard = frontier({{1.0, 1.0}, {2.0, 2.0}});
  double prev = 1e9;
  for (double shift : {0.45, 0.3, 0.2, 0.1, 0.01}) {
    const FrontierSet h = frontier({{1.0 + shift, 1.0 + shift}}, FrontierKind::heuristic);
    const double m = meucd_vre_mre(standard, h).meucd;
    CHECK(m == doctest::Approx(shift * std::sqrt(2.0)).epsilon(1e-12));
    CHECK(m < prev);
    prev = m;
  }
}

TEST_CASE("metric family scales correctly with the coordinates") {
  Rng rng(9);
  std::vector<FrontierPoint> spts, hpts;
  for (int i = 0; i < 12; ++i)
    spts.push_back({0.5 + 0.1 * i + 0.01 * rng.next_double(), 0.1 * (i + 1)});
  for (int i = 0; i < 8; ++i)
    hpts.push_back({0.6 + 0.12 * i, 0.1 * (i + 1) + 0.02 * rng.next_double()});

  const FrontierSet s1 = frontier(spts);
  const FrontierSet h1 = frontier(hpts, FrontierKind::heuristic);
  const auto pde1 = pde(s1, h1);
  const DistanceErrors d1 = meucd_vre_mre(s1, h1);

  const double c = 3.7;
  for (auto& p : spts) { p.risk *= c; p.ret *= c; }
  for (auto& p : hpts) { p.risk *= c; p.ret *= c; }
  const FrontierSet s2 = frontier(spts);
  const FrontierSet h2 = frontier(hpts, FrontierKind::heuristic);
  const auto pde2 = pde(s2, h2);
  const DistanceErrors d2 = meucd_vre_mre(s2, h2);

  REQUIRE(pde1.size() == pde2.size());
  for (std::size_t i = 0; i < pde1.size(); ++i)
    CHECK(pde1[i] == doctest::Approx(pde2[i]).epsilon(1e-9));
  CHECK(d2.meucd == doctest::Approx(c * d1.meucd).epsilon(1e-9));
  CHECK(d2.vre == doctest::Approx(d1.vre).epsilon(1e-9));
  CHECK(d2.mre == doctest::Approx(d1.mre).epsilon(1e-9));
}

TEST_CASE("metric report statistics match an independent order-statistics pass") {
  Rng rng(21);
  std::vector<FrontierPoint> spts, hpts;
  for (int i = 0; i < 20; ++i) spts.push_back({0.2 + 0.05 * i, 0.01 * (i + 1)});
  for (int i = 0; i < 9; ++i)
    hpts.push_back({0.25 + 0.05 * i + 0.03 * rng.next_double(), 0.012 * (i + 1)});
  const FrontierSet s = frontier(spts);
  const FrontierSet h = frontier(hpts, FrontierKind::heuristic);

  const MetricReport report = metric_report(s, h);
  std::vector<double> devs = pde(s, h);
  std::sort(devs.begin(), devs.end());
  double mean = 0.0;
  for (double d : devs) mean += d;
  mean /= static_cast<double>(devs.size());
  const double median = devs.size() % 2 ? devs[devs.size() / 2]
                                        : 0.5 * (devs[devs.size() / 2 - 1] + devs[devs.size() / 2]);
  CHECK(report.pde_mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(report.pde_median == doctest::Approx(median).epsilon(1e-12));
  CHECK(report.pde_min == doctest::Approx(devs.front()).epsilon(1e-12));
  CHECK(report.pde_max == doctest::Approx(devs.back()).epsilon(1e-12));
  CHECK(report.n_heuristic == 9);
  CHECK(report.n_standard == 20);
}

TEST_CASE("wilcoxon: degenerate and guard cases") {
  const std::vector<double> same = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  const WilcoxonOutcome out = wilcoxon_signed_rank(same, same, 0.05);
  CHECK(out.ties == 6);
  CHECK(out.wins == 0);
  CHECK(out.losses == 0);
  CHECK(out.statistic == 0.0);
  CHECK(out.p_value == 1.0);
  CHECK_FALSE(out.reject);

  const std::vector<double> a = {1.0, 2.0, 3.0};
  const std::vector<double> b = {2.0, 3.0, 4.0};
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, b, 0.05), invalid_argument);  // < 5 nonzero diffs
  const std::vector<double> c = {1.0, 2.0};
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, c, 0.05), invalid_argument);  // length mismatch
}

TEST_CASE("wilcoxon reproduces the published pairwise comparison counts") {
  SUBCASE("vs GTS: 6 wins, 2 losses, 2 ties, p near .036, reject at .05") {
    const WilcoxonOutcome out = wilcoxon_signed_rank(kTnGeo, kGts, 0.05);
    CHECK(out.wins == 6);
    CHECK(out.losses == 2);
    CHECK(out.ties == 2);
    CHECK(out.wins + out.losses + out.ties == 10);
    CHECK(std::fabs(out.p_value - 0.036) <= 0.005);
    CHECK(out.reject);
  }

  SUBCASE("vs PBILD: 9 wins, 0 losses, 1 tie, p near .008, reject at .05") {
    const WilcoxonOutcome out = wilcoxon_signed_rank(kTnGeo, kPbild, 0.05);
    CHECK(out.wins == 9);
    CHECK(out.losses == 0);
    CHECK(out.ties == 1);
    CHECK(std::fabs(out.p_value - 0.008) <= 0.005);
    CHECK(out.reject);
  }

  SUBCASE("swapping the samples preserves p and swaps wins/losses") {
    const WilcoxonOutcome fwd = wilcoxon_signed_rank(kTnGeo, kGts, 0.05);
    const WilcoxonOutcome rev = wilcoxon_signed_rank(kGts, kTnGeo, 0.05);
    CHECK(fwd.p_value == doctest::Approx(rev.p_value).epsilon(1e-12));
    CHECK(fwd.wins == rev.losses);
    CHECK(fwd.losses == rev.wins);
    CHECK(fwd.ties == rev.ties);
  }
}

TEST_CASE("wilcoxon normal approximation with ties behaves for larger n") {
  Rng rng(3);
  std::vector<double> a(40), b(40);
  for (int i = 0; i < 40; ++i) {
    a[static_cast<std::size_t>(i)] = rng.next_normal();
    b[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i)] + 0.4 + 0.2 * rng.next_normal();
  }
  const WilcoxonOutcome shifted = wilcoxon_signed_rank(a, b, 0.05);
  CHECK(shifted.p_value >= 0.0);
  CHECK(shifted.p_value <= 1.0);
  CHECK(shifted.reject);  // a is systematically lower

  // Symmetric noise: the test should usually retain.
  std::vector<double> c(40);
  for (int i = 0; i < 40; ++i)
    c[static_cast<std::size_t>(i)] = a[static_cast<std::size_t>(i)] + 0.3 * rng.next_normal();
  const WilcoxonOutcome noise = wilcoxon_signed_rank(a, c, 0.001);
  CHECK(noise.p_value >= 0.0);
  CHECK(noise.p_value <= 1.0);
}
