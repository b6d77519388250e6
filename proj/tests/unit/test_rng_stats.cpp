#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "geopt/rng.hpp"
#include "geopt/stats.hpp"

using namespace geopt;

TEST_CASE("rng streams are deterministic and independent per label") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  CHECK(derive_seed(1, "sa", 0) == derive_seed(1, "sa", 0));
  CHECK(derive_seed(1, "sa", 0) != derive_seed(1, "sa", 1));
  CHECK(derive_seed(1, "sa", 0) != derive_seed(1, "tn_geo", 0));
  CHECK(derive_seed(1, "sa", 0) != derive_seed(2, "sa", 0));
}

TEST_CASE("uniform doubles stay in [0,1) with the right mean") {
  Rng rng(7);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::fabs(sum / n - 0.5) < 0.01);
}

TEST_CASE("next_below is unbiased over a small range") {
  Rng rng(11);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(rng.next_below(7))];
  // chi-square against uniform, 6 dof
  double chi2 = 0.0;
  const double expect = n / 7.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi_square_sf(chi2, 6) > 0.001);
}

TEST_CASE("normal draws have unit variance") {
  Rng rng(13);
  double sum = 0.0, ss = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.next_normal();
    sum += x;
    ss += x * x;
  }
  CHECK(std::fabs(sum / n) < 0.02);
  CHECK(std::fabs(ss / n - 1.0) < 0.02);
}

TEST_CASE("chi-square survival function matches known quantiles") {
  // P(X > 3.8415) = 0.05 for 1 dof; P(X > 18.307) = 0.05 for 10 dof
  CHECK(chi_square_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(chi_square_sf(18.307038053275146, 10) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(chi_square_sf(0.0, 3) == doctest::Approx(1.0));
}

TEST_CASE("normal cdf basics") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-9));
  CHECK(normal_sf(1.959963984540054) == doctest::Approx(0.025).epsilon(1e-9));
}

TEST_CASE("sample stddev matches a direct two-pass computation") {
  std::vector<double> v = {0.0, 2.0};
  CHECK(sample_stddev(v) == doctest::Approx(std::sqrt(2.0)));

  Rng rng(3);
  std::vector<double> big(1000);
  for (auto& x : big) x = rng.next_uniform(-5.0, 5.0);
  double mean = 0.0;
  for (double x : big) mean += x;
  mean /= static_cast<double>(big.size());
  double ss = 0.0;
  for (double x : big) ss += (x - mean) * (x - mean);
  const double oracle = std::sqrt(ss / static_cast<double>(big.size() - 1));
  CHECK(sample_stddev(big) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("median handles even and odd lengths") {
  std::vector<double> odd = {3.0, 1.0, 2.0};
  CHECK(median_of(odd) == 2.0);
  std::vector<double> even = {4.0, 1.0, 3.0, 2.0};
  CHECK(median_of(even) == 2.5);
}
