#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "geopt/rng.hpp"
#include "geopt/stats.hpp"
#include "geopt/surrogate.hpp"
#include "support/test_helpers.hpp"

using namespace geopt;

namespace {

std::vector<Selection> fake_selections(int n_vars, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::set<std::string> seen;
  std::vector<Selection> out;
  while (static_cast<int>(out.size()) < count) {
    Bitstring bits(static_cast<std::size_t>(n_vars));
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng.next_below(2));
    Selection sel{std::move(bits)};
    if (seen.insert(sel.to_string()).second) out.push_back(std::move(sel));
  }
  return out;
}

}  // namespace

TEST_CASE("default temperature is the sample stddev with a degenerate fallback") {
  WarningLog warnings;
  const std::vector<double> flat = {1.0, 1.0, 1.0};
  CHECK(default_temperature(flat, &warnings) == 1.0);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].code == "temperature-degenerate");

  const std::vector<double> pair = {0.0, 2.0};
  CHECK(default_temperature(pair) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  Rng rng(5);
  std::vector<double> many(1000);
  for (auto& c : many) c = rng.next_uniform(0.0, 3.0);
  CHECK(default_temperature(many) == doctest::Approx(sample_stddev(many)).epsilon(1e-12));

  const std::vector<double> one = {1.0};
  CHECK_THROWS_AS(default_temperature(one), invalid_argument);
}

TEST_CASE("softmax surrogate: forced ratios, normalization, anti-monotonicity") {
  auto sels = fake_selections(6, 2, 1);

  SUBCASE("equal costs split evenly") {
    const SoftmaxSurrogate s = build_softmax(sels, {0.4, 0.4}, 1.7);
    CHECK(s.probabilities[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(s.probabilities[1] == doctest::Approx(0.5).epsilon(1e-14));
  }

  SUBCASE("a T ln 2 cost gap forces a 2:1 ratio") {
    const double temperature = 0.37;
    const SoftmaxSurrogate s = build_softmax(sels, {0.0, temperature * std::log(2.0)}, temperature);
    CHECK(s.probabilities[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(s.probabilities[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("large random support is normalized and anti-monotone in cost") {
    auto support = fake_selections(10, 1000, 2);
    Rng rng(3);
    std::vector<double> costs(1000);
    for (auto& c : costs) c = rng.next_uniform(-1.0, 1.0);
    const SoftmaxSurrogate s = build_softmax(support, costs, 0.25);
    double total = 0.0;
    for (double p : s.probabilities) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < s.costs.size(); ++i)
      for (std::size_t j = 0; j < s.costs.size(); ++j)
        if (s.costs[i] < s.costs[j]) CHECK(s.probabilities[i] >= s.probabilities[j]);
  }

  SUBCASE("Boltzmann pairwise ratios hold to 1e-10") {
    auto support = fake_selections(8, 50, 4);
    Rng rng(9);
    std::vector<double> costs(50);
    for (auto& c : costs) c = rng.next_uniform(0.0, 0.2);
    const double temperature = 0.05;
    const SoftmaxSurrogate s = build_softmax(support, costs, temperature);
    for (std::size_t i = 0; i < s.costs.size(); i += 7)
      for (std::size_t j = 0; j < s.costs.size(); j += 11) {
        const double expected = std::exp((s.costs[j] - s.costs[i]) / temperature);
        CHECK(s.probabilities[i] / s.probabilities[j] ==
              doctest::Approx(expected).epsilon(1e-10));
      }
  }

  SUBCASE("temperature limits: uniform at T -> inf, argmin mass at T -> 0") {
    auto support = fake_selections(8, 20, 6);
    Rng rng(11);
    std::vector<double> costs(20);
    for (auto& c : costs) c = rng.next_uniform(0.0, 1.0);
    const SoftmaxSurrogate hot = build_softmax(support, costs, 1e9);
    for (double p : hot.probabilities) CHECK(std::fabs(p - 1.0 / 20.0) < 1e-6);

    const SoftmaxSurrogate cold = build_softmax(support, costs, 1e-9);
    const std::size_t argmin = static_cast<std::size_t>(
        std::min_element(cold.costs.begin(), cold.costs.end()) - cold.costs.begin());
    CHECK(cold.probabilities[argmin] == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("duplicates collapse to one class keeping the minimum cost") {
    std::vector<Selection> dup = {sels[0], sels[1], sels[0]};
    const SoftmaxSurrogate s = build_softmax(dup, {0.5, 0.9, 0.2}, 1.0);
    REQUIRE(s.support.size() == 2);
    CHECK(s.costs[0] == 0.2);
  }

  SUBCASE("error paths") {
    CHECK_THROWS_AS(build_softmax(sels, {0.1, std::nan("")}, 1.0), invalid_data);
    CHECK_THROWS_AS(build_softmax(sels, {0.1, 0.2}, 0.0), invalid_argument);
    CHECK_THROWS_AS(build_softmax({}, {}, 1.0), invalid_argument);
  }
}

TEST_CASE("sampling the surrogate is deterministic and matches the multinomial") {
  auto sels = fake_selections(5, 2, 21);
  const double temperature = 1.0;
  const SoftmaxSurrogate s = build_softmax(sels, {0.0, std::log(2.0)}, temperature);
  // p = (2/3, 1/3)

  const BitstringDataset a = sample_training_set(s, 30000, 5);
  const BitstringDataset b = sample_training_set(s, 30000, 5);
  CHECK(a.rows == b.rows);

  int first = 0;
  for (const auto& row : a.rows) first += (to_string(row) == sels[0].to_string());
  CHECK(std::fabs(first / 30000.0 - 2.0 / 3.0) < 0.01);

  const SoftmaxSurrogate single = build_softmax({sels[0]}, {0.3}, 1.0);
  for (const auto& row : sample_training_set(single, 50, 3).rows)
    CHECK(to_string(row) == sels[0].to_string());

  CHECK_THROWS_AS(sample_training_set(s, 0, 1), invalid_argument);
}

TEST_CASE("cold start builds the analytic reference pool") {
  const PortfolioInstance inst = generate_synthetic_instance(8, 4, 2);

  int calls = 0;
  auto evaluate = [&](const Selection& sel) {
    ++calls;
    CHECK(sel.weight() == 4);
    return 0.25;
  };

  WarningLog warnings;
  const ColdStartState state = cold_start(inst, 50, 7, evaluate, &warnings);
  CHECK(calls == 1);
  REQUIRE(state.seed_pool.size() == 50);

  std::set<std::string> distinct;
  int evaluated_count = 0;
  for (std::size_t i = 0; i < state.seed_pool.size(); ++i) {
    distinct.insert(state.seed_pool[i].to_string());
    CHECK(state.seed_pool[i].weight() == 4);
    if (state.evaluated[i]) {
      ++evaluated_count;
      CHECK(state.costs[i] == 0.25);
    } else {
      CHECK(state.costs[i] == state.sigma_ref);
    }
  }
  CHECK(distinct.size() == 50);
  CHECK(evaluated_count == 1);

  const double expected_t = std::sqrt(inst.stats.covariance.mean());
  CHECK(state.temperature == doctest::Approx(expected_t).epsilon(1e-12));
  CHECK(state.sigma_ref == doctest::Approx(state.temperature * std::log(2.0) + 0.25).epsilon(1e-12));
  CHECK(state.sigma_ref > 0.25);  // T ln 2 > 0 always

  // The resulting multinomial puts exactly twice the mass on the evaluated point.
  const SoftmaxSurrogate s = build_softmax(state.seed_pool, state.costs, state.temperature);
  double p_eval = 0.0, p_other = 0.0;
  for (std::size_t i = 0; i < state.seed_pool.size(); ++i) {
    if (state.evaluated[i])
      p_eval = s.probabilities[i];
    else
      p_other = s.probabilities[i];
  }
  CHECK(p_eval == doctest::Approx(2.0 / 51.0).epsilon(1e-12));
  CHECK(p_other == doctest::Approx(1.0 / 51.0).epsilon(1e-12));
}

TEST_CASE("cold start: T=1, sigma(1)=0 gives sigma(0)=ln 2 exactly") {
  PortfolioInstance inst = generate_synthetic_instance(6, 3, 4);
  inst.stats.covariance = Eigen::MatrixXd::Ones(6, 6);  // mean entry 1 -> T = 1
  const ColdStartState state = cold_start(inst, 10, 3, [](const Selection&) { return 0.0; });
  CHECK(state.temperature == 1.0);
  CHECK(std::fabs(state.sigma_ref - std::log(2.0)) < 1e-12);
}

TEST_CASE("cold start guards") {
  const PortfolioInstance inst = generate_synthetic_instance(4, 2, 5);
  auto zero = [](const Selection&) { return 0.0; };
  CHECK_THROWS_AS(cold_start(inst, 7, 1, zero), invalid_argument);  // C(4,2) = 6 < 7
  CHECK_THROWS_AS(cold_start(inst, 0, 1, zero), invalid_argument);

  PortfolioInstance negative = inst;
  negative.stats.covariance = -0.04 * Eigen::MatrixXd::Ones(4, 4) +
                              0.05 * Eigen::MatrixXd::Identity(4, 4);
  WarningLog warnings;
  const ColdStartState state = cold_start(negative, 6, 2, zero, &warnings);
  CHECK(state.temperature == doctest::Approx(std::sqrt(-negative.stats.covariance.mean())));
  REQUIRE_FALSE(warnings.empty());
  CHECK(warnings[0].code == "cold-start-negative-mean-covariance");

  // n_seed equal to the full space enumerates it.
  const ColdStartState full = cold_start(inst, 6, 9, zero);
  std::set<std::string> keys;
  for (const auto& sel : full.seed_pool) keys.insert(sel.to_string());
  CHECK(keys.size() == 6);
}
