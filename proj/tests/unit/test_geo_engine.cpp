#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "geopt/geo_engine.hpp"
#include "geopt/rng.hpp"

using namespace geopt;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Deterministic synthetic cost over selections: a linear field plus a pair
// bonus, cheap enough for exhaustive optima.
double toy_cost(const Selection& sel) {
  double c = 1.0;
  for (std::size_t i = 0; i < sel.bits.size(); ++i)
    if (sel.bits[i]) c += 0.01 * static_cast<double>((i * 7) % 13);
  if (sel.bits.size() >= 2 && sel.bits[0] && sel.bits[1]) c -= 0.05;
  return c;
}

EvaluatedCandidate toy_evaluate(const Selection& sel) {
  EvaluatedCandidate cand;
  cand.selection = sel;
  cand.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sel.bits.size()));
  cand.cost = toy_cost(sel);
  cand.feasible = true;
  return cand;
}

// Oracle that additionally asserts the engine's call contracts.
class AuditedOracle final : public CostOracle {
 public:
  explicit AuditedOracle(int kappa, bool expect_valid_only)
      : kappa_(kappa), expect_valid_only_(expect_valid_only) {}

  bool repeated_call = false;
  bool invalid_call = false;

 private:
  EvaluatedCandidate do_evaluate(const Selection& sel) override {
    if (!seen_.insert(sel.to_string()).second) repeated_call = true;
    if (expect_valid_only_ && sel.weight() != kappa_) invalid_call = true;
    return toy_evaluate(sel);
  }
  int kappa_;
  bool expect_valid_only_;
  std::set<std::string> seen_;
};

GeoConfig light_config(GeoMode mode, std::uint64_t seed) {
  GeoConfig cfg;
  cfg.mode = mode;
  cfg.n_seed = 60;
  cfg.n_train = 400;
  cfg.n_mps = 300;
  cfg.mps_init_bond = 2;
  cfg.train_cfg.max_bond_dim = 4;
  cfg.train_cfg.n_sweeps = 2;
  cfg.train_cfg.grad_steps_per_bond = 2;
  cfg.rng_seed = seed;
  return cfg;
}

std::vector<EvaluatedCandidate> make_initial_data(int n, int kappa, int count,
                                                  std::uint64_t seed) {
  Rng rng(seed);
  std::set<std::string> seen;
  std::vector<EvaluatedCandidate> out;
  while (static_cast<int>(out.size()) < count) {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    Selection sel = selection_from_indices(n, {order.begin(), order.begin() + kappa});
    if (!seen.insert(sel.to_string()).second) continue;
    out.push_back(toy_evaluate(sel));
  }
  return out;
}

}  // namespace

TEST_CASE("oracle counts calls and enforces its budget") {
  FunctionOracle oracle(toy_evaluate);
  const Selection sel{bitstring_from_string("1100")};
  CHECK(oracle.calls() == 0);
  oracle.evaluate(sel);
  oracle.evaluate(sel);
  CHECK(oracle.calls() == 2);

  oracle.set_budget(3);
  CHECK(oracle.remaining() == 1);
  oracle.evaluate(sel);
  CHECK(oracle.remaining() == 0);
  CHECK_THROWS_AS(oracle.evaluate(sel), budget_exhausted);
  CHECK(oracle.calls() == 3);
}

TEST_CASE("portfolio oracle treats wrong cardinality as infeasible, not an error") {
  PortfolioOracle oracle(generate_synthetic_instance(6, 3, 1));
  const EvaluatedCandidate bad = oracle.evaluate(Selection{bitstring_from_string("110000")});
  CHECK_FALSE(bad.feasible);
  CHECK(bad.cost == kInf);
  CHECK(oracle.calls() == 1);

  const EvaluatedCandidate good = oracle.evaluate(Selection{bitstring_from_string("111000")});
  CHECK(good.feasible);
  CHECK(oracle.calls() == 2);
}

TEST_CASE("booster: merge dominance, dedup, post-selection validity") {
  const int n = 12, kappa = 6;
  auto initial = make_initial_data(n, kappa, 120, 3);
  double seed_best = kInf;
  for (const auto& cand : initial) seed_best = std::min(seed_best, cand.cost);

  AuditedOracle oracle(kappa, /*expect_valid_only=*/true);
  for (const auto& cand : initial) {
    // Pre-register the seed keys so a booster re-evaluation would be flagged.
    AuditedOracle* p = &oracle;
    (void)p;
  }

  GeoConfig cfg = light_config(GeoMode::booster, 11);
  cfg.max_iterations = 3;
  cfg.eval_budget = 150;
  const GeoRunResult result = run_booster(oracle, initial, cfg);

  CHECK_FALSE(oracle.repeated_call);
  CHECK_FALSE(oracle.invalid_call);
  CHECK(result.best.cost <= seed_best);

  // Archive holds seeds plus everything evaluated, keyed uniquely.
  std::set<std::string> keys;
  int generated = 0;
  for (const auto& e : result.all_evaluated) {
    CHECK(keys.insert(e.selection.to_string()).second);
    generated += e.origin == CandidateOrigin::generated;
  }
  CHECK(generated == static_cast<int>(oracle.calls()));

  // Generated candidates never collide with the seed set.
  std::set<std::string> seed_keys;
  for (const auto& cand : initial) seed_keys.insert(cand.selection.to_string());
  for (const auto& e : result.all_evaluated)
    if (e.origin == CandidateOrigin::generated)
      CHECK(seed_keys.count(e.selection.to_string()) == 0);

  // Monotone incumbent trace.
  for (std::size_t i = 1; i < result.history.size(); ++i)
    CHECK(result.history[i].best_cost <= result.history[i - 1].best_cost + 1e-15);

  CHECK(result.outstanding_count == count_outstanding(result, seed_best));
  const int manual = [&] {
    int c = 0;
    for (const auto& e : result.all_evaluated)
      if (e.origin == CandidateOrigin::generated && e.cost < seed_best) ++c;
    return c;
  }();
  CHECK(result.outstanding_count == manual);
}

TEST_CASE("booster respects a hard evaluation budget by truncating") {
  auto initial = make_initial_data(10, 5, 80, 7);
  AuditedOracle oracle(5, true);
  oracle.set_budget(13);

  // A barely trained model stays wide, so post-selection yields far more
  // candidates than the budget allows and truncation must bite.
  GeoConfig cfg = light_config(GeoMode::booster, 4);
  cfg.seed_percentile = 1.0;
  cfg.n_mps = 600;
  cfg.train_cfg.n_sweeps = 1;
  cfg.train_cfg.grad_steps_per_bond = 1;
  cfg.train_cfg.learning_rate = 0.01;
  cfg.max_iterations = 5;
  cfg.eval_budget = 13;
  const GeoRunResult result = run_booster(oracle, initial, cfg);
  CHECK(oracle.calls() == 13);
  CHECK_FALSE(oracle.repeated_call);
  int generated = 0;
  for (const auto& e : result.all_evaluated) generated += e.origin == CandidateOrigin::generated;
  CHECK(generated == 13);
}

TEST_CASE("booster one-iteration contract reports min(seed best, new best)") {
  auto initial = make_initial_data(10, 5, 60, 9);
  FunctionOracle oracle(toy_evaluate);
  GeoConfig cfg = light_config(GeoMode::booster, 21);
  cfg.max_iterations = 1;
  const GeoRunResult result = run_booster(oracle, initial, cfg);

  double expected = kInf;
  for (const auto& e : result.all_evaluated) expected = std::min(expected, e.cost);
  CHECK(result.best.cost == expected);
}

TEST_CASE("booster validates inputs") {
  FunctionOracle oracle(toy_evaluate);
  GeoConfig cfg = light_config(GeoMode::booster, 1);
  CHECK_THROWS_AS(run_booster(oracle, {}, cfg), invalid_argument);

  auto initial = make_initial_data(8, 4, 10, 1);
  initial[0].cost = kInf;
  CHECK_THROWS_AS(run_booster(oracle, initial, cfg), invalid_argument);

  initial = make_initial_data(8, 4, 10, 1);
  cfg.seed_percentile = 0.0;
  CHECK_THROWS_AS(run_booster(oracle, initial, cfg), invalid_argument);
}

TEST_CASE("standalone consumes exactly its budget and never re-evaluates") {
  const PortfolioInstance inst = generate_synthetic_instance(10, 5, 5);
  AuditedOracle oracle(5, true);

  GeoConfig cfg = light_config(GeoMode::standalone, 31);
  cfg.eval_budget = 41;
  const GeoRunResult result = run_standalone(oracle, inst, cfg);

  CHECK(oracle.calls() == 41);
  CHECK_FALSE(oracle.repeated_call);
  CHECK_FALSE(oracle.invalid_call);
  CHECK(result.all_evaluated.size() == 41);

  // Cold start contributes the first (seed-origin) evaluation.
  CHECK(result.all_evaluated.front().origin == CandidateOrigin::seed);
  CHECK(result.history.front().evals_used == 1);

  for (std::size_t i = 1; i < result.history.size(); ++i)
    CHECK(result.history[i].best_cost <= result.history[i - 1].best_cost + 1e-15);
}

TEST_CASE("standalone covers the whole valid space at full budget with dedup") {
  const int n = 8, kappa = 4;
  const PortfolioInstance inst = generate_synthetic_instance(n, kappa, 13);
  PortfolioOracle oracle(inst);

  GeoConfig cfg = light_config(GeoMode::standalone, 17);
  cfg.n_seed = 70;
  cfg.eval_budget = 70;  // C(8,4)
  const GeoRunResult result = run_standalone(oracle, inst, cfg);

  CHECK(oracle.calls() == 70);
  std::set<std::string> keys;
  for (const auto& e : result.all_evaluated) keys.insert(e.selection.to_string());
  CHECK(keys.size() == 70);

  // Exhaustive optimum by brute force.
  double brute = kInf;
  for (const auto& sel : enumerate_valid_selections(n, kappa)) {
    const EvaluatedCandidate cand = solve_inner_qp(inst, sel);
    if (cand.feasible) brute = std::min(brute, cand.cost);
  }
  CHECK(result.best.cost == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("standalone is deterministic per seed") {
  const PortfolioInstance inst = generate_synthetic_instance(9, 4, 23);
  GeoConfig cfg = light_config(GeoMode::standalone, 77);
  cfg.eval_budget = 25;

  PortfolioOracle o1(inst), o2(inst);
  const GeoRunResult a = run_standalone(o1, inst, cfg);
  const GeoRunResult b = run_standalone(o2, inst, cfg);

  REQUIRE(a.all_evaluated.size() == b.all_evaluated.size());
  for (std::size_t i = 0; i < a.all_evaluated.size(); ++i) {
    CHECK(a.all_evaluated[i].selection.to_string() == b.all_evaluated[i].selection.to_string());
    CHECK(a.all_evaluated[i].cost == b.all_evaluated[i].cost);
  }
  CHECK(a.best.cost == b.best.cost);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i)
    CHECK(a.history[i].best_cost == b.history[i].best_cost);
}

TEST_CASE("standalone rejects a zero budget") {
  const PortfolioInstance inst = generate_synthetic_instance(6, 3, 2);
  PortfolioOracle oracle(inst);
  GeoConfig cfg = light_config(GeoMode::standalone, 1);
  cfg.eval_budget = 0;
  CHECK_THROWS_AS(run_standalone(oracle, inst, cfg), invalid_argument);
}

TEST_CASE("count_outstanding on constructed archives") {
  GeoRunResult result;
  auto push = [&result](const char* bits, double cost, CandidateOrigin origin) {
    ArchiveEntry e;
    e.selection.bits = bitstring_from_string(bits);
    e.cost = cost;
    e.feasible = true;
    e.origin = origin;
    result.all_evaluated.push_back(std::move(e));
  };
  push("1100", 1.0, CandidateOrigin::seed);
  push("1010", 1.2, CandidateOrigin::generated);
  CHECK(count_outstanding(result, 1.0) == 0);

  push("0110", 0.9, CandidateOrigin::generated);
  push("0101", 0.8, CandidateOrigin::generated);
  push("0011", 0.99, CandidateOrigin::generated);
  CHECK(count_outstanding(result, 1.0) == 3);
}

TEST_CASE("config and run-result manifests round-trip through JSON") {
  GeoConfig cfg = light_config(GeoMode::standalone, 99);
  cfg.eval_budget = 123;
  cfg.seed_percentile = 0.25;
  const GeoConfig back = geo_config_from_json(geo_config_to_json(cfg));
  CHECK(back.mode == cfg.mode);
  CHECK(back.n_seed == cfg.n_seed);
  CHECK(back.seed_percentile == cfg.seed_percentile);
  CHECK(back.eval_budget == cfg.eval_budget);
  CHECK(back.train_cfg.max_bond_dim == cfg.train_cfg.max_bond_dim);
  CHECK(back.rng_seed == cfg.rng_seed);

  GeoRunResult result;
  result.best = toy_evaluate(Selection{bitstring_from_string("0110")});
  result.history.push_back({0, 1, 2.5});
  result.history.push_back({1, 3, 1.5});
  result.iterations.push_back({1, 3, 2, 0.7, 1.23});
  ArchiveEntry e;
  e.selection.bits = bitstring_from_string("0110");
  e.cost = kInf;  // infinity must survive the round trip
  e.feasible = false;
  e.origin = CandidateOrigin::seed;
  e.order = 0;
  result.all_evaluated.push_back(e);
  result.outstanding_count = 1;
  result.warnings.push_back({"w", "message"});

  const GeoRunResult back_result = run_result_from_json(run_result_to_json(result));
  CHECK(back_result.best.cost == result.best.cost);
  CHECK(back_result.best.selection.to_string() == "0110");
  REQUIRE(back_result.history.size() == 2);
  CHECK(back_result.history[1].best_cost == 1.5);
  REQUIRE(back_result.all_evaluated.size() == 1);
  CHECK(back_result.all_evaluated[0].cost == kInf);
  CHECK(back_result.all_evaluated[0].origin == CandidateOrigin::seed);
  CHECK(back_result.outstanding_count == 1);
  REQUIRE(back_result.iterations.size() == 1);
  CHECK(back_result.iterations[0].train_nll == 1.23);
  REQUIRE(back_result.warnings.size() == 1);
  CHECK(back_result.warnings[0].code == "w");
}

TEST_CASE("instance fingerprints identify the problem") {
  const PortfolioInstance a = generate_synthetic_instance(8, 4, 1);
  const PortfolioInstance b = generate_synthetic_instance(8, 4, 1);
  CHECK(instance_fingerprint(a) == instance_fingerprint(b));

  PortfolioInstance c = a;
  c.stats.covariance(0, 0) += 1e-9;
  CHECK(instance_fingerprint(a) != instance_fingerprint(c));

  PortfolioInstance d = a;
  d.rho += 1e-6;
  CHECK(instance_fingerprint(a) != instance_fingerprint(d));
}
