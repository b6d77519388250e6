#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "geopt/baselines.hpp"
#include "geopt/harness.hpp"
#include "geopt/rng.hpp"

using namespace geopt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream is(path);
  REQUIRE(is);
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

nlohmann::json small_compare_config(const std::string& out_dir) {
  return {
      {"instance", {{"type", "synthetic"}, {"n_assets", 8}, {"kappa", 4}, {"seed", 3}}},
      {"objective", {{"mode", "return_target"}}},
      {"solvers",
       {{{"name", "conditioned_random"}}, {{"name", "unconstrained_random"}}}},
      {"repetitions", 3},
      {"budget", 30},
      {"out_dir", out_dir},
      {"root_seed", 11},
      {"bootstrap_resamples", 300},
      {"trace_points", 8},
      {"jobs", 2},
  };
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "geopt_harness_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("bootstrap median interval basics") {
  const std::vector<double> constant(10, 3.25);
  const BootstrapCi c = bootstrap_median_ci(constant, 500, 0.95, 1);
  CHECK(c.median == 3.25);
  CHECK(c.lo == 3.25);
  CHECK(c.hi == 3.25);

  std::vector<double> ramp(100);
  for (int i = 0; i < 100; ++i) ramp[static_cast<std::size_t>(i)] = i + 1.0;
  const BootstrapCi r = bootstrap_median_ci(ramp, 10000, 0.95, 2);
  CHECK(r.median == 50.5);
  CHECK(r.lo <= 50.5);
  CHECK(r.hi >= 50.5);
  CHECK(r.hi > r.lo);

  const BootstrapCi again = bootstrap_median_ci(ramp, 10000, 0.95, 2);
  CHECK(again.lo == r.lo);
  CHECK(again.hi == r.hi);

  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> v(1 + rng.next_below(40));
    for (auto& x : v) x = rng.next_normal();
    const BootstrapCi ci = bootstrap_median_ci(v, 400, 0.9, rng.next_u64());
    CHECK(ci.lo <= ci.median);
    CHECK(ci.median <= ci.hi);
  }

  CHECK_THROWS_AS(bootstrap_median_ci({}, 100, 0.95, 1), invalid_argument);
}

TEST_CASE("experiment spec parsing and validation") {
  const nlohmann::json j = small_compare_config("unused");
  const ExperimentSpec spec = parse_experiment_spec(j);
  CHECK(spec.instance.type == InstanceSourceType::synthetic);
  CHECK(spec.instance.n_assets == 8);
  CHECK(spec.solvers.size() == 2);
  CHECK(spec.budget == 30);
  CHECK(spec.jobs == 2);

  nlohmann::json bad = j;
  bad["solvers"][0]["name"] = "definitely_not_registered";
  CHECK_THROWS_WITH_AS(parse_experiment_spec(bad), doctest::Contains("registered:"),
                       config_error);

  bad = j;
  bad["solvers"] = nlohmann::json::array();
  CHECK_THROWS_AS(parse_experiment_spec(bad), config_error);

  bad = j;
  bad.erase("instance");
  CHECK_THROWS_AS(parse_experiment_spec(bad), config_error);
}

TEST_CASE("solver registry lists built-ins and accepts extensions") {
  const auto names = registered_solvers();
  for (const char* expected :
       {"tn_geo_standalone", "sa", "sa_then_booster", "conditioned_random",
        "unconstrained_random"})
    CHECK(std::find(names.begin(), names.end(), expected) != names.end());

  register_solver("test_fixed_point", [](CostOracle& oracle, const PortfolioInstance& inst,
                                         const nlohmann::json&, std::uint64_t budget,
                                         std::uint64_t seed) {
    Rng rng(seed);
    GeoRunResult result;
    result.best.cost = std::numeric_limits<double>::infinity();
    for (std::uint64_t i = 0; i < budget; ++i) {
      const EvaluatedCandidate cand =
          oracle.evaluate(random_valid_selection(inst.n_assets, inst.cardinality, rng));
      if (cand.feasible && cand.cost < result.best.cost) {
        result.best = cand;
        result.history.push_back({0, oracle.calls(), cand.cost});
      }
    }
    result.history.push_back({0, oracle.calls(), result.best.cost});
    return result;
  });
  CHECK(solver_registered("test_fixed_point"));

  const PortfolioInstance inst = generate_synthetic_instance(6, 3, 5);
  PortfolioOracle oracle(inst);
  oracle.set_budget(12);
  const GeoRunResult run = run_registered_solver("test_fixed_point", oracle, inst,
                                                 nlohmann::json::object(), 12, 9);
  CHECK(oracle.calls() == 12);
  CHECK(run.best.feasible);
}

TEST_CASE("instance JSON round-trips through the ingestion format") {
  const PortfolioInstance inst = generate_synthetic_instance(7, 3, 13);
  const PortfolioInstance back = instance_from_json(instance_to_json(inst));
  CHECK(back.n_assets == inst.n_assets);
  CHECK(back.cardinality == inst.cardinality);
  CHECK(back.rho == inst.rho);
  CHECK((back.stats.covariance - inst.stats.covariance).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.stats.mean_returns - inst.stats.mean_returns).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("comparison run: parity, monotone traces, determinism, resume") {
  const fs::path dir_a = fresh_dir("run_a");
  const ExperimentSpec spec = parse_experiment_spec(small_compare_config(dir_a.string()));

  const ComparisonSummary summary = run_experiment(spec);
  REQUIRE(summary.solvers.size() == 2);
  CHECK(summary.budget_parity);
  for (const auto& s : summary.solvers) {
    CHECK(s.oracle_calls == 30);
    CHECK(s.calls_equal_across_reps);
    CHECK(s.final_best.size() == 3);
    for (std::size_t i = 1; i < s.trace.size(); ++i)
      CHECK(s.trace[i].median <= s.trace[i - 1].median + 1e-15);
    for (const auto& t : s.trace) {
      CHECK(t.lo <= t.median);
      CHECK(t.median <= t.hi);
    }
  }

  const auto files = emit_report(summary, spec, ReportFormat::csv);
  CHECK(files.size() >= 4);
  const std::string summary_a = slurp(dir_a / "summary.json");
  const std::string traces_a = slurp(dir_a / "traces.csv");

  SUBCASE("re-running reuses the cell manifests and reproduces every byte") {
    const ComparisonSummary resumed = run_experiment(spec);
    emit_report(resumed, spec, ReportFormat::csv);
    CHECK(slurp(dir_a / "summary.json") == summary_a);
    CHECK(slurp(dir_a / "traces.csv") == traces_a);
  }

  SUBCASE("a fresh directory gives identical results modulo the echoed path") {
    const fs::path dir_b = fresh_dir("run_b");
    ExperimentSpec spec_b = spec;
    spec_b.out_dir = dir_b.string();
    const ComparisonSummary fresh = run_experiment(spec_b);
    emit_report(fresh, spec_b, ReportFormat::csv);
    CHECK(slurp(dir_b / "traces.csv") == traces_a);

    nlohmann::json ja = nlohmann::json::parse(summary_a);
    nlohmann::json jb = nlohmann::json::parse(slurp(dir_b / "summary.json"));
    ja["spec"].erase("out_dir");
    jb["spec"].erase("out_dir");
    CHECK(ja == jb);
  }

  SUBCASE("a corrupt cell manifest names the cell on resume") {
    {
      std::ofstream os(dir_a / "cells" / "conditioned_random__rep0__g0.json");
      os << "{ corrupt";
    }
    CHECK_THROWS_AS(run_experiment(spec), resume_error);
  }

  SUBCASE("a changed root seed refuses to reuse mismatched manifests") {
    ExperimentSpec reseeded = spec;
    reseeded.root_seed = 999;
    CHECK_THROWS_AS(run_experiment(reseeded), resume_error);
  }
}

TEST_CASE("grid experiments produce frontiers and metric rows") {
  const fs::path dir = fresh_dir("grid");
  nlohmann::json j = small_compare_config(dir.string());
  j["objective"] = {{"mode", "risk_aversion"}, {"lambda_grid", {0.2, 0.5, 0.8}}};
  j["solvers"] = {{{"name", "conditioned_random"}}};
  j["repetitions"] = 2;
  j["budget"] = 25;
  j["frontier_points"] = 30;
  const ExperimentSpec spec = parse_experiment_spec(j);

  const ComparisonSummary summary = run_experiment(spec);
  CHECK(summary.has_frontier);
  CHECK(summary.standard_frontier.points.size() >= 5);
  REQUIRE(summary.solvers.size() == 1);
  REQUIRE(summary.solvers[0].metrics.has_value());
  CHECK(summary.solvers[0].metrics->pde_mean >= 0.0);
  CHECK(summary.solvers[0].heuristic_frontier.points.size() >= 1);

  const auto files = emit_report(summary, spec, ReportFormat::csv);
  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(fs::exists(dir / "frontier_standard.json"));
  CHECK(fs::exists(dir / "frontier_conditioned_random.json"));
  const std::string metrics = slurp(dir / "metrics.csv");
  CHECK(metrics.find("conditioned_random") != std::string::npos);

  // The emitted frontier parses back into the same points.
  const FrontierSet back = frontier_from_json(
      nlohmann::json::parse(slurp(dir / "frontier_standard.json")));
  CHECK(back.points.size() == summary.standard_frontier.points.size());
}

TEST_CASE("booster comparisons emit the seed/generated histogram consistently") {
  const fs::path dir = fresh_dir("hist");
  nlohmann::json j = small_compare_config(dir.string());
  j["instance"] = {{"type", "synthetic"}, {"n_assets", 10}, {"kappa", 5}, {"seed", 21}};
  j["solvers"] = {{{"name", "sa_then_booster"},
                   {"params",
                    {{"sa_fraction", 0.5},
                     {"n_train", 300},
                     {"n_mps", 200},
                     {"seed_percentile", 0.5},
                     {"train", {{"n_sweeps", 2}, {"max_bond_dim", 4}, {"grad_steps_per_bond", 2}}}}}},
                  {{"name", "sa"}}};
  j["budget"] = 60;
  j["repetitions"] = 2;
  const ExperimentSpec spec = parse_experiment_spec(j);

  const ComparisonSummary summary = run_experiment(spec);
  CHECK(summary.histogram_solver == "sa_then_booster");
  REQUIRE_FALSE(summary.histogram.empty());

  // Cross-check: the histogram's generated mass strictly below the best seed
  // cost equals the count_outstanding of the repetition-0 manifest.
  const nlohmann::json cell = nlohmann::json::parse(
      slurp(dir / "cells" / "sa_then_booster__rep0__g0.json"));
  const GeoRunResult rep0 = run_result_from_json(cell.at("result"));

  double seed_best = std::numeric_limits<double>::infinity();
  for (const auto& e : rep0.all_evaluated)
    if (e.origin == CandidateOrigin::seed && e.feasible) seed_best = std::min(seed_best, e.cost);

  std::uint64_t below = 0;
  for (const auto& row : summary.histogram)
    if (row.origin == "generated" && row.cost < seed_best) below += row.count;
  CHECK(static_cast<int>(below) == count_outstanding(rep0, seed_best));
  CHECK(rep0.outstanding_count == count_outstanding(rep0, seed_best));

  // Relative enhancement of the generator-backed strategy is reported.
  CHECK(summary.geo_solver == "sa_then_booster");
  REQUIRE(summary.enhancements.size() == 1);
  CHECK(summary.enhancements[0].versus == "sa");

  emit_report(summary, spec, ReportFormat::csv);
  const std::string hist = slurp(dir / "histogram.csv");
  CHECK(hist.find("seed") != std::string::npos);
  CHECK(hist.find("generated") != std::string::npos);
}

TEST_CASE("emit_report insists on a roster and an output directory") {
  ComparisonSummary empty;
  ExperimentSpec spec;
  spec.out_dir = "unused";
  CHECK_THROWS_AS(emit_report(empty, spec, ReportFormat::csv), invalid_argument);
}
