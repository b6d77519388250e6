#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geopt/geo_engine.hpp"
#include "geopt/metrics.hpp"
#include "geopt/portfolio.hpp"

namespace geopt {

struct BootstrapCi {
  double median = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap interval of the median; deterministic per seed.
BootstrapCi bootstrap_median_ci(std::span<const double> samples, int n_resamples,
                                double confidence, std::uint64_t seed);

/// A roster entry: registered solver name plus its parameter overrides.
struct SolverSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

enum class InstanceSourceType { synthetic, price_csv, orlib, instance_file };

struct InstanceSource {
  InstanceSourceType type = InstanceSourceType::synthetic;
  std::string path;        // price_csv / orlib / instance_file
  int n_assets = 30;       // synthetic
  std::uint64_t seed = 0;  // synthetic
  int kappa = 0;           // 0: defaults to n_assets / 2
};

struct ExperimentSpec {
  InstanceSource instance;
  ObjectiveMode objective_mode = ObjectiveMode::return_target;
  double objective_value = 0.0;     // rho or lambda; ignored when grid nonempty
  bool objective_value_set = false; // false: synthetic default rho
  std::vector<double> objective_grid;
  double bound_lower = 0.0;
  double bound_upper = 1.0;
  std::vector<SolverSpec> solvers;
  int repetitions = 20;
  std::uint64_t budget = 1000;
  std::string out_dir;
  std::uint64_t root_seed = 0;
  int bootstrap_resamples = 10000;
  double confidence = 0.95;
  int frontier_points = 100;
  int trace_points = 50;
  int jobs = 1;
  bool allow_unequal_budgets = false;
};

ExperimentSpec parse_experiment_spec(const nlohmann::json& j);
nlohmann::json experiment_spec_to_json(const ExperimentSpec& spec);

/// Builds the problem instance a spec describes (synthetic, CSV, OR-Library
/// file, or a previously ingested instance JSON).
PortfolioInstance build_instance(const ExperimentSpec& spec);

PortfolioInstance instance_from_json(const nlohmann::json& j);
nlohmann::json instance_to_json(const PortfolioInstance& instance);

nlohmann::json frontier_to_json(const FrontierSet& frontier);
FrontierSet frontier_from_json(const nlohmann::json& j);

nlohmann::json metric_report_to_json(const MetricReport& report);

struct TracePoint {
  std::uint64_t evals = 0;
  double median = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct SolverSummary {
  std::string name;
  std::vector<double> final_best;  // per repetition, first grid point
  BootstrapCi best_ci;
  std::vector<TracePoint> trace;
  std::vector<std::vector<HistoryPoint>> rep_histories;  // first grid point
  std::uint64_t oracle_calls = 0;  // per repetition (equal across reps)
  bool calls_equal_across_reps = true;
  std::optional<MetricReport> metrics;  // grid experiments only
  FrontierSet heuristic_frontier;       // grid experiments only
};

struct EnhancementSummary {
  std::string versus;  // classical solver name
  BootstrapCi eta;     // per-repetition paired relative enhancement
};

struct HistogramRow {
  double cost = 0.0;
  std::string origin;  // "seed" or "generated"
  std::uint64_t count = 0;
};

struct ComparisonSummary {
  std::vector<SolverSummary> solvers;
  std::string geo_solver;  // roster entry the enhancements are relative to
  std::vector<EnhancementSummary> enhancements;
  FrontierSet standard_frontier;  // grid experiments only
  bool has_frontier = false;
  std::vector<HistogramRow> histogram;  // first booster-style solver
  std::string histogram_solver;
  bool budget_parity = true;
  WarningLog warnings;
};

/// Runs every (solver, repetition, grid point) cell with derived seeds and a
/// hard per-cell oracle budget, persisting one manifest per cell under
/// out_dir/cells; completed cells are reused on re-run, so an interrupted
/// experiment resumes where it stopped.
ComparisonSummary run_experiment(const ExperimentSpec& spec);

enum class ReportFormat { csv, json };

/// Writes summary.json plus traces/metrics/histogram data files in the
/// chosen flavor; returns the written paths.
std::vector<std::string> emit_report(const ComparisonSummary& summary, const ExperimentSpec& spec,
                                     ReportFormat format);

/// Solver registry: the extension hook for plugging external strategies
/// into comparisons. Budget is a hard cap (also enforced by the oracle).
using SolverFn = std::function<GeoRunResult(CostOracle& oracle, const PortfolioInstance& instance,
                                            const nlohmann::json& params, std::uint64_t budget,
                                            std::uint64_t seed)>;
void register_solver(const std::string& name, SolverFn fn);
bool solver_registered(const std::string& name);
std::vector<std::string> registered_solvers();
GeoRunResult run_registered_solver(const std::string& name, CostOracle& oracle,
                                   const PortfolioInstance& instance, const nlohmann::json& params,
                                   std::uint64_t budget, std::uint64_t seed);

}  // namespace geopt
