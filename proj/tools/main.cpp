// Command-line driver: data ingestion, frontier computation, single solver
// runs, frontier metrics, and seeded multi-repetition comparisons.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "geopt/baselines.hpp"
#include "geopt/geo_engine.hpp"
#include "geopt/harness.hpp"
#include "geopt/log.hpp"
#include "geopt/metrics.hpp"
#include "geopt/portfolio.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw geopt::io_error("cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw geopt::invalid_data(path + ": " + e.what());
  }
  return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw geopt::io_error("cannot write " + path);
  os << j.dump(2) << '\n';
}

struct GlobalOpts {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = ".";
  int jobs = 1;
};

int cmd_ingest(const GlobalOpts& g, const std::string& input, const std::string& format,
               int n_assets, std::uint64_t instance_seed, int kappa, const std::string& mode,
               double rho, bool rho_set, double lambda, double lower, double upper) {
  geopt::PortfolioInstance inst;
  if (format == "synthetic") {
    const int k = kappa > 0 ? kappa : std::max(1, n_assets / 2);
    inst = geopt::generate_synthetic_instance(n_assets, k, instance_seed);
  } else if (format == "csv") {
    geopt::PriceSeries series = geopt::read_price_csv(input);
    inst.stats = geopt::compute_returns(series);
    inst.n_assets = static_cast<int>(series.asset_ids.size());
    inst.cardinality = kappa > 0 ? kappa : std::max(1, inst.n_assets / 2);
    inst.rho = inst.stats.mean_returns.mean();
  } else if (format == "orlib") {
    geopt::OrLibraryData data = geopt::read_orlib_port(input);
    inst.stats = data.stats;
    inst.n_assets = data.n_assets;
    inst.cardinality = kappa > 0 ? kappa : std::max(1, inst.n_assets / 2);
    inst.rho = inst.stats.mean_returns.mean();
  } else {
    throw geopt::config_error("ingest: unknown format " + format);
  }
  if (format != "synthetic") {
    inst.lower_bounds = Eigen::VectorXd::Constant(inst.n_assets, lower);
    inst.upper_bounds = Eigen::VectorXd::Constant(inst.n_assets, upper);
  } else {
    inst.lower_bounds.setConstant(lower);
    inst.upper_bounds.setConstant(upper);
  }
  inst.objective_mode = mode == "risk_aversion" ? geopt::ObjectiveMode::risk_aversion
                                                : geopt::ObjectiveMode::return_target;
  if (rho_set) inst.rho = rho;
  inst.lambda = lambda;
  geopt::validate_instance(inst);

  std::filesystem::create_directories(g.out);
  const std::string path = g.out + "/instance.json";
  write_json(path, geopt::instance_to_json(inst));
  std::cout << "wrote " << path << " (N=" << inst.n_assets << ", kappa=" << inst.cardinality
            << ")\n";
  return 0;
}

int cmd_frontier(const GlobalOpts& g, const std::string& instance_path, int points) {
  geopt::PortfolioInstance inst = geopt::instance_from_json(load_json(instance_path));
  geopt::FrontierSet frontier =
      geopt::standard_frontier(inst.stats, inst.lower_bounds, inst.upper_bounds, points);
  std::filesystem::create_directories(g.out);
  const std::string path = g.out + "/frontier_standard.json";
  write_json(path, geopt::frontier_to_json(frontier));
  std::cout << "wrote " << path << " (" << frontier.points.size() << " points)\n";
  return 0;
}

int cmd_run(const GlobalOpts& g, const std::string& instance_path, const std::string& solver,
            std::uint64_t budget, const std::string& params_json) {
  geopt::PortfolioInstance inst = geopt::instance_from_json(load_json(instance_path));
  nlohmann::json params = nlohmann::json::object();
  if (!params_json.empty()) params = nlohmann::json::parse(params_json);

  geopt::PortfolioOracle oracle(inst);
  oracle.set_budget(budget);
  geopt::GeoRunResult result =
      geopt::run_registered_solver(solver, oracle, inst, params, budget, g.seed);

  nlohmann::json manifest;
  manifest["schema"] = 1;
  manifest["solver"] = solver;
  manifest["params"] = params;
  manifest["seed"] = g.seed;
  manifest["budget"] = budget;
  manifest["instance_fingerprint"] = geopt::instance_fingerprint(inst);
  manifest["oracle_calls"] = oracle.calls();
  manifest["result"] = geopt::run_result_to_json(result);

  std::filesystem::create_directories(g.out);
  const std::string path = g.out + "/run_" + solver + ".json";
  write_json(path, manifest);
  std::cout << "wrote " << path << "\n";
  std::cout << solver << ": best cost "
            << (result.best.feasible ? std::to_string(result.best.cost) : "infeasible") << " in "
            << oracle.calls() << " evaluations\n";
  return 0;
}

int cmd_metrics(const GlobalOpts& g, const std::string& standard_path,
                const std::string& heuristic_path, const std::string& format) {
  geopt::FrontierSet standard = geopt::frontier_from_json(load_json(standard_path));
  standard.kind = geopt::FrontierKind::standard;
  geopt::FrontierSet heuristic = geopt::frontier_from_json(load_json(heuristic_path));

  geopt::WarningLog warnings;
  geopt::MetricReport report = geopt::metric_report(standard, heuristic, &warnings);
  std::filesystem::create_directories(g.out);
  if (format == "json") {
    write_json(g.out + "/metrics.json", geopt::metric_report_to_json(report));
  } else {
    std::ofstream os(g.out + "/metrics.csv");
    os << "pde_mean,pde_median,pde_min,pde_max,meucd,vre,mre,epsilon,epsilon_star\n"
       << report.pde_mean << ',' << report.pde_median << ',' << report.pde_min << ','
       << report.pde_max << ',' << report.meucd << ',' << report.vre << ',' << report.mre << ','
       << report.n_heuristic << ',' << report.n_standard << '\n';
  }
  std::cout << "pde mean " << report.pde_mean << " median " << report.pde_median << " meucd "
            << report.meucd << " vre " << report.vre << " mre " << report.mre << "\n";
  return 0;
}

int cmd_compare(const GlobalOpts& g, const std::string& format) {
  if (g.config.empty()) throw geopt::config_error("compare: --config is required");
  geopt::ExperimentSpec spec = geopt::parse_experiment_spec(load_json(g.config));
  if (g.seed_set) spec.root_seed = g.seed;
  if (!g.out.empty() && g.out != ".") spec.out_dir = g.out;
  if (spec.out_dir.empty()) spec.out_dir = "geopt-out";
  if (g.jobs > 0) spec.jobs = g.jobs;

  geopt::ComparisonSummary summary = geopt::run_experiment(spec);
  const auto files = geopt::emit_report(
      summary, spec, format == "json" ? geopt::ReportFormat::json : geopt::ReportFormat::csv);

  for (const auto& s : summary.solvers) {
    std::cout << s.name << ": median best " << s.best_ci.median << " [" << s.best_ci.lo << ", "
              << s.best_ci.hi << "], " << s.oracle_calls << " evals/rep\n";
  }
  for (const auto& e : summary.enhancements)
    std::cout << "relative enhancement vs " << e.versus << ": " << e.eta.median << "% ["
              << e.eta.lo << "%, " << e.eta.hi << "%]\n";
  if (!summary.budget_parity) std::cout << "warning: oracle call counts differ across solvers\n";
  std::cout << "wrote " << files.size() << " report files under " << spec.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generator-enhanced optimization for cardinality-constrained portfolios"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config, "experiment config file (JSON)");
  auto* seed_opt = app.add_option("--seed", g.seed, "root RNG seed");
  app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option("--jobs", g.jobs, "worker threads for experiment cells")->capture_default_str();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "build an instance file from price or stats data");
  std::string in_input, in_format = "csv", in_mode = "return_target";
  int in_assets = 30, in_kappa = 0;
  std::uint64_t in_seed = 0;
  double in_rho = 0.0, in_lambda = 0.5, in_lower = 0.0, in_upper = 1.0;
  ingest->add_option("--input", in_input, "price CSV or OR-Library port file");
  ingest->add_option("--format", in_format, "csv | orlib | synthetic")->capture_default_str();
  ingest->add_option("--assets", in_assets, "asset count (synthetic)")->capture_default_str();
  ingest->add_option("--instance-seed", in_seed, "generator seed (synthetic)");
  ingest->add_option("--kappa", in_kappa, "cardinality (default: N/2)");
  ingest->add_option("--mode", in_mode, "return_target | risk_aversion")->capture_default_str();
  auto* rho_opt = ingest->add_option("--rho", in_rho, "target return");
  ingest->add_option("--lambda", in_lambda, "risk aversion in [0,1]")->capture_default_str();
  ingest->add_option("--lower", in_lower, "uniform lower weight bound")->capture_default_str();
  ingest->add_option("--upper", in_upper, "uniform upper weight bound")->capture_default_str();

  // frontier
  auto* frontier = app.add_subcommand("frontier", "standard (unconstrained) efficient frontier");
  std::string fr_instance;
  int fr_points = 100;
  frontier->add_option("--instance", fr_instance, "instance JSON")->required();
  frontier->add_option("--points", fr_points, "return grid size")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "run one solver on an instance");
  std::string run_instance, run_solver, run_params;
  std::uint64_t run_budget = 1000;
  run->add_option("--instance", run_instance, "instance JSON")->required();
  run->add_option("--solver", run_solver, "registered solver name")->required();
  run->add_option("--budget", run_budget, "oracle evaluation budget")->capture_default_str();
  run->add_option("--params", run_params, "solver parameter overrides (JSON literal)");

  // metrics
  auto* metrics = app.add_subcommand("metrics", "frontier-distance metric report");
  std::string me_standard, me_heuristic, me_format = "csv";
  metrics->add_option("--standard", me_standard, "standard frontier JSON")->required();
  metrics->add_option("--heuristic", me_heuristic, "heuristic frontier JSON")->required();
  metrics->add_option("--format", me_format, "csv | json")->capture_default_str();

  // compare
  auto* compare = app.add_subcommand("compare", "seeded multi-repetition solver comparison");
  std::string cmp_format = "csv";
  compare->add_option("--format", cmp_format, "csv | json")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  g.seed_set = seed_opt->count() > 0;

  try {
    if (ingest->parsed())
      return cmd_ingest(g, in_input, in_format, in_assets, in_seed, in_kappa, in_mode, in_rho,
                        rho_opt->count() > 0, in_lambda, in_lower, in_upper);
    if (frontier->parsed()) return cmd_frontier(g, fr_instance, fr_points);
    if (run->parsed()) return cmd_run(g, run_instance, run_solver, run_budget, run_params);
    if (metrics->parsed()) return cmd_metrics(g, me_standard, me_heuristic, me_format);
    if (compare->parsed()) return cmd_compare(g, cmp_format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
