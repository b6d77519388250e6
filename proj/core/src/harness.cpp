#include "geopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "geopt/baselines.hpp"
#include "geopt/log.hpp"
#include "geopt/rng.hpp"
#include "geopt/stats.hpp"
#include "geopt/surrogate.hpp"

namespace geopt {

namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

nlohmann::json ci_to_json(const BootstrapCi& ci) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  return {{"median", num(ci.median)}, {"lo", num(ci.lo)}, {"hi", num(ci.hi)}};
}

}  // namespace

BootstrapCi bootstrap_median_ci(std::span<const double> samples, int n_resamples,
                                double confidence, std::uint64_t seed) {
  if (samples.empty()) throw invalid_argument("bootstrap_median_ci: empty samples");
  if (n_resamples < 1) throw invalid_argument("bootstrap_median_ci: n_resamples must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw invalid_argument("bootstrap_median_ci: confidence must be in (0, 1)");

  std::vector<double> base(samples.begin(), samples.end());
  BootstrapCi out;
  {
    std::vector<double> tmp = base;
    out.median = median_inplace(tmp);
  }

  Rng rng(seed);
  const std::size_t n = base.size();
  std::vector<double> medians(static_cast<std::size_t>(n_resamples));
  std::vector<double> draw(n);
  for (int r = 0; r < n_resamples; ++r) {
    for (std::size_t i = 0; i < n; ++i) draw[i] = base[rng.next_below(n)];
    medians[static_cast<std::size_t>(r)] = median_inplace(draw);
  }
  std::sort(medians.begin(), medians.end());

  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(medians.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double t = pos - std::floor(pos);
    return (1.0 - t) * medians[lo] + t * medians[hi];
  };
  const double tail = (1.0 - confidence) / 2.0;
  out.lo = quantile(tail);
  out.hi = quantile(1.0 - tail);
  return out;
}

// --- experiment spec ---------------------------------------------------------

ExperimentSpec parse_experiment_spec(const nlohmann::json& j) {
  ExperimentSpec spec;
  try {
    const auto& inst = j.at("instance");
    const std::string type = inst.at("type").get<std::string>();
    if (type == "synthetic") {
      spec.instance.type = InstanceSourceType::synthetic;
      spec.instance.n_assets = inst.at("n_assets").get<int>();
      spec.instance.seed = inst.value("seed", std::uint64_t{0});
    } else if (type == "price_csv") {
      spec.instance.type = InstanceSourceType::price_csv;
      spec.instance.path = inst.at("path").get<std::string>();
    } else if (type == "orlib") {
      spec.instance.type = InstanceSourceType::orlib;
      spec.instance.path = inst.at("path").get<std::string>();
    } else if (type == "instance_file") {
      spec.instance.type = InstanceSourceType::instance_file;
      spec.instance.path = inst.at("path").get<std::string>();
    } else {
      throw config_error("experiment spec: unknown instance type " + type);
    }
    spec.instance.kappa = inst.value("kappa", 0);

    if (j.contains("objective")) {
      const auto& obj = j.at("objective");
      const std::string mode = obj.at("mode").get<std::string>();
      if (mode == "return_target") {
        spec.objective_mode = ObjectiveMode::return_target;
        if (obj.contains("rho")) {
          spec.objective_value = obj.at("rho").get<double>();
          spec.objective_value_set = true;
        }
        if (obj.contains("rho_grid"))
          spec.objective_grid = obj.at("rho_grid").get<std::vector<double>>();
      } else if (mode == "risk_aversion") {
        spec.objective_mode = ObjectiveMode::risk_aversion;
        if (obj.contains("lambda")) {
          spec.objective_value = obj.at("lambda").get<double>();
          spec.objective_value_set = true;
        }
        if (obj.contains("lambda_grid"))
          spec.objective_grid = obj.at("lambda_grid").get<std::vector<double>>();
      } else {
        throw config_error("experiment spec: unknown objective mode " + mode);
      }
    }

    if (j.contains("bounds")) {
      spec.bound_lower = j.at("bounds").value("lower", 0.0);
      spec.bound_upper = j.at("bounds").value("upper", 1.0);
    }

    for (const auto& s : j.at("solvers")) {
      SolverSpec solver;
      solver.name = s.at("name").get<std::string>();
      solver.params = s.value("params", nlohmann::json::object());
      spec.solvers.push_back(std::move(solver));
    }

    spec.repetitions = j.value("repetitions", 20);
    spec.budget = j.value("budget", std::uint64_t{1000});
    spec.out_dir = j.value("out_dir", std::string{});
    spec.root_seed = j.value("root_seed", std::uint64_t{0});
    spec.bootstrap_resamples = j.value("bootstrap_resamples", 10000);
    spec.confidence = j.value("confidence", 0.95);
    spec.frontier_points = j.value("frontier_points", 100);
    spec.trace_points = j.value("trace_points", 50);
    spec.jobs = j.value("jobs", 1);
    spec.allow_unequal_budgets = j.value("allow_unequal_budgets", false);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("experiment spec: ") + e.what());
  }

  if (spec.solvers.empty()) throw config_error("experiment spec: empty solver roster");
  if (spec.repetitions < 1) throw config_error("experiment spec: repetitions must be >= 1");
  if (spec.budget < 1) throw config_error("experiment spec: budget must be >= 1");
  for (const auto& s : spec.solvers) {
    if (!solver_registered(s.name)) {
      std::string names;
      for (const auto& r : registered_solvers()) names += (names.empty() ? "" : ", ") + r;
      throw config_error("experiment spec: unknown solver '" + s.name +
                         "'; registered: " + names);
    }
  }
  return spec;
}

nlohmann::json experiment_spec_to_json(const ExperimentSpec& spec) {
  nlohmann::json inst;
  switch (spec.instance.type) {
    case InstanceSourceType::synthetic:
      inst = {{"type", "synthetic"}, {"n_assets", spec.instance.n_assets},
              {"seed", spec.instance.seed}};
      break;
    case InstanceSourceType::price_csv:
      inst = {{"type", "price_csv"}, {"path", spec.instance.path}};
      break;
    case InstanceSourceType::orlib:
      inst = {{"type", "orlib"}, {"path", spec.instance.path}};
      break;
    case InstanceSourceType::instance_file:
      inst = {{"type", "instance_file"}, {"path", spec.instance.path}};
      break;
  }
  inst["kappa"] = spec.instance.kappa;

  nlohmann::json obj;
  obj["mode"] =
      spec.objective_mode == ObjectiveMode::return_target ? "return_target" : "risk_aversion";
  const char* key = spec.objective_mode == ObjectiveMode::return_target ? "rho" : "lambda";
  if (spec.objective_value_set) obj[key] = spec.objective_value;
  if (!spec.objective_grid.empty()) obj[std::string(key) + "_grid"] = spec.objective_grid;

  nlohmann::json solvers = nlohmann::json::array();
  for (const auto& s : spec.solvers) solvers.push_back({{"name", s.name}, {"params", s.params}});

  return {{"instance", inst},
          {"objective", obj},
          {"bounds", {{"lower", spec.bound_lower}, {"upper", spec.bound_upper}}},
          {"solvers", solvers},
          {"repetitions", spec.repetitions},
          {"budget", spec.budget},
          {"out_dir", spec.out_dir},
          {"root_seed", spec.root_seed},
          {"bootstrap_resamples", spec.bootstrap_resamples},
          {"confidence", spec.confidence},
          {"frontier_points", spec.frontier_points},
          {"trace_points", spec.trace_points},
          {"jobs", spec.jobs},
          {"allow_unequal_budgets", spec.allow_unequal_budgets}};
}

nlohmann::json instance_to_json(const PortfolioInstance& inst) {
  const int n = inst.n_assets;
  std::vector<double> cov;
  cov.reserve(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cov.push_back(inst.stats.covariance(i, j));
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  return {{"format", "geopt-instance"},
          {"version", 1},
          {"n_assets", n},
          {"cardinality", inst.cardinality},
          {"mode", inst.objective_mode == ObjectiveMode::return_target ? "return_target"
                                                                       : "risk_aversion"},
          {"rho", inst.rho},
          {"lambda", inst.lambda},
          {"lower_bounds", vec(inst.lower_bounds)},
          {"upper_bounds", vec(inst.upper_bounds)},
          {"mean_returns", vec(inst.stats.mean_returns)},
          {"covariance", cov}};
}

PortfolioInstance instance_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "geopt-instance")
    throw invalid_data("instance: missing geopt-instance format tag");
  PortfolioInstance inst;
  inst.n_assets = j.at("n_assets").get<int>();
  inst.cardinality = j.at("cardinality").get<int>();
  inst.objective_mode = j.at("mode").get<std::string>() == "return_target"
                            ? ObjectiveMode::return_target
                            : ObjectiveMode::risk_aversion;
  inst.rho = j.at("rho").get<double>();
  inst.lambda = j.at("lambda").get<double>();
  auto vec = [&](const char* key) {
    const auto v = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
  };
  inst.lower_bounds = vec("lower_bounds");
  inst.upper_bounds = vec("upper_bounds");
  inst.stats.mean_returns = vec("mean_returns");
  const auto cov = j.at("covariance").get<std::vector<double>>();
  const int n = inst.n_assets;
  if (static_cast<int>(cov.size()) != n * n)
    throw invalid_data("instance: covariance payload size mismatch");
  inst.stats.covariance.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) inst.stats.covariance(i, k) = cov[static_cast<std::size_t>(i) * n + k];
  validate_instance(inst);
  return inst;
}

PortfolioInstance build_instance(const ExperimentSpec& spec) {
  PortfolioInstance inst;
  const auto& src = spec.instance;
  switch (src.type) {
    case InstanceSourceType::synthetic: {
      const int kappa = src.kappa > 0 ? src.kappa : std::max(1, src.n_assets / 2);
      inst = generate_synthetic_instance(src.n_assets, kappa, src.seed);
      break;
    }
    case InstanceSourceType::price_csv: {
      PriceSeries series = read_price_csv(src.path);
      inst.stats = compute_returns(series);
      inst.n_assets = static_cast<int>(series.asset_ids.size());
      inst.cardinality = src.kappa > 0 ? src.kappa : std::max(1, inst.n_assets / 2);
      inst.rho = inst.stats.mean_returns.mean();
      break;
    }
    case InstanceSourceType::orlib: {
      OrLibraryData data = read_orlib_port(src.path);
      inst.stats = data.stats;
      inst.n_assets = data.n_assets;
      inst.cardinality = src.kappa > 0 ? src.kappa : std::max(1, inst.n_assets / 2);
      inst.rho = inst.stats.mean_returns.mean();
      break;
    }
    case InstanceSourceType::instance_file: {
      std::ifstream is(src.path);
      if (!is) throw io_error("build_instance: cannot open " + src.path);
      nlohmann::json j;
      is >> j;
      inst = instance_from_json(j);
      if (src.kappa > 0) inst.cardinality = src.kappa;
      break;
    }
  }

  if (src.type != InstanceSourceType::instance_file) {
    inst.lower_bounds = Eigen::VectorXd::Constant(inst.n_assets, spec.bound_lower);
    inst.upper_bounds = Eigen::VectorXd::Constant(inst.n_assets, spec.bound_upper);
  }
  inst.objective_mode = spec.objective_mode;
  if (spec.objective_value_set) {
    if (spec.objective_mode == ObjectiveMode::return_target)
      inst.rho = spec.objective_value;
    else
      inst.lambda = spec.objective_value;
  }
  validate_instance(inst);
  return inst;
}

// --- solver registry ---------------------------------------------------------

namespace {

GeoConfig geo_config_from_params(const nlohmann::json& params, std::uint64_t budget,
                                 std::uint64_t seed, GeoMode mode) {
  GeoConfig cfg;
  cfg.mode = mode;
  cfg.n_seed = params.value("n_seed", cfg.n_seed);
  cfg.seed_percentile = params.value("seed_percentile", cfg.seed_percentile);
  cfg.n_train = params.value("n_train", cfg.n_train);
  cfg.n_mps = params.value("n_mps", cfg.n_mps);
  cfg.n_select_standalone = params.value("n_select", cfg.n_select_standalone);
  cfg.mps_init_bond = params.value("init_bond", cfg.mps_init_bond);
  cfg.max_iterations = params.value("max_iterations", cfg.max_iterations);
  if (params.contains("train")) {
    const auto& t = params.at("train");
    cfg.train_cfg.max_bond_dim = t.value("max_bond_dim", cfg.train_cfg.max_bond_dim);
    cfg.train_cfg.svd_cutoff = t.value("svd_cutoff", cfg.train_cfg.svd_cutoff);
    cfg.train_cfg.learning_rate = t.value("learning_rate", cfg.train_cfg.learning_rate);
    cfg.train_cfg.n_sweeps = t.value("n_sweeps", cfg.train_cfg.n_sweeps);
    cfg.train_cfg.grad_steps_per_bond =
        t.value("grad_steps_per_bond", cfg.train_cfg.grad_steps_per_bond);
  }
  cfg.eval_budget = budget;
  cfg.rng_seed = seed;
  return cfg;
}

GeoRunResult solver_tn_geo_standalone(CostOracle& oracle, const PortfolioInstance& instance,
                                      const nlohmann::json& params, std::uint64_t budget,
                                      std::uint64_t seed) {
  GeoConfig cfg = geo_config_from_params(params, budget, seed, GeoMode::standalone);
  // A stand-alone run needs a pool at most as large as the valid space.
  if (instance.n_assets <= 24) {
    const auto space = count_valid_selections(instance.n_assets, instance.cardinality);
    cfg.n_seed = static_cast<int>(
        std::min<std::uint64_t>(static_cast<std::uint64_t>(cfg.n_seed), space));
  }
  return run_standalone(oracle, instance, cfg);
}

GeoRunResult solver_sa(CostOracle& oracle, const PortfolioInstance& instance,
                       const nlohmann::json& params, std::uint64_t budget, std::uint64_t seed) {
  SaConfig cfg;
  cfg.t_max = params.value("t_max", cfg.t_max);
  cfg.t_min = params.value("t_min", cfg.t_min);
  cfg.n_steps = static_cast<int>(budget) - 1;
  cfg.rng_seed = seed;
  Rng rng(derive_seed(seed, "sa-start"));
  const Selection start = random_valid_selection(instance.n_assets, instance.cardinality, rng);
  return sa_solve(oracle, instance, cfg, start);
}

GeoRunResult solver_conditioned_random(CostOracle& oracle, const PortfolioInstance& instance,
                                       const nlohmann::json& params, std::uint64_t budget,
                                       std::uint64_t seed) {
  return conditioned_random(oracle, instance, budget, seed, params.value("dedup", false));
}

GeoRunResult solver_unconstrained_random(CostOracle& oracle, const PortfolioInstance& instance,
                                         const nlohmann::json&, std::uint64_t budget,
                                         std::uint64_t seed) {
  return unconstrained_random(oracle, instance, budget, seed);
}

// Strategy: spend part of the budget on SA, then train the generator on the
// SA observations and spend the remainder on its proposals.
GeoRunResult solver_sa_then_booster(CostOracle& oracle, const PortfolioInstance& instance,
                                    const nlohmann::json& params, std::uint64_t budget,
                                    std::uint64_t seed) {
  const double sa_fraction = params.value("sa_fraction", 0.5);
  std::uint64_t sa_calls = static_cast<std::uint64_t>(
      std::llround(sa_fraction * static_cast<double>(budget)));
  sa_calls = std::clamp<std::uint64_t>(sa_calls, 1, budget);

  SaConfig sa_cfg;
  sa_cfg.t_max = params.value("t_max", sa_cfg.t_max);
  sa_cfg.t_min = params.value("t_min", sa_cfg.t_min);
  sa_cfg.n_steps = static_cast<int>(sa_calls) - 1;
  sa_cfg.rng_seed = derive_seed(seed, "booster-sa-phase");
  Rng rng(derive_seed(seed, "booster-sa-start"));
  const Selection start = random_valid_selection(instance.n_assets, instance.cardinality, rng);
  GeoRunResult sa_result = sa_solve(oracle, instance, sa_cfg, start);

  const std::uint64_t remaining = budget - sa_calls;
  if (remaining == 0) return sa_result;

  std::vector<EvaluatedCandidate> initial;
  initial.reserve(sa_result.all_evaluated.size());
  for (const auto& e : sa_result.all_evaluated) {
    if (!std::isfinite(e.cost)) continue;
    EvaluatedCandidate cand;
    cand.selection = e.selection;
    cand.cost = e.cost;
    cand.feasible = e.feasible;
    initial.push_back(std::move(cand));
  }
  if (initial.empty()) return sa_result;

  GeoConfig cfg = geo_config_from_params(params, remaining, derive_seed(seed, "booster-phase"),
                                         GeoMode::booster);
  // Call parity across the roster: unless the caller pins the cycle count,
  // step 8 keeps cycling until the remaining budget is spent.
  if (!params.contains("max_iterations")) cfg.max_iterations = std::numeric_limits<int>::max();

  GeoRunResult result = run_booster(oracle, initial, cfg);

  // Recover the weight vector when the incumbent came from the SA phase.
  if (result.best.feasible && result.best.weights.size() == 0 &&
      result.best.selection.to_string() == sa_result.best.selection.to_string())
    result.best = sa_result.best;
  if (result.best.feasible && result.best.weights.size() == 0)
    result.best = solve_inner_qp(instance, result.best.selection);

  // Splice the SA trace ahead of the booster history.
  std::vector<HistoryPoint> history = sa_result.history;
  for (const auto& h : result.history)
    if (h.evals_used > sa_calls || history.empty()) history.push_back(h);
  result.history = std::move(history);
  for (auto& w : sa_result.warnings) result.warnings.push_back(std::move(w));
  return result;
}

struct Registry {
  std::unordered_map<std::string, SolverFn> fns;
  std::vector<std::string> order;
  std::mutex mutex;
};

Registry& registry() {
  static Registry* reg = [] {
    auto* r = new Registry;
    auto put = [r](const std::string& name, SolverFn fn) {
      r->fns.emplace(name, std::move(fn));
      r->order.push_back(name);
    };
    put("tn_geo_standalone", solver_tn_geo_standalone);
    put("sa", solver_sa);
    put("sa_then_booster", solver_sa_then_booster);
    put("conditioned_random", solver_conditioned_random);
    put("unconstrained_random", solver_unconstrained_random);
    return r;
  }();
  return *reg;
}

}  // namespace

void register_solver(const std::string& name, SolverFn fn) {
  auto& reg = registry();
  std::lock_guard<std::mutex> lock(reg.mutex);
  if (reg.fns.emplace(name, std::move(fn)).second) reg.order.push_back(name);
}

bool solver_registered(const std::string& name) {
  auto& reg = registry();
  std::lock_guard<std::mutex> lock(reg.mutex);
  return reg.fns.count(name) != 0;
}

std::vector<std::string> registered_solvers() {
  auto& reg = registry();
  std::lock_guard<std::mutex> lock(reg.mutex);
  return reg.order;
}

GeoRunResult run_registered_solver(const std::string& name, CostOracle& oracle,
                                   const PortfolioInstance& instance, const nlohmann::json& params,
                                   std::uint64_t budget, std::uint64_t seed) {
  SolverFn fn;
  {
    auto& reg = registry();
    std::lock_guard<std::mutex> lock(reg.mutex);
    auto it = reg.fns.find(name);
    if (it == reg.fns.end()) throw config_error("unknown solver: " + name);
    fn = it->second;
  }
  return fn(oracle, instance, params, budget, seed);
}

// --- experiment execution ----------------------------------------------------

namespace {

struct Cell {
  int solver_idx = 0;
  int repetition = 0;
  int grid_idx = 0;
  double grid_value = 0.0;
  bool has_grid_value = false;
};

struct CellOutcome {
  GeoRunResult result;
  std::uint64_t oracle_calls = 0;
};

std::string cell_name(const ExperimentSpec& spec, const Cell& cell) {
  std::string solver = spec.solvers[static_cast<std::size_t>(cell.solver_idx)].name;
  for (char& c : solver)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  return solver + "__rep" + std::to_string(cell.repetition) + "__g" +
         std::to_string(cell.grid_idx);
}

std::uint64_t cell_seed(const ExperimentSpec& spec, const Cell& cell) {
  // Pure function of (root seed, solver name, repetition index); grid points
  // extend the label so each frontier point has its own stream.
  std::string label = spec.solvers[static_cast<std::size_t>(cell.solver_idx)].name;
  if (cell.grid_idx > 0) label += "#g" + std::to_string(cell.grid_idx);
  return derive_seed(spec.root_seed, label, static_cast<std::uint64_t>(cell.repetition));
}

PortfolioInstance cell_instance(const PortfolioInstance& base, const Cell& cell) {
  PortfolioInstance inst = base;
  if (cell.has_grid_value) {
    if (inst.objective_mode == ObjectiveMode::return_target)
      inst.rho = cell.grid_value;
    else
      inst.lambda = cell.grid_value;
  }
  return inst;
}

CellOutcome run_cell(const ExperimentSpec& spec, const PortfolioInstance& base, const Cell& cell) {
  const auto& solver = spec.solvers[static_cast<std::size_t>(cell.solver_idx)];
  PortfolioInstance inst = cell_instance(base, cell);
  PortfolioOracle oracle(inst);
  oracle.set_budget(spec.budget);
  CellOutcome out;
  out.result = run_registered_solver(solver.name, oracle, inst, solver.params, spec.budget,
                                     cell_seed(spec, cell));
  out.oracle_calls = oracle.calls();
  return out;
}

CellOutcome load_or_run_cell(const ExperimentSpec& spec, const PortfolioInstance& base,
                             const Cell& cell) {
  const std::string name = cell_name(spec, cell);
  const bool persist = !spec.out_dir.empty();
  const fs::path path = fs::path(spec.out_dir) / "cells" / (name + ".json");

  const PortfolioInstance inst = cell_instance(base, cell);
  const std::uint64_t fingerprint = instance_fingerprint(inst);
  const std::uint64_t seed = cell_seed(spec, cell);

  if (persist && fs::exists(path)) {
    nlohmann::json j;
    try {
      std::ifstream is(path);
      is >> j;
    } catch (const std::exception& e) {
      throw resume_error("cell manifest is corrupt: " + std::string(e.what()), name);
    }
    try {
      if (j.at("instance_fingerprint").get<std::uint64_t>() != fingerprint ||
          j.at("cell_seed").get<std::uint64_t>() != seed ||
          j.at("budget").get<std::uint64_t>() != spec.budget)
        throw resume_error("cell manifest does not match the experiment spec", name);
      CellOutcome out;
      out.result = run_result_from_json(j.at("result"));
      out.oracle_calls = j.at("oracle_calls").get<std::uint64_t>();
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw resume_error("cell manifest is incomplete: " + std::string(e.what()), name);
    }
  }

  CellOutcome out = run_cell(spec, base, cell);
  if (persist) {
    nlohmann::json j;
    j["schema"] = 1;
    j["solver"] = spec.solvers[static_cast<std::size_t>(cell.solver_idx)].name;
    j["params"] = spec.solvers[static_cast<std::size_t>(cell.solver_idx)].params;
    j["repetition"] = cell.repetition;
    j["grid_index"] = cell.grid_idx;
    if (cell.has_grid_value)
      j["grid_value"] = cell.grid_value;
    else
      j["grid_value"] = nullptr;
    j["cell_seed"] = seed;
    j["budget"] = spec.budget;
    j["instance_fingerprint"] = fingerprint;
    j["oracle_calls"] = out.oracle_calls;
    j["result"] = run_result_to_json(out.result);

    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream os(tmp);
      if (!os) throw io_error("cannot write cell manifest " + tmp.string());
      os << j.dump(2) << '\n';
    }
    fs::rename(tmp, path);
  }
  return out;
}

double best_so_far(const std::vector<HistoryPoint>& history, std::uint64_t evals) {
  double best = kInf;
  for (const auto& h : history) {
    if (h.evals_used > evals) break;
    best = std::min(best, h.best_cost);
  }
  return best;
}

}  // namespace

ComparisonSummary run_experiment(const ExperimentSpec& spec) {
  if (spec.solvers.empty()) throw config_error("run_experiment: empty solver roster");
  const PortfolioInstance base = build_instance(spec);

  if (!spec.out_dir.empty()) fs::create_directories(fs::path(spec.out_dir) / "cells");

  std::vector<Cell> cells;
  const int n_grid = spec.objective_grid.empty() ? 1 : static_cast<int>(spec.objective_grid.size());
  for (int s = 0; s < static_cast<int>(spec.solvers.size()); ++s)
    for (int r = 0; r < spec.repetitions; ++r)
      for (int g = 0; g < n_grid; ++g) {
        Cell cell;
        cell.solver_idx = s;
        cell.repetition = r;
        cell.grid_idx = g;
        if (!spec.objective_grid.empty()) {
          cell.grid_value = spec.objective_grid[static_cast<std::size_t>(g)];
          cell.has_grid_value = true;
        }
        cells.push_back(cell);
      }

  std::vector<CellOutcome> outcomes(cells.size());
  {
    const int jobs = std::max(1, spec.jobs);
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (first_error) return;
        }
        try {
          outcomes[i] = load_or_run_cell(spec, base, cells[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    if (jobs == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      pool.reserve(static_cast<std::size_t>(jobs));
      for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
  }

  auto outcome_at = [&](int s, int r, int g) -> const CellOutcome& {
    const std::size_t idx = (static_cast<std::size_t>(s) * spec.repetitions + r) *
                                static_cast<std::size_t>(n_grid) +
                            static_cast<std::size_t>(g);
    return outcomes[idx];
  };

  ComparisonSummary summary;

  // Budget-parity audit across every cell.
  std::uint64_t parity_calls = outcomes.front().oracle_calls;
  for (const auto& oc : outcomes)
    if (oc.oracle_calls != parity_calls) summary.budget_parity = false;
  if (!summary.budget_parity && !spec.allow_unequal_budgets)
    warn(&summary.warnings, "budget-parity",
         "solver oracle counters differ across cells; comparison is not call-parity fair");

  const bool grid_mode = !spec.objective_grid.empty();
  if (grid_mode) {
    summary.standard_frontier =
        standard_frontier(base.stats, base.lower_bounds, base.upper_bounds, spec.frontier_points);
    summary.has_frontier = true;
  }

  // Evaluation-count grid for the median traces.
  std::vector<std::uint64_t> trace_grid;
  {
    const int points = std::min<std::uint64_t>(spec.trace_points, spec.budget);
    for (int i = 0; i < points; ++i) {
      const std::uint64_t e = 1 + (spec.budget - 1) * static_cast<std::uint64_t>(i) /
                                      std::max(1, points - 1);
      if (trace_grid.empty() || trace_grid.back() != e) trace_grid.push_back(e);
    }
  }

  for (int s = 0; s < static_cast<int>(spec.solvers.size()); ++s) {
    SolverSummary solver;
    solver.name = spec.solvers[static_cast<std::size_t>(s)].name;

    for (int r = 0; r < spec.repetitions; ++r) {
      solver.final_best.push_back(outcome_at(s, r, 0).result.best.feasible
                                      ? outcome_at(s, r, 0).result.best.cost
                                      : kInf);
      solver.rep_histories.push_back(outcome_at(s, r, 0).result.history);
    }
    solver.best_ci = bootstrap_median_ci(
        solver.final_best, spec.bootstrap_resamples, spec.confidence,
        derive_seed(spec.root_seed, "bootstrap-best:" + solver.name));

    solver.oracle_calls = outcome_at(s, 0, 0).oracle_calls;
    for (int r = 1; r < spec.repetitions; ++r)
      if (outcome_at(s, r, 0).oracle_calls != solver.oracle_calls)
        solver.calls_equal_across_reps = false;

    for (std::size_t pt = 0; pt < trace_grid.size(); ++pt) {
      std::vector<double> at_point;
      at_point.reserve(static_cast<std::size_t>(spec.repetitions));
      for (int r = 0; r < spec.repetitions; ++r)
        at_point.push_back(best_so_far(outcome_at(s, r, 0).result.history, trace_grid[pt]));
      const BootstrapCi ci = bootstrap_median_ci(
          at_point, spec.bootstrap_resamples, spec.confidence,
          derive_seed(spec.root_seed, "bootstrap-trace:" + solver.name, pt));
      solver.trace.push_back({trace_grid[pt], ci.median, ci.lo, ci.hi});
    }

    if (grid_mode) {
      std::vector<FrontierPoint> pts;
      for (int g = 0; g < n_grid; ++g) {
        const EvaluatedCandidate* best = nullptr;
        for (int r = 0; r < spec.repetitions; ++r) {
          const auto& cand = outcome_at(s, r, g).result.best;
          if (!cand.feasible) continue;
          if (best == nullptr || cand.cost < best->cost) best = &cand;
        }
        if (best == nullptr || best->weights.size() != base.n_assets) continue;
        EvaluatedCandidate scored = *best;
        pts.push_back({candidate_risk(base, scored), candidate_return(base, scored)});
      }
      if (!pts.empty()) {
        solver.heuristic_frontier = make_frontier(std::move(pts), FrontierKind::heuristic);
        solver.metrics =
            metric_report(summary.standard_frontier, solver.heuristic_frontier, &summary.warnings);
      }
    }
    summary.solvers.push_back(std::move(solver));
  }

  // Relative enhancement of the generator-driven roster entry over each
  // classical solver, paired per repetition.
  for (const auto& s : spec.solvers) {
    if (s.name.rfind("tn_geo", 0) == 0 || s.name == "sa_then_booster") {
      summary.geo_solver = s.name;
      break;
    }
  }
  if (!summary.geo_solver.empty()) {
    const auto geo_it = std::find_if(summary.solvers.begin(), summary.solvers.end(),
                                     [&](const SolverSummary& s) { return s.name == summary.geo_solver; });
    for (const auto& other : summary.solvers) {
      if (other.name == summary.geo_solver) continue;
      std::vector<double> etas;
      for (int r = 0; r < spec.repetitions; ++r) {
        const double classical = other.final_best[static_cast<std::size_t>(r)];
        const double geo = geo_it->final_best[static_cast<std::size_t>(r)];
        if (!std::isfinite(classical) || !std::isfinite(geo) || classical == 0.0) continue;
        etas.push_back(relative_enhancement(classical, geo));
      }
      if (etas.empty()) continue;
      EnhancementSummary e;
      e.versus = other.name;
      e.eta = bootstrap_median_ci(etas, spec.bootstrap_resamples, spec.confidence,
                                  derive_seed(spec.root_seed, "bootstrap-eta:" + other.name));
      summary.enhancements.push_back(std::move(e));
    }
  }

  // Cost histogram (seed vs generated origin) from the first solver whose
  // archive distinguishes the two, repetition 0. Bin edges are anchored at
  // the best seed cost so the below-seed-best mass is exactly countable.
  for (int s = 0; s < static_cast<int>(spec.solvers.size()); ++s) {
    const auto& result = outcome_at(s, 0, 0).result;
    bool has_seed = false;
    for (const auto& e : result.all_evaluated)
      if (e.origin == CandidateOrigin::seed) { has_seed = true; break; }
    if (!has_seed) continue;

    double seed_best = kInf, lo = kInf, hi = -kInf;
    for (const auto& e : result.all_evaluated) {
      if (!std::isfinite(e.cost)) continue;
      lo = std::min(lo, e.cost);
      hi = std::max(hi, e.cost);
      if (e.origin == CandidateOrigin::seed) seed_best = std::min(seed_best, e.cost);
    }
    if (!std::isfinite(seed_best) || !(hi > lo)) break;

    const int n_bins = 60;
    const double width = (hi - lo) / n_bins;
    std::map<std::pair<long long, int>, std::uint64_t> bins;  // (bin index, origin)
    for (const auto& e : result.all_evaluated) {
      if (!std::isfinite(e.cost)) continue;
      const long long idx = static_cast<long long>(std::floor((e.cost - seed_best) / width));
      bins[{idx, e.origin == CandidateOrigin::seed ? 0 : 1}] += 1;
    }
    for (const auto& [key, count] : bins) {
      HistogramRow row;
      row.cost = seed_best + (static_cast<double>(key.first) + 0.5) * width;
      row.origin = key.second == 0 ? "seed" : "generated";
      row.count = count;
      summary.histogram.push_back(std::move(row));
    }
    summary.histogram_solver = spec.solvers[static_cast<std::size_t>(s)].name;
    break;
  }

  return summary;
}

// --- report emission ---------------------------------------------------------

nlohmann::json frontier_to_json(const FrontierSet& f) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : f.points) pts.push_back({{"risk", p.risk}, {"return", p.ret}});
  return {{"kind", f.kind == FrontierKind::standard ? "standard" : "heuristic"},
          {"points", pts}};
}

FrontierSet frontier_from_json(const nlohmann::json& j) {
  std::vector<FrontierPoint> pts;
  for (const auto& p : j.at("points"))
    pts.push_back({p.at("risk").get<double>(), p.at("return").get<double>()});
  const FrontierKind kind = j.value("kind", "heuristic") == "standard" ? FrontierKind::standard
                                                                       : FrontierKind::heuristic;
  return make_frontier(std::move(pts), kind);
}

nlohmann::json metric_report_to_json(const MetricReport& m) {
  return {{"pde_mean", m.pde_mean}, {"pde_median", m.pde_median}, {"pde_min", m.pde_min},
          {"pde_max", m.pde_max},   {"meucd", m.meucd},           {"vre", m.vre},
          {"mre", m.mre},           {"epsilon", m.n_heuristic},   {"epsilon_star", m.n_standard}};
}

namespace {

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path);
  if (!os) throw io_error("emit_report: cannot open " + path.string());
  os << content;
  if (!os) throw io_error("emit_report: write failed for " + path.string());
}

}  // namespace

std::vector<std::string> emit_report(const ComparisonSummary& summary, const ExperimentSpec& spec,
                                     ReportFormat format) {
  if (summary.solvers.empty()) throw invalid_argument("emit_report: empty solver roster");
  if (spec.out_dir.empty()) throw invalid_argument("emit_report: spec has no output directory");
  fs::create_directories(spec.out_dir);
  const fs::path out(spec.out_dir);
  std::vector<std::string> written;

  nlohmann::json j;
  j["schema"] = 1;
  j["spec"] = experiment_spec_to_json(spec);
  nlohmann::json solvers = nlohmann::json::array();
  for (const auto& s : summary.solvers) {
    nlohmann::json js;
    js["name"] = s.name;
    nlohmann::json finals = nlohmann::json::array();
    for (double v : s.final_best)
      finals.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
    js["final_best"] = finals;
    js["best_ci"] = ci_to_json(s.best_ci);
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& t : s.trace) {
      auto num = [](double v) -> nlohmann::json {
        if (std::isfinite(v)) return v;
        return nullptr;
      };
      trace.push_back({{"evals", t.evals}, {"median", num(t.median)}, {"lo", num(t.lo)},
                       {"hi", num(t.hi)}});
    }
    js["trace"] = trace;
    js["oracle_calls"] = s.oracle_calls;
    js["calls_equal_across_reps"] = s.calls_equal_across_reps;
    if (s.metrics) {
      js["metrics"] = metric_report_to_json(*s.metrics);
      js["heuristic_frontier"] = frontier_to_json(s.heuristic_frontier);
    }
    solvers.push_back(std::move(js));
  }
  j["solvers"] = solvers;
  j["geo_solver"] = summary.geo_solver;
  nlohmann::json enh = nlohmann::json::array();
  for (const auto& e : summary.enhancements)
    enh.push_back({{"versus", e.versus}, {"eta", ci_to_json(e.eta)}});
  j["enhancements"] = enh;
  if (summary.has_frontier) j["standard_frontier"] = frontier_to_json(summary.standard_frontier);
  j["histogram_solver"] = summary.histogram_solver;
  j["budget_parity"] = summary.budget_parity;
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& w : summary.warnings)
    warnings.push_back({{"code", w.code}, {"message", w.message}});
  j["warnings"] = warnings;

  write_text_file(out / "summary.json", j.dump(2) + "\n");
  written.push_back((out / "summary.json").string());

  if (format == ReportFormat::csv) {
    std::string traces = "solver,repetition,evals_used,best_cost\n";
    for (const auto& s : summary.solvers) {
      for (std::size_t r = 0; r < s.rep_histories.size(); ++r) {
        for (const auto& h : s.rep_histories[r]) {
          traces += s.name + "," + std::to_string(r) + "," + std::to_string(h.evals_used) + "," +
                    fmt_double(h.best_cost) + "\n";
        }
      }
    }
    write_text_file(out / "traces.csv", traces);
    written.push_back((out / "traces.csv").string());

    std::string metrics = "solver,pde_mean,pde_median,pde_min,pde_max,meucd,vre,mre,epsilon,epsilon_star\n";
    for (const auto& s : summary.solvers) {
      if (!s.metrics) continue;
      const auto& m = *s.metrics;
      metrics += s.name + "," + fmt_double(m.pde_mean) + "," + fmt_double(m.pde_median) + "," +
                 fmt_double(m.pde_min) + "," + fmt_double(m.pde_max) + "," + fmt_double(m.meucd) +
                 "," + fmt_double(m.vre) + "," + fmt_double(m.mre) + "," +
                 std::to_string(m.n_heuristic) + "," + std::to_string(m.n_standard) + "\n";
    }
    write_text_file(out / "metrics.csv", metrics);
    written.push_back((out / "metrics.csv").string());

    std::string hist = "cost,origin,count\n";
    for (const auto& row : summary.histogram)
      hist += fmt_double(row.cost) + "," + row.origin + "," + std::to_string(row.count) + "\n";
    write_text_file(out / "histogram.csv", hist);
    written.push_back((out / "histogram.csv").string());
  } else {
    nlohmann::json traces = nlohmann::json::array();
    for (const auto& s : summary.solvers) {
      for (std::size_t r = 0; r < s.rep_histories.size(); ++r) {
        for (const auto& h : s.rep_histories[r]) {
          traces.push_back({{"solver", s.name},
                            {"repetition", r},
                            {"evals_used", h.evals_used},
                            {"best_cost", std::isfinite(h.best_cost)
                                              ? nlohmann::json(h.best_cost)
                                              : nlohmann::json(nullptr)}});
        }
      }
    }
    write_text_file(out / "traces.json", traces.dump(2) + "\n");
    written.push_back((out / "traces.json").string());

    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& s : summary.solvers) {
      if (!s.metrics) continue;
      nlohmann::json row = metric_report_to_json(*s.metrics);
      row["solver"] = s.name;
      metrics.push_back(std::move(row));
    }
    write_text_file(out / "metrics.json", metrics.dump(2) + "\n");
    written.push_back((out / "metrics.json").string());

    nlohmann::json hist = nlohmann::json::array();
    for (const auto& row : summary.histogram)
      hist.push_back({{"cost", row.cost}, {"origin", row.origin}, {"count", row.count}});
    write_text_file(out / "histogram.json", hist.dump(2) + "\n");
    written.push_back((out / "histogram.json").string());
  }

  if (summary.has_frontier) {
    write_text_file(out / "frontier_standard.json",
                    frontier_to_json(summary.standard_frontier).dump(2) + "\n");
    written.push_back((out / "frontier_standard.json").string());
    for (const auto& s : summary.solvers) {
      if (!s.metrics) continue;
      std::string safe = s.name;
      for (char& c : safe)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
      const fs::path p = out / ("frontier_" + safe + ".json");
      write_text_file(p, frontier_to_json(s.heuristic_frontier).dump(2) + "\n");
      written.push_back(p.string());
    }
  }
  return written;
}

}  // namespace geopt
