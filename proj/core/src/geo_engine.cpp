#include "geopt/geo_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

#include "geopt/log.hpp"
#include "geopt/rng.hpp"
#include "geopt/stats.hpp"
#include "geopt/surrogate.hpp"

namespace geopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct RunState {
  GeoRunResult result;
  std::unordered_set<std::string> seen;
  std::uint64_t next_order = 0;

  bool known(const std::string& key) const { return seen.count(key) != 0; }

  void add(const EvaluatedCandidate& cand, CandidateOrigin origin) {
    ArchiveEntry entry;
    entry.selection = cand.selection;
    entry.cost = cand.cost;
    entry.feasible = cand.feasible;
    entry.origin = origin;
    entry.order = next_order++;
    seen.insert(entry.selection.to_string());
    result.all_evaluated.push_back(std::move(entry));
    if (cand.feasible && cand.cost < result.best.cost) result.best = cand;
  }

  void record(int iteration, std::uint64_t evals) {
    result.history.push_back({iteration, evals, result.best.cost});
  }
};

// Frequency-ordered unique candidates from a batch of generator samples,
// keeping only cardinality-valid strings unseen by the archive.
struct PostSelection {
  std::vector<Selection> unique;  // first-seen order
  std::vector<int> count;
};

PostSelection post_select(const std::vector<Bitstring>& samples, int kappa,
                          const RunState& state) {
  PostSelection out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& bits : samples) {
    if (hamming_weight(bits) != kappa) continue;
    auto key = geopt::to_string(bits);
    if (state.known(key)) continue;
    auto [it, inserted] = index.emplace(std::move(key), out.unique.size());
    if (inserted) {
      out.unique.push_back({bits});
      out.count.push_back(1);
    } else {
      ++out.count[it->second];
    }
  }
  return out;
}

}  // namespace

EvaluatedCandidate CostOracle::evaluate(const Selection& sel) {
  if (budget_ && calls_ >= *budget_)
    throw budget_exhausted("oracle: evaluation budget exhausted");
  ++calls_;
  return do_evaluate(sel);
}

PortfolioOracle::PortfolioOracle(PortfolioInstance instance) : instance_(std::move(instance)) {
  validate_instance(instance_);
}

EvaluatedCandidate PortfolioOracle::do_evaluate(const Selection& sel) {
  if (static_cast<int>(sel.bits.size()) != instance_.n_assets)
    throw invalid_candidate("oracle: selection length does not match the instance");
  if (sel.weight() != instance_.cardinality) {
    EvaluatedCandidate out;
    out.selection = sel;
    out.weights = Eigen::VectorXd::Zero(instance_.n_assets);
    out.cost = kInf;
    out.feasible = false;
    return out;
  }
  return solve_inner_qp(instance_, sel);
}

GeoRunResult run_booster(CostOracle& oracle, const std::vector<EvaluatedCandidate>& initial_data,
                         const GeoConfig& cfg) {
  if (initial_data.empty()) throw invalid_argument("run_booster: initial data is empty");
  for (const auto& cand : initial_data)
    if (!std::isfinite(cand.cost))
      throw invalid_argument("run_booster: initial data carries a non-finite cost");
  if (cfg.seed_percentile <= 0.0 || cfg.seed_percentile > 1.0)
    throw invalid_argument("run_booster: seed_percentile must be in (0, 1]");
  if (cfg.n_train < 1 || cfg.n_mps < 1)
    throw invalid_argument("run_booster: n_train and n_mps must be >= 1");
  if (cfg.max_iterations < 1) throw invalid_argument("run_booster: max_iterations must be >= 1");

  const int n_vars = static_cast<int>(initial_data.front().selection.bits.size());
  const int kappa = initial_data.front().selection.weight();

  RunState state;
  state.result.best.cost = kInf;
  for (const auto& cand : initial_data) state.add(cand, CandidateOrigin::seed);
  const double seed_best = state.result.best.cost;
  state.record(0, oracle.calls());

  const std::uint64_t calls_at_start = oracle.calls();
  auto used = [&] { return oracle.calls() - calls_at_start; };
  auto budget_left = [&]() -> std::uint64_t {
    std::uint64_t room = oracle.remaining();
    if (cfg.eval_budget > 0) {
      const std::uint64_t own = cfg.eval_budget > used() ? cfg.eval_budget - used() : 0;
      room = std::min(room, own);
    }
    return room;
  };

  int consecutive_empty = 0;
  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    if (budget_left() == 0) break;

    // Step 0: sort the current data, keep the lowest-cost fraction.
    std::vector<const ArchiveEntry*> finite;
    finite.reserve(state.result.all_evaluated.size());
    for (const auto& e : state.result.all_evaluated)
      if (std::isfinite(e.cost)) finite.push_back(&e);
    std::stable_sort(finite.begin(), finite.end(),
                     [](const ArchiveEntry* a, const ArchiveEntry* b) { return a->cost < b->cost; });
    const std::size_t n_keep = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(cfg.seed_percentile * static_cast<double>(finite.size()))),
        1, finite.size());

    std::vector<Selection> seed_sel;
    std::vector<double> seed_costs;
    seed_sel.reserve(n_keep);
    seed_costs.reserve(n_keep);
    for (std::size_t i = 0; i < n_keep; ++i) {
      seed_sel.push_back(finite[i]->selection);
      seed_costs.push_back(finite[i]->cost);
    }

    // Steps 1-4: surrogate, training set, fresh MPS, generator samples.
    const double temperature = default_temperature(seed_costs, &state.result.warnings);
    SoftmaxSurrogate surrogate = build_softmax(seed_sel, seed_costs, temperature);
    BitstringDataset train_data = sample_training_set(
        surrogate, cfg.n_train, derive_seed(cfg.rng_seed, "booster-train-data", iter));

    TrainConfig tc = cfg.train_cfg;
    tc.rng_seed = derive_seed(cfg.rng_seed, "booster-train", iter);
    MpsModel mps = init_mps(n_vars, cfg.mps_init_bond, tc.rng_seed);
    TrainReport trained = train(mps, train_data, tc);
    for (auto& w : trained.warnings) state.result.warnings.push_back(std::move(w));

    std::vector<Bitstring> samples =
        sample(trained.model, cfg.n_mps, derive_seed(cfg.rng_seed, "booster-sample", iter));

    // Step 5: cardinality-valid strings not present in the archive.
    PostSelection picks = post_select(samples, kappa, state);

    IterationRecord rec;
    rec.iteration = iter;
    rec.temperature = temperature;
    rec.train_nll = trained.nll_per_sweep.back();

    if (picks.unique.empty()) {
      warn(&state.result.warnings, "booster-empty-postselection",
           "iteration " + std::to_string(iter) + " produced no new valid candidates");
      if (++consecutive_empty >= 10) {
        warn(&state.result.warnings, "booster-stalled",
             "10 consecutive iterations without new candidates; stopping early");
        rec.evals_at_end = oracle.calls();
        state.result.iterations.push_back(rec);
        state.record(iter, oracle.calls());
        break;
      }
      rec.evals_at_end = oracle.calls();
      state.result.iterations.push_back(rec);
      state.record(iter, oracle.calls());
      continue;
    }
    consecutive_empty = 0;

    // Step 6: evaluate, spending a truncated budget on the most frequent
    // proposals first.
    std::vector<std::size_t> order(picks.unique.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return picks.count[a] > picks.count[b];
    });
    const std::uint64_t room = budget_left();
    const std::size_t n_eval = static_cast<std::size_t>(
        std::min<std::uint64_t>(room, static_cast<std::uint64_t>(order.size())));

    for (std::size_t k = 0; k < n_eval; ++k) {
      EvaluatedCandidate cand = oracle.evaluate(picks.unique[order[k]]);
      state.add(cand, CandidateOrigin::generated);  // step 7: merge
      rec.n_new_evaluated += 1;
    }
    rec.evals_at_end = oracle.calls();
    state.result.iterations.push_back(rec);
    state.record(iter, oracle.calls());
  }

  state.result.outstanding_count = count_outstanding(state.result, seed_best);
  return state.result;
}

GeoRunResult run_standalone(CostOracle& oracle, const PortfolioInstance& instance,
                            const GeoConfig& cfg) {
  if (cfg.eval_budget < 1) throw invalid_argument("run_standalone: eval_budget must be >= 1");
  if (cfg.n_seed < 1) throw invalid_argument("run_standalone: n_seed must be >= 1");
  if (cfg.n_select_standalone < 1)
    throw invalid_argument("run_standalone: n_select_standalone must be >= 1");
  if (cfg.n_train < 1 || cfg.n_mps < 1)
    throw invalid_argument("run_standalone: n_train and n_mps must be >= 1");

  RunState state;
  state.result.best.cost = kInf;
  const std::uint64_t calls_at_start = oracle.calls();
  auto used = [&] { return oracle.calls() - calls_at_start; };

  Rng tie_rng(derive_seed(cfg.rng_seed, "standalone-ties"));

  // Step 0-1: seed pool with one true evaluation.
  ColdStartState pool = cold_start(
      instance, cfg.n_seed, derive_seed(cfg.rng_seed, "standalone-cold-start"),
      [&](const Selection& sel) {
        EvaluatedCandidate cand = oracle.evaluate(sel);
        state.add(cand, CandidateOrigin::seed);
        return cand.cost;
      },
      &state.result.warnings);
  state.record(0, oracle.calls());

  std::unordered_map<std::string, std::size_t> pool_index;
  pool_index.reserve(pool.seed_pool.size());
  for (std::size_t i = 0; i < pool.seed_pool.size(); ++i)
    pool_index.emplace(pool.seed_pool[i].to_string(), i);

  auto best_true_cost = [&]() -> double {
    double best = kInf;
    for (std::size_t i = 0; i < pool.costs.size(); ++i)
      if (pool.evaluated[i] && std::isfinite(pool.costs[i])) best = std::min(best, pool.costs[i]);
    return best;
  };

  int iter = 0;
  while (used() < cfg.eval_budget) {
    ++iter;

    // Temperature starts at the cold-start scale and tracks the observed
    // cost spread once there is one; the reference cost keeps unevaluated
    // pool entries at exactly half the incumbent's likelihood either way.
    {
      std::vector<double> observed;
      for (std::size_t i = 0; i < pool.costs.size(); ++i)
        if (pool.evaluated[i] && std::isfinite(pool.costs[i])) observed.push_back(pool.costs[i]);
      if (observed.size() >= 2) {
        const double spread = sample_stddev(observed);
        if (spread > 0.0) pool.temperature = spread;
      }
    }
    const double incumbent = best_true_cost();
    pool.sigma_ref = pool.temperature * std::log(2.0) +
                     (std::isfinite(incumbent) ? incumbent : 0.0);
    std::vector<double> costs(pool.seed_pool.size());
    for (std::size_t i = 0; i < costs.size(); ++i)
      costs[i] = pool.evaluated[i] ? pool.costs[i] : pool.sigma_ref;

    SoftmaxSurrogate surrogate = build_softmax(pool.seed_pool, costs, pool.temperature);
    BitstringDataset train_data = sample_training_set(
        surrogate, cfg.n_train, derive_seed(cfg.rng_seed, "standalone-train-data", iter));

    TrainConfig tc = cfg.train_cfg;
    tc.rng_seed = derive_seed(cfg.rng_seed, "standalone-train", iter);
    MpsModel mps = init_mps(instance.n_assets, cfg.mps_init_bond, tc.rng_seed);
    TrainReport trained = train(mps, train_data, tc);
    for (auto& w : trained.warnings) state.result.warnings.push_back(std::move(w));

    std::vector<Bitstring> samples = sample(
        trained.model, cfg.n_mps, derive_seed(cfg.rng_seed, "standalone-sample", iter));
    PostSelection picks = post_select(samples, instance.cardinality, state);

    // Step 5: most frequent (exploitation) and least frequent (exploration)
    // among the new valid samples; frequency ties break uniformly at random.
    std::vector<std::size_t> order(picks.unique.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> jitter(picks.unique.size());
    for (auto& j : jitter) j = tie_rng.next_double();
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (picks.count[a] != picks.count[b]) return picks.count[a] > picks.count[b];
      return jitter[a] < jitter[b];
    });

    std::vector<Selection> chosen;
    std::vector<CandidateOrigin> chosen_origin;
    const std::uint64_t room =
        std::min<std::uint64_t>(cfg.eval_budget - used(), oracle.remaining());
    const int want = static_cast<int>(
        std::min<std::uint64_t>(room, static_cast<std::uint64_t>(cfg.n_select_standalone)));

    // Alternate front (most frequent) and back (least frequent) of the
    // frequency ordering.
    std::size_t lo = 0, hi = order.size();
    bool take_front = true;
    while (static_cast<int>(chosen.size()) < want && lo < hi) {
      const std::size_t idx = take_front ? order[lo++] : order[--hi];
      chosen.push_back(picks.unique[idx]);
      chosen_origin.push_back(CandidateOrigin::generated);
      take_front = !take_front;
    }

    // Fallback: unevaluated entries of the original seed pool (excluding
    // anything already chosen from the generator batch this iteration).
    if (static_cast<int>(chosen.size()) < want) {
      std::unordered_set<std::string> batch;
      for (const auto& sel : chosen) batch.insert(sel.to_string());
      std::vector<std::size_t> unevaluated;
      for (std::size_t i = 0; i < pool.seed_pool.size(); ++i)
        if (!pool.evaluated[i]) unevaluated.push_back(i);
      while (static_cast<int>(chosen.size()) < want && !unevaluated.empty()) {
        const std::size_t at = static_cast<std::size_t>(tie_rng.next_index(
            static_cast<int>(unevaluated.size())));
        const std::size_t pick = unevaluated[at];
        unevaluated.erase(unevaluated.begin() + static_cast<std::ptrdiff_t>(at));
        const std::string key = pool.seed_pool[pick].to_string();
        if (state.known(key) || batch.count(key) != 0) continue;
        chosen.push_back(pool.seed_pool[pick]);
        chosen_origin.push_back(CandidateOrigin::seed);
        batch.insert(key);
      }
    }

    if (chosen.empty()) {
      warn(&state.result.warnings, "standalone-search-space-exhausted",
           "no unevaluated candidate remains; stopping with budget unspent");
      break;
    }

    IterationRecord rec;
    rec.iteration = iter;
    rec.temperature = pool.temperature;
    rec.train_nll = trained.nll_per_sweep.back();

    // Steps 6-7: evaluate and merge into the pool with true costs.
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      EvaluatedCandidate cand = oracle.evaluate(chosen[k]);
      state.add(cand, chosen_origin[k]);
      rec.n_new_evaluated += 1;
      auto it = pool_index.find(chosen[k].to_string());
      if (it != pool_index.end()) {
        pool.costs[it->second] = cand.cost;
        pool.evaluated[it->second] = true;
      } else {
        pool_index.emplace(chosen[k].to_string(), pool.seed_pool.size());
        pool.seed_pool.push_back(chosen[k]);
        pool.costs.push_back(cand.cost);
        pool.evaluated.push_back(true);
      }
    }
    rec.evals_at_end = oracle.calls();
    state.result.iterations.push_back(rec);
    state.record(iter, oracle.calls());
  }

  double seed_best = kInf;
  for (const auto& e : state.result.all_evaluated)
    if (e.origin == CandidateOrigin::seed && e.feasible) seed_best = std::min(seed_best, e.cost);
  state.result.outstanding_count = count_outstanding(state.result, seed_best);
  return state.result;
}

int count_outstanding(const GeoRunResult& result, double seed_best) {
  int count = 0;
  for (const auto& e : result.all_evaluated)
    if (e.origin == CandidateOrigin::generated && e.cost < seed_best) ++count;
  return count;
}

std::uint64_t instance_fingerprint(const PortfolioInstance& inst) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bytes = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  auto mix_double = [&](double v) { mix_bytes(&v, sizeof(v)); };
  auto mix_int = [&](std::int64_t v) { mix_bytes(&v, sizeof(v)); };

  mix_int(inst.n_assets);
  mix_int(inst.cardinality);
  mix_int(inst.objective_mode == ObjectiveMode::return_target ? 0 : 1);
  mix_double(inst.objective_mode == ObjectiveMode::return_target ? inst.rho : inst.lambda);
  for (int i = 0; i < inst.n_assets; ++i) {
    mix_double(inst.lower_bounds(i));
    mix_double(inst.upper_bounds(i));
    mix_double(inst.stats.mean_returns(i));
  }
  for (int i = 0; i < inst.n_assets; ++i)
    for (int j = 0; j < inst.n_assets; ++j) mix_double(inst.stats.covariance(i, j));
  return h;
}

namespace {

nlohmann::json train_cfg_json(const TrainConfig& cfg) {
  return {{"max_bond_dim", cfg.max_bond_dim}, {"svd_cutoff", cfg.svd_cutoff},
          {"learning_rate", cfg.learning_rate}, {"n_sweeps", cfg.n_sweeps},
          {"grad_steps_per_bond", cfg.grad_steps_per_bond}, {"rng_seed", cfg.rng_seed}};
}

TrainConfig train_cfg_from(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.max_bond_dim = j.at("max_bond_dim").get<int>();
  cfg.svd_cutoff = j.at("svd_cutoff").get<double>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.n_sweeps = j.at("n_sweeps").get<int>();
  cfg.grad_steps_per_bond = j.at("grad_steps_per_bond").get<int>();
  cfg.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return cfg;
}

// Infinity is not representable in JSON; archives encode it as null.
nlohmann::json cost_json(double cost) {
  if (std::isfinite(cost)) return cost;
  return nullptr;
}

double cost_from(const nlohmann::json& j) {
  if (j.is_null()) return kInf;
  return j.get<double>();
}

}  // namespace

nlohmann::json geo_config_to_json(const GeoConfig& cfg) {
  return {{"mode", cfg.mode == GeoMode::booster ? "booster" : "standalone"},
          {"n_seed", cfg.n_seed},
          {"seed_percentile", cfg.seed_percentile},
          {"n_train", cfg.n_train},
          {"n_mps", cfg.n_mps},
          {"n_select_standalone", cfg.n_select_standalone},
          {"mps_init_bond", cfg.mps_init_bond},
          {"train_cfg", train_cfg_json(cfg.train_cfg)},
          {"max_iterations", cfg.max_iterations},
          {"eval_budget", cfg.eval_budget},
          {"rng_seed", cfg.rng_seed}};
}

GeoConfig geo_config_from_json(const nlohmann::json& j) {
  GeoConfig cfg;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "booster") {
    cfg.mode = GeoMode::booster;
  } else if (mode == "standalone") {
    cfg.mode = GeoMode::standalone;
  } else {
    throw config_error("geo config: unknown mode " + mode);
  }
  cfg.n_seed = j.at("n_seed").get<int>();
  cfg.seed_percentile = j.at("seed_percentile").get<double>();
  cfg.n_train = j.at("n_train").get<int>();
  cfg.n_mps = j.at("n_mps").get<int>();
  cfg.n_select_standalone = j.at("n_select_standalone").get<int>();
  cfg.mps_init_bond = j.at("mps_init_bond").get<int>();
  cfg.train_cfg = train_cfg_from(j.at("train_cfg"));
  cfg.max_iterations = j.at("max_iterations").get<int>();
  cfg.eval_budget = j.at("eval_budget").get<std::uint64_t>();
  cfg.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return cfg;
}

nlohmann::json run_result_to_json(const GeoRunResult& result) {
  nlohmann::json j;
  j["best"] = {{"bits", result.best.selection.to_string()},
               {"cost", cost_json(result.best.cost)},
               {"feasible", result.best.feasible},
               {"weights", std::vector<double>(result.best.weights.data(),
                                               result.best.weights.data() + result.best.weights.size())}};
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : result.history)
    history.push_back({{"iteration", h.iteration}, {"evals", h.evals_used},
                       {"best_cost", cost_json(h.best_cost)}});
  j["history"] = history;

  nlohmann::json iters = nlohmann::json::array();
  for (const auto& r : result.iterations)
    iters.push_back({{"iteration", r.iteration}, {"evals_at_end", r.evals_at_end},
                     {"n_new_evaluated", r.n_new_evaluated}, {"temperature", r.temperature},
                     {"train_nll", r.train_nll}});
  j["iterations"] = iters;

  nlohmann::json archive = nlohmann::json::array();
  for (const auto& e : result.all_evaluated)
    archive.push_back({{"bits", e.selection.to_string()}, {"cost", cost_json(e.cost)},
                       {"feasible", e.feasible},
                       {"origin", e.origin == CandidateOrigin::seed ? "seed" : "generated"},
                       {"order", e.order}});
  j["archive"] = archive;
  j["outstanding_count"] = result.outstanding_count;

  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& w : result.warnings)
    warnings.push_back({{"code", w.code}, {"message", w.message}});
  j["warnings"] = warnings;
  return j;
}

GeoRunResult run_result_from_json(const nlohmann::json& j) {
  GeoRunResult result;
  const auto& best = j.at("best");
  result.best.selection.bits = bitstring_from_string(best.at("bits").get<std::string>());
  result.best.cost = cost_from(best.at("cost"));
  result.best.feasible = best.at("feasible").get<bool>();
  const auto weights = best.at("weights").get<std::vector<double>>();
  result.best.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(),
                                                          static_cast<Eigen::Index>(weights.size()));

  for (const auto& h : j.at("history"))
    result.history.push_back({h.at("iteration").get<int>(), h.at("evals").get<std::uint64_t>(),
                              cost_from(h.at("best_cost"))});
  for (const auto& r : j.at("iterations")) {
    IterationRecord rec;
    rec.iteration = r.at("iteration").get<int>();
    rec.evals_at_end = r.at("evals_at_end").get<std::uint64_t>();
    rec.n_new_evaluated = r.at("n_new_evaluated").get<int>();
    rec.temperature = r.at("temperature").get<double>();
    rec.train_nll = r.at("train_nll").get<double>();
    result.iterations.push_back(rec);
  }
  for (const auto& e : j.at("archive")) {
    ArchiveEntry entry;
    entry.selection.bits = bitstring_from_string(e.at("bits").get<std::string>());
    entry.cost = cost_from(e.at("cost"));
    entry.feasible = e.at("feasible").get<bool>();
    entry.origin = e.at("origin").get<std::string>() == "seed" ? CandidateOrigin::seed
                                                               : CandidateOrigin::generated;
    entry.order = e.at("order").get<std::uint64_t>();
    result.all_evaluated.push_back(std::move(entry));
  }
  result.outstanding_count = j.at("outstanding_count").get<int>();
  for (const auto& w : j.at("warnings"))
    result.warnings.push_back({w.at("code").get<std::string>(), w.at("message").get<std::string>()});
  return result;
}

}  // namespace geopt
