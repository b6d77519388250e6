#include "geopt/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>
#include <vector>

namespace geopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct BestTracker {
  GeoRunResult result;

  BestTracker() { result.best.cost = kInf; }

  void add(const EvaluatedCandidate& cand, std::uint64_t evals, int step) {
    ArchiveEntry entry;
    entry.selection = cand.selection;
    entry.cost = cand.cost;
    entry.feasible = cand.feasible;
    entry.origin = CandidateOrigin::generated;
    entry.order = static_cast<std::uint64_t>(result.all_evaluated.size());
    result.all_evaluated.push_back(std::move(entry));
    if (cand.feasible && cand.cost < result.best.cost) {
      result.best = cand;
      result.history.push_back({step, evals, cand.cost});
    }
  }

  GeoRunResult finish(std::uint64_t evals, int step) {
    result.history.push_back({step, evals, result.best.cost});
    return std::move(result);
  }
};

}  // namespace

bool metropolis_accept(double current_cost, double candidate_cost, double temperature, Rng& rng) {
  if (candidate_cost <= current_cost) return true;  // covers the both-infinite walk
  const double delta = candidate_cost - current_cost;
  return rng.next_double() < std::exp(-delta / temperature);
}

GeoRunResult sa_solve(CostOracle& oracle, const PortfolioInstance& instance, const SaConfig& cfg,
                      const Selection& start) {
  if (static_cast<int>(start.bits.size()) != instance.n_assets)
    throw invalid_argument("sa_solve: start selection length does not match the instance");
  if (start.weight() != instance.cardinality)
    throw invalid_argument("sa_solve: start selection does not satisfy the cardinality");
  if (!(cfg.t_min > 0.0) || !(cfg.t_min < cfg.t_max))
    throw invalid_argument("sa_solve: require 0 < t_min < t_max");
  if (cfg.n_steps < 0) throw invalid_argument("sa_solve: n_steps must be >= 0");

  Rng rng(cfg.rng_seed);
  BestTracker tracker;

  EvaluatedCandidate current = oracle.evaluate(start);
  tracker.add(current, oracle.calls(), 0);

  std::vector<int> selected, unselected;
  for (int i = 0; i < instance.n_assets; ++i)
    (start.bits[static_cast<std::size_t>(i)] ? selected : unselected).push_back(i);

  const double cool = cfg.t_min / cfg.t_max;
  for (int step = 0; step < cfg.n_steps; ++step) {
    const double temperature =
        cfg.t_max * std::pow(cool, static_cast<double>(step) / static_cast<double>(cfg.n_steps));

    const int out_pos = rng.next_index(static_cast<int>(selected.size()));
    const int in_pos = rng.next_index(static_cast<int>(unselected.size()));
    Selection proposal = current.selection;
    proposal.bits[static_cast<std::size_t>(selected[out_pos])] = 0;
    proposal.bits[static_cast<std::size_t>(unselected[in_pos])] = 1;

    EvaluatedCandidate cand = oracle.evaluate(proposal);
    tracker.add(cand, oracle.calls(), step + 1);

    if (metropolis_accept(current.cost, cand.cost, temperature, rng)) {
      current = cand;
      std::swap(selected[out_pos], unselected[in_pos]);
    }
  }
  return tracker.finish(oracle.calls(), cfg.n_steps);
}

Selection random_valid_selection(int n_assets, int kappa, Rng& rng) {
  std::vector<int> positions(static_cast<std::size_t>(n_assets));
  for (int i = 0; i < n_assets; ++i) positions[static_cast<std::size_t>(i)] = i;
  Selection sel;
  sel.bits.assign(static_cast<std::size_t>(n_assets), 0);
  for (int k = 0; k < kappa; ++k) {
    const int j = k + rng.next_index(n_assets - k);
    std::swap(positions[static_cast<std::size_t>(k)], positions[static_cast<std::size_t>(j)]);
    sel.bits[static_cast<std::size_t>(positions[static_cast<std::size_t>(k)])] = 1;
  }
  return sel;
}

GeoRunResult conditioned_random(CostOracle& oracle, const PortfolioInstance& instance,
                                std::uint64_t budget, std::uint64_t seed, bool dedup) {
  if (budget < 1) throw invalid_argument("conditioned_random: budget must be >= 1");

  Rng rng(seed);
  BestTracker tracker;
  std::unordered_set<std::string> seen;
  const double log_space =
      log_count_valid_selections(instance.n_assets, instance.cardinality);

  for (std::uint64_t k = 0; k < budget; ++k) {
    Selection sel = random_valid_selection(instance.n_assets, instance.cardinality, rng);
    if (dedup) {
      if (std::log(static_cast<double>(seen.size() + 1)) > log_space) break;  // space exhausted
      while (!seen.insert(sel.to_string()).second)
        sel = random_valid_selection(instance.n_assets, instance.cardinality, rng);
    }
    EvaluatedCandidate cand = oracle.evaluate(sel);
    tracker.add(cand, oracle.calls(), static_cast<int>(k));
  }
  return tracker.finish(oracle.calls(), static_cast<int>(budget));
}

GeoRunResult unconstrained_random(CostOracle& oracle, const PortfolioInstance& instance,
                                  std::uint64_t budget, std::uint64_t seed) {
  if (budget < 1) throw invalid_argument("unconstrained_random: budget must be >= 1");

  Rng rng(seed);
  BestTracker tracker;
  for (std::uint64_t k = 0; k < budget; ++k) {
    Selection sel;
    sel.bits.resize(static_cast<std::size_t>(instance.n_assets));
    for (auto& b : sel.bits) b = static_cast<std::uint8_t>(rng.next_below(2));
    EvaluatedCandidate cand = oracle.evaluate(sel);
    tracker.add(cand, oracle.calls(), static_cast<int>(k));
  }
  return tracker.finish(oracle.calls(), static_cast<int>(budget));
}

}  // namespace geopt
