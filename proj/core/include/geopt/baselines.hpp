#pragma once

#include <cstdint>

#include "geopt/geo_engine.hpp"
#include "geopt/portfolio.hpp"
#include "geopt/rng.hpp"

namespace geopt {

struct SaConfig {
  double t_max = 1.0;
  double t_min = 1e-4;
  int n_steps = 10000;
  std::uint64_t rng_seed = 0;
  // schedule: geometric (the only supported cooling rule)
};

/// Metropolis rule: downhill moves always accepted, uphill moves with
/// probability exp(-delta / temperature). Both costs infinite counts as a
/// tie and is accepted.
bool metropolis_accept(double current_cost, double candidate_cost, double temperature, Rng& rng);

/// Cardinality-preserving simulated annealing: swap moves (one selected bit
/// off, one unselected bit on), Metropolis acceptance, geometric cooling
/// from t_max to t_min. Oracle calls: n_steps + 1.
GeoRunResult sa_solve(CostOracle& oracle, const PortfolioInstance& instance, const SaConfig& cfg,
                      const Selection& start);

/// Uniform draw from the cardinality-valid selections via a partial
/// Fisher-Yates shuffle of the index positions.
Selection random_valid_selection(int n_assets, int kappa, Rng& rng);

/// budget i.i.d. uniform draws from the valid selections. Dedup is off by
/// default, matching a pure random baseline.
GeoRunResult conditioned_random(CostOracle& oracle, const PortfolioInstance& instance,
                                std::uint64_t budget, std::uint64_t seed, bool dedup = false);

/// budget uniform draws over all 2^N bitstrings; wrong-cardinality draws
/// evaluate as infeasible and still consume budget.
GeoRunResult unconstrained_random(CostOracle& oracle, const PortfolioInstance& instance,
                                  std::uint64_t budget, std::uint64_t seed);

}  // namespace geopt
