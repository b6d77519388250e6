#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "geopt/born_machine.hpp"
#include "geopt/errors.hpp"
#include "geopt/portfolio.hpp"

namespace geopt {

/// Boltzmann multinomial over observed candidates: p_i proportional to
/// exp(-cost_i / T). Lower cost, higher probability.
struct SoftmaxSurrogate {
  std::vector<Selection> support;
  std::vector<double> costs;
  double temperature = 1.0;
  std::vector<double> probabilities;
};

/// Sample standard deviation of the costs; 1.0 with a warning when the
/// costs are all equal (degenerate temperature).
double default_temperature(std::span<const double> costs, WarningLog* warnings = nullptr);

/// Builds the multinomial with a max-shift for overflow safety. Duplicate
/// selections collapse to one class keeping the minimum cost.
SoftmaxSurrogate build_softmax(std::vector<Selection> candidates, std::vector<double> costs,
                               double temperature);

/// n_train multinomial draws with replacement; deterministic per seed.
BitstringDataset sample_training_set(const SoftmaxSurrogate& surrogate, int n_train,
                                     std::uint64_t seed);

/// Seed pool for runs that start with no observations: n_seed distinct
/// cardinality-valid selections, exactly one of which carries a true cost.
struct ColdStartState {
  std::vector<Selection> seed_pool;
  std::vector<double> costs;     // true cost where evaluated, sigma_ref elsewhere
  std::vector<bool> evaluated;
  double sigma_ref = 0.0;        // artificial reference cost sigma(0)
  double temperature = 1.0;
};

using SelectionEvaluator = std::function<double(const Selection&)>;

/// Draws n_seed distinct valid selections, sets the temperature to the
/// square root of the mean covariance entry, evaluates one uniformly chosen
/// pool point (one objective call through `evaluate`), and assigns every
/// other point the analytic reference cost sigma_ref = T ln 2 + sigma(1),
/// which makes the evaluated point exactly twice as likely as the rest.
ColdStartState cold_start(const PortfolioInstance& instance, int n_seed, std::uint64_t seed,
                          const SelectionEvaluator& evaluate, WarningLog* warnings = nullptr);

}  // namespace geopt
