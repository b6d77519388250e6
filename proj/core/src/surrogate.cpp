#include "geopt/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "geopt/log.hpp"
#include "geopt/rng.hpp"
#include "geopt/stats.hpp"

namespace geopt {

double default_temperature(std::span<const double> costs, WarningLog* warnings) {
  std::size_t finite = 0;
  for (double c : costs)
    if (std::isfinite(c)) ++finite;
  if (finite < 2) throw invalid_argument("default_temperature: need at least 2 finite costs");

  std::vector<double> vals;
  vals.reserve(finite);
  for (double c : costs)
    if (std::isfinite(c)) vals.push_back(c);
  const double sd = sample_stddev(vals);
  if (sd == 0.0) {
    warn(warnings, "temperature-degenerate", "all costs equal; falling back to T = 1");
    return 1.0;
  }
  return sd;
}

SoftmaxSurrogate build_softmax(std::vector<Selection> candidates, std::vector<double> costs,
                               double temperature) {
  if (candidates.empty() || candidates.size() != costs.size())
    throw invalid_argument("build_softmax: candidate and cost lists must be parallel and nonempty");
  if (!(temperature > 0.0)) throw invalid_argument("build_softmax: temperature must be positive");
  for (double c : costs)
    if (std::isnan(c)) throw invalid_data("build_softmax: NaN cost");

  SoftmaxSurrogate s;
  s.temperature = temperature;

  std::unordered_map<std::string, std::size_t> index;
  index.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto [it, inserted] = index.emplace(candidates[i].to_string(), s.support.size());
    if (inserted) {
      s.support.push_back(std::move(candidates[i]));
      s.costs.push_back(costs[i]);
    } else {
      s.costs[it->second] = std::min(s.costs[it->second], costs[i]);
    }
  }

  const double shift = *std::min_element(s.costs.begin(), s.costs.end());
  s.probabilities.resize(s.costs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < s.costs.size(); ++i) {
    s.probabilities[i] = std::exp(-(s.costs[i] - shift) / temperature);
    total += s.probabilities[i];
  }
  for (double& p : s.probabilities) p /= total;
  return s;
}

BitstringDataset sample_training_set(const SoftmaxSurrogate& surrogate, int n_train,
                                     std::uint64_t seed) {
  if (n_train < 1) throw invalid_argument("sample_training_set: n_train must be >= 1");
  if (surrogate.support.empty()) throw invalid_argument("sample_training_set: empty surrogate");

  std::vector<double> cdf(surrogate.probabilities.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    acc += surrogate.probabilities[i];
    cdf[i] = acc;
  }
  cdf.back() = 1.0;

  Rng rng(seed);
  BitstringDataset data;
  data.n_vars = static_cast<int>(surrogate.support.front().bits.size());
  data.rows.reserve(static_cast<std::size_t>(n_train));
  for (int k = 0; k < n_train; ++k) {
    const double u = rng.next_double();
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const std::size_t idx = static_cast<std::size_t>(it - cdf.begin());
    data.rows.push_back(surrogate.support[std::min(idx, cdf.size() - 1)].bits);
  }
  return data;
}

namespace {

// n_seed distinct cardinality-kappa selections, uniform over the valid
// space. Enumerates and shuffles when the space is small; otherwise draws
// by rejection on the bitstring key.
std::vector<Selection> draw_distinct_valid(int n, int kappa, int n_seed, Rng& rng) {
  if (n <= 24) {
    auto all = enumerate_valid_selections(n, kappa);
    if (static_cast<std::size_t>(n_seed) > all.size())
      throw invalid_argument("cold_start: n_seed exceeds the number of valid selections");
    rng.shuffle(all);
    all.resize(static_cast<std::size_t>(n_seed));
    return all;
  }
  if (std::log(static_cast<double>(n_seed)) > log_count_valid_selections(n, kappa))
    throw invalid_argument("cold_start: n_seed exceeds the number of valid selections");

  std::vector<Selection> out;
  out.reserve(static_cast<std::size_t>(n_seed));
  std::unordered_map<std::string, bool> seen;
  seen.reserve(static_cast<std::size_t>(n_seed) * 2);
  std::vector<int> positions(static_cast<std::size_t>(n));
  while (static_cast<int>(out.size()) < n_seed) {
    // Partial Fisher-Yates: pick kappa of n positions without bias.
    for (int i = 0; i < n; ++i) positions[static_cast<std::size_t>(i)] = i;
    Selection sel;
    sel.bits.assign(static_cast<std::size_t>(n), 0);
    for (int k = 0; k < kappa; ++k) {
      const int j = k + rng.next_index(n - k);
      std::swap(positions[static_cast<std::size_t>(k)], positions[static_cast<std::size_t>(j)]);
      sel.bits[static_cast<std::size_t>(positions[static_cast<std::size_t>(k)])] = 1;
    }
    auto [it, inserted] = seen.emplace(sel.to_string(), true);
    if (inserted) out.push_back(std::move(sel));
  }
  return out;
}

}  // namespace

ColdStartState cold_start(const PortfolioInstance& instance, int n_seed, std::uint64_t seed,
                          const SelectionEvaluator& evaluate, WarningLog* warnings) {
  if (n_seed < 1) throw invalid_argument("cold_start: n_seed must be >= 1");
  if (!evaluate) throw invalid_argument("cold_start: evaluator is empty");

  Rng rng(seed);
  ColdStartState state;
  state.seed_pool = draw_distinct_valid(instance.n_assets, instance.cardinality, n_seed, rng);

  const double mean_cov = instance.stats.covariance.mean();
  if (mean_cov >= 0.0) {
    state.temperature = std::sqrt(mean_cov);
  } else {
    warn(warnings, "cold-start-negative-mean-covariance",
         "mean covariance entry is negative; using its absolute value for the temperature");
    state.temperature = std::sqrt(-mean_cov);
  }
  if (state.temperature == 0.0) {
    warn(warnings, "cold-start-zero-temperature",
         "mean covariance entry is zero; falling back to T = 1");
    state.temperature = 1.0;
  }

  const int pick = rng.next_index(n_seed);
  const double sigma_1 = evaluate(state.seed_pool[static_cast<std::size_t>(pick)]);

  state.sigma_ref = state.temperature * std::log(2.0) + sigma_1;
  state.costs.assign(static_cast<std::size_t>(n_seed), state.sigma_ref);
  state.evaluated.assign(static_cast<std::size_t>(n_seed), false);
  state.costs[static_cast<std::size_t>(pick)] = sigma_1;
  state.evaluated[static_cast<std::size_t>(pick)] = true;
  return state;
}

}  // namespace geopt
