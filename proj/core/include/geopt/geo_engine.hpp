#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "geopt/born_machine.hpp"
#include "geopt/errors.hpp"
#include "geopt/portfolio.hpp"

namespace geopt {

/// Black-box evaluation interface. Every call increments the counter; a set
/// budget is never exceeded (evaluate throws budget_exhausted instead).
class CostOracle {
 public:
  virtual ~CostOracle() = default;

  EvaluatedCandidate evaluate(const Selection& sel);

  std::uint64_t calls() const noexcept { return calls_; }
  void set_budget(std::uint64_t budget) noexcept { budget_ = budget; }
  void clear_budget() noexcept { budget_.reset(); }
  std::optional<std::uint64_t> budget() const noexcept { return budget_; }
  std::uint64_t remaining() const noexcept {
    if (!budget_) return std::numeric_limits<std::uint64_t>::max();
    return *budget_ > calls_ ? *budget_ - calls_ : 0;
  }

 private:
  virtual EvaluatedCandidate do_evaluate(const Selection& sel) = 0;
  std::uint64_t calls_ = 0;
  std::optional<std::uint64_t> budget_;
};

/// Oracle backed by the inner weight QP of a portfolio instance. Selections
/// with the wrong cardinality evaluate as infeasible (+inf cost sentinel)
/// rather than erroring, so unconstrained search strategies can burn budget
/// on them.
class PortfolioOracle final : public CostOracle {
 public:
  explicit PortfolioOracle(PortfolioInstance instance);
  const PortfolioInstance& instance() const noexcept { return instance_; }

 private:
  EvaluatedCandidate do_evaluate(const Selection& sel) override;
  PortfolioInstance instance_;
};

/// Oracle wrapping an arbitrary callable; the generic external-solver and
/// test hook.
class FunctionOracle final : public CostOracle {
 public:
  using Fn = std::function<EvaluatedCandidate(const Selection&)>;
  explicit FunctionOracle(Fn fn) : fn_(std::move(fn)) {}

 private:
  EvaluatedCandidate do_evaluate(const Selection& sel) override { return fn_(sel); }
  Fn fn_;
};

enum class GeoMode { booster, standalone };
enum class CandidateOrigin { seed, generated };

struct GeoConfig {
  GeoMode mode = GeoMode::booster;
  int n_seed = 2000;             // stand-alone seed pool size
  double seed_percentile = 0.10; // booster: kept fraction of the sorted data
  int n_train = 10000;
  int n_mps = 4000;
  int n_select_standalone = 2;
  int mps_init_bond = 2;
  TrainConfig train_cfg;
  int max_iterations = 1;       // booster protocol default: one cycle
  std::uint64_t eval_budget = 0;  // 0 = unlimited (booster only)
  std::uint64_t rng_seed = 0;
};

/// Archive entries drop the weight vectors (recomputable through the inner
/// QP); the run result's best candidate keeps its weights.
struct ArchiveEntry {
  Selection selection;
  double cost = std::numeric_limits<double>::infinity();
  bool feasible = false;
  CandidateOrigin origin = CandidateOrigin::generated;
  std::uint64_t order = 0;  // insertion index
};

struct HistoryPoint {
  int iteration = 0;
  std::uint64_t evals_used = 0;
  double best_cost = std::numeric_limits<double>::infinity();
};

struct IterationRecord {
  int iteration = 0;
  std::uint64_t evals_at_end = 0;
  int n_new_evaluated = 0;
  double temperature = 0.0;
  double train_nll = 0.0;
};

struct GeoRunResult {
  EvaluatedCandidate best;
  std::vector<HistoryPoint> history;  // best-so-far trace, non-increasing
  std::vector<ArchiveEntry> all_evaluated;
  std::vector<IterationRecord> iterations;
  int outstanding_count = 0;
  WarningLog warnings;
};

/// One GEO cycle per iteration: keep the lowest-cost percentile as the seed
/// set, build the softmax surrogate at the seed costs' standard deviation,
/// train a fresh MPS on surrogate draws, sample it, post-select valid unseen
/// candidates, evaluate them (most-frequent first when the budget truncates),
/// and merge. Runs until max_iterations or the evaluation budget.
GeoRunResult run_booster(CostOracle& oracle, const std::vector<EvaluatedCandidate>& initial_data,
                         const GeoConfig& cfg);

/// Cold-started GEO: the seed pool carries one true evaluation and an
/// analytic reference cost; each iteration evaluates the most frequent and
/// least frequent new valid MPS samples (falling back to unevaluated pool
/// entries) until the budget is spent.
GeoRunResult run_standalone(CostOracle& oracle, const PortfolioInstance& instance,
                            const GeoConfig& cfg);

/// Generator-origin candidates strictly below the best seed cost.
int count_outstanding(const GeoRunResult& result, double seed_best);

/// Hash of (Sigma, r, kappa, mode, rho/lambda, bounds); identifies the
/// problem a manifest belongs to.
std::uint64_t instance_fingerprint(const PortfolioInstance& instance);

nlohmann::json geo_config_to_json(const GeoConfig& cfg);
GeoConfig geo_config_from_json(const nlohmann::json& j);

/// Run manifest: config, instance fingerprint, seed, per-iteration records,
/// history, and the final archive.
nlohmann::json run_result_to_json(const GeoRunResult& result);
GeoRunResult run_result_from_json(const nlohmann::json& j);

}  // namespace geopt
