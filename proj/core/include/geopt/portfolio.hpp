#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "geopt/bitstring.hpp"
#include "geopt/errors.hpp"

namespace geopt {

struct PriceSeries {
  std::vector<std::string> asset_ids;
  Eigen::MatrixXd prices;  // rows = time, columns = assets; all entries > 0
  std::string period_label;
};

struct ReturnStats {
  Eigen::VectorXd mean_returns;
  Eigen::MatrixXd covariance;
};

enum class ObjectiveMode { return_target, risk_aversion };

/// Asset-selection bitstring; valid candidates have Hamming weight equal to
/// the instance cardinality.
struct Selection {
  Bitstring bits;

  int weight() const noexcept { return hamming_weight(bits); }
  std::string to_string() const { return geopt::to_string(bits); }
};

Selection selection_from_indices(int n_assets, const std::vector<int>& indices);

struct PortfolioInstance {
  int n_assets = 0;
  int cardinality = 0;
  ObjectiveMode objective_mode = ObjectiveMode::return_target;
  double rho = 0.0;     // target return; used in return_target mode
  double lambda = 0.5;  // risk aversion in [0, 1]; used in risk_aversion mode
  Eigen::VectorXd lower_bounds;
  Eigen::VectorXd upper_bounds;
  ReturnStats stats;
};

/// Invariant checks (bounds ordering, covariance symmetry/PSD, budget
/// feasibility of every cardinality-sized subset). Throws invalid_argument
/// or invalid_data with a description.
void validate_instance(const PortfolioInstance& instance);

struct EvaluatedCandidate {
  Selection selection;
  Eigen::VectorXd weights;  // zero off-selection
  double cost = 0.0;        // sigma in return_target mode; blended objective otherwise
  bool feasible = false;
};

/// Portfolio risk sqrt(w' Sigma w) of an evaluated candidate.
double candidate_risk(const PortfolioInstance& instance, const EvaluatedCandidate& cand);
/// Expected return r . w of an evaluated candidate.
double candidate_return(const PortfolioInstance& instance, const EvaluatedCandidate& cand);

struct FrontierPoint {
  double risk = 0.0;  // X coordinate
  double ret = 0.0;   // Y coordinate
};

enum class FrontierKind { standard, heuristic };

/// Ordered (risk, return) pairs with strictly increasing returns.
struct FrontierSet {
  std::vector<FrontierPoint> points;
  FrontierKind kind = FrontierKind::standard;
};

/// Sorts by return and collapses duplicate returns keeping the lowest risk.
FrontierSet make_frontier(std::vector<FrontierPoint> points, FrontierKind kind);

/// Per-period relative increments, their time average, and the unbiased
/// sample covariance. A single return row yields a zero covariance.
ReturnStats compute_returns(const PriceSeries& prices);

/// Optimal weight allocation for a fixed selection: minimizes the mode's
/// convex objective subject to sum(w) = 1, the instance bounds, and (in
/// return_target mode) r . w = rho. Infeasible constraint sets yield
/// feasible = false with a +infinity cost sentinel.
EvaluatedCandidate solve_inner_qp(const PortfolioInstance& instance, const Selection& sel);

/// Reference frontier without the cardinality constraint: sweeps the target
/// return over [min r, max r] on a uniform grid, dropping infeasible points.
FrontierSet standard_frontier(const ReturnStats& stats, const Eigen::VectorXd& lower,
                              const Eigen::VectorXd& upper, int n_points);

/// Correlated geometric-Brownian price series run through compute_returns;
/// bounds default to [0, 1]. Deterministic per seed.
PortfolioInstance generate_synthetic_instance(int n_assets, int kappa, std::uint64_t seed);

/// C(n, kappa); requires a result that fits in uint64 (n <= 62).
std::uint64_t count_valid_selections(int n, int kappa);
/// ln C(n, kappa), usable at any scale.
double log_count_valid_selections(int n, int kappa);
/// All cardinality-kappa selections in lexicographic index order (n <= 24).
std::vector<Selection> enumerate_valid_selections(int n, int kappa);

/// Price CSV: header row "date,<id>,<id>,..."; first column ISO date.
PriceSeries read_price_csv(const std::string& path, const std::string& period_label = "");

/// OR-Library "port" file: asset count; per-asset mean and stddev of return;
/// "i j corr" triples (1-indexed, upper triangle). The covariance is
/// reconstructed as corr_ij * s_i * s_j.
struct OrLibraryData {
  int n_assets = 0;
  ReturnStats stats;
};
OrLibraryData read_orlib_port(const std::string& path);

}  // namespace geopt
