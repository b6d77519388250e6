#include "geopt/portfolio.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "geopt/qp.hpp"
#include "geopt/rng.hpp"

namespace geopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

EvaluatedCandidate infeasible_sentinel(const Selection& sel, int n_assets) {
  EvaluatedCandidate out;
  out.selection = sel;
  out.weights = Eigen::VectorXd::Zero(n_assets);
  out.cost = kInf;
  out.feasible = false;
  return out;
}

// Feasible point of {sum w = 1, l <= w <= u} biased toward `ascending`
// return order: mass is poured greedily from l up to the caps.
Eigen::VectorXd waterfill(const Eigen::VectorXd& l, const Eigen::VectorXd& u,
                          const std::vector<int>& order) {
  Eigen::VectorXd w = l;
  double rem = 1.0 - l.sum();
  for (int i : order) {
    const double add = std::min(u(i) - l(i), rem);
    w(i) += add;
    rem -= add;
    if (rem <= 0.0) break;
  }
  return w;
}

struct WeightQpInput {
  Eigen::MatrixXd sigma;   // k x k
  Eigen::VectorXd returns; // k
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct WeightQpResult {
  bool feasible = false;
  Eigen::VectorXd w;
};

// Shared inner solve over a fixed asset subset. `target_return` engages the
// r . w = rho row (return_target mode); `risk_aversion` builds the blended
// objective lambda sigma^2 - (1 - lambda) r . w.
WeightQpResult solve_weight_qp(const WeightQpInput& in, bool use_target, double rho,
                               double lambda) {
  const Eigen::Index k = in.sigma.rows();
  const double feas_tol = 1e-9 * std::max(1.0, in.returns.cwiseAbs().maxCoeff());

  if (in.lower.sum() > 1.0 + 1e-12 || in.upper.sum() < 1.0 - 1e-12) return {};

  std::vector<int> asc(static_cast<std::size_t>(k));
  std::iota(asc.begin(), asc.end(), 0);
  std::sort(asc.begin(), asc.end(),
            [&](int a, int b) { return in.returns(a) < in.returns(b); });
  std::vector<int> desc(asc.rbegin(), asc.rend());

  qp::Problem prob;
  prob.lower = in.lower;
  prob.upper = in.upper;
  Eigen::VectorXd x0;

  const double ret_spread = in.returns.maxCoeff() - in.returns.minCoeff();
  const bool degenerate_returns = ret_spread <= 1e-12 * std::max(1.0, in.returns.cwiseAbs().maxCoeff());

  if (use_target) {
    if (degenerate_returns) {
      // Every feasible w has the same expected return; rho must match it.
      if (std::fabs(in.returns(0) - rho) > feas_tol) return {};
      prob.A = Eigen::MatrixXd::Ones(1, k);
      prob.b = Eigen::VectorXd::Ones(1);
      x0 = waterfill(in.lower, in.upper, asc);
    } else {
      const Eigen::VectorXd w_min = waterfill(in.lower, in.upper, asc);
      const Eigen::VectorXd w_max = waterfill(in.lower, in.upper, desc);
      const double rho_min = in.returns.dot(w_min);
      const double rho_max = in.returns.dot(w_max);
      if (rho < rho_min - feas_tol || rho > rho_max + feas_tol) return {};
      const double span = rho_max - rho_min;
      const double t = span > 0.0 ? std::clamp((rho - rho_min) / span, 0.0, 1.0) : 0.0;
      x0 = (1.0 - t) * w_min + t * w_max;
      prob.A = Eigen::MatrixXd(2, k);
      prob.A.row(0).setOnes();
      prob.A.row(1) = in.returns.transpose();
      prob.b = Eigen::VectorXd(2);
      prob.b << 1.0, rho;
    }
    prob.Q = 2.0 * in.sigma;
    prob.c = Eigen::VectorXd::Zero(k);
  } else {
    prob.A = Eigen::MatrixXd::Ones(1, k);
    prob.b = Eigen::VectorXd::Ones(1);
    prob.Q = 2.0 * lambda * in.sigma;
    prob.c = -(1.0 - lambda) * in.returns;
    x0 = waterfill(in.lower, in.upper, asc);
  }

  qp::Solution sol = qp::solve(prob, x0, 100 * static_cast<int>(k));
  return {true, sol.x};
}

}  // namespace

Selection selection_from_indices(int n_assets, const std::vector<int>& indices) {
  Selection sel;
  sel.bits.assign(static_cast<std::size_t>(n_assets), 0);
  for (int i : indices) {
    if (i < 0 || i >= n_assets) throw invalid_argument("selection index out of range");
    sel.bits[static_cast<std::size_t>(i)] = 1;
  }
  return sel;
}

void validate_instance(const PortfolioInstance& inst) {
  const int n = inst.n_assets;
  if (n < 1) throw invalid_argument("instance: n_assets must be >= 1");
  if (inst.cardinality < 1 || inst.cardinality > n)
    throw invalid_argument("instance: cardinality must be in [1, n_assets]");
  if (inst.lower_bounds.size() != n || inst.upper_bounds.size() != n)
    throw invalid_argument("instance: bound vectors must have n_assets entries");
  if (inst.stats.mean_returns.size() != n || inst.stats.covariance.rows() != n ||
      inst.stats.covariance.cols() != n)
    throw invalid_argument("instance: stats dimensions must match n_assets");
  if (inst.objective_mode == ObjectiveMode::risk_aversion &&
      (inst.lambda < 0.0 || inst.lambda > 1.0))
    throw invalid_argument("instance: lambda must be in [0, 1]");

  for (int i = 0; i < n; ++i) {
    if (!(inst.lower_bounds(i) >= 0.0 && inst.lower_bounds(i) < 1.0))
      throw invalid_argument("instance: lower bounds must lie in [0, 1)");
    if (!(inst.upper_bounds(i) > 0.0 && inst.upper_bounds(i) <= 1.0))
      throw invalid_argument("instance: upper bounds must lie in (0, 1]");
    if (!(inst.lower_bounds(i) < inst.upper_bounds(i)))
      throw invalid_argument("instance: lower bound must be below upper bound");
  }

  // Budget feasibility for every cardinality-sized subset: the kappa largest
  // lower bounds must not exceed 1, and the kappa smallest upper bounds must
  // reach 1.
  Eigen::VectorXd l = inst.lower_bounds;
  Eigen::VectorXd u = inst.upper_bounds;
  std::sort(l.data(), l.data() + n, std::greater<double>());
  std::sort(u.data(), u.data() + n);
  const int kappa = inst.cardinality;
  if (l.head(kappa).sum() > 1.0 + 1e-12)
    throw invalid_argument("instance: lower bounds make some subsets over-committed");
  if (u.head(kappa).sum() < 1.0 - 1e-12)
    throw invalid_argument("instance: upper bounds cannot absorb the full budget");

  const auto& cov = inst.stats.covariance;
  if (((cov - cov.transpose()).cwiseAbs().maxCoeff()) > 1e-12)
    throw invalid_data("instance: covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10)
    throw invalid_data("instance: covariance is not positive semidefinite");
}

double candidate_risk(const PortfolioInstance& inst, const EvaluatedCandidate& cand) {
  return std::sqrt(std::max(0.0, cand.weights.dot(inst.stats.covariance * cand.weights)));
}

double candidate_return(const PortfolioInstance& inst, const EvaluatedCandidate& cand) {
  return inst.stats.mean_returns.dot(cand.weights);
}

FrontierSet make_frontier(std::vector<FrontierPoint> points, FrontierKind kind) {
  std::sort(points.begin(), points.end(), [](const FrontierPoint& a, const FrontierPoint& b) {
    return a.ret < b.ret || (a.ret == b.ret && a.risk < b.risk);
  });
  FrontierSet out;
  out.kind = kind;
  for (const auto& pt : points) {
    if (!out.points.empty() && pt.ret == out.points.back().ret) continue;  // keep lowest risk
    out.points.push_back(pt);
  }
  return out;
}

ReturnStats compute_returns(const PriceSeries& series) {
  const Eigen::Index t_rows = series.prices.rows();
  const Eigen::Index n = series.prices.cols();
  if (t_rows < 2) throw invalid_argument("compute_returns: need at least 2 price rows");
  for (Eigen::Index t = 0; t < t_rows; ++t)
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(series.prices(t, i) > 0.0))
        throw invalid_data("compute_returns: nonpositive price at row " + std::to_string(t));

  Eigen::MatrixXd rets(t_rows - 1, n);
  for (Eigen::Index t = 1; t < t_rows; ++t)
    rets.row(t - 1) =
        (series.prices.row(t) - series.prices.row(t - 1)).cwiseQuotient(series.prices.row(t - 1));

  ReturnStats stats;
  stats.mean_returns = rets.colwise().mean();
  const Eigen::Index rows = rets.rows();
  if (rows < 2) {
    stats.covariance = Eigen::MatrixXd::Zero(n, n);
    return stats;
  }
  Eigen::MatrixXd centered = rets.rowwise() - stats.mean_returns.transpose();
  stats.covariance = (centered.transpose() * centered) / static_cast<double>(rows - 1);
  stats.covariance = ((stats.covariance + stats.covariance.transpose()) / 2.0).eval();
  return stats;
}

EvaluatedCandidate solve_inner_qp(const PortfolioInstance& inst, const Selection& sel) {
  if (static_cast<int>(sel.bits.size()) != inst.n_assets)
    throw invalid_candidate("solve_inner_qp: selection length does not match n_assets");
  if (sel.weight() != inst.cardinality)
    throw invalid_candidate("solve_inner_qp: selection weight " + std::to_string(sel.weight()) +
                            " != cardinality " + std::to_string(inst.cardinality));

  std::vector<int> idx;
  for (int i = 0; i < inst.n_assets; ++i)
    if (sel.bits[static_cast<std::size_t>(i)]) idx.push_back(i);
  const int k = static_cast<int>(idx.size());

  WeightQpInput in;
  in.sigma.resize(k, k);
  in.returns.resize(k);
  in.lower.resize(k);
  in.upper.resize(k);
  for (int a = 0; a < k; ++a) {
    in.returns(a) = inst.stats.mean_returns(idx[a]);
    in.lower(a) = inst.lower_bounds(idx[a]);
    in.upper(a) = inst.upper_bounds(idx[a]);
    for (int b = 0; b < k; ++b) in.sigma(a, b) = inst.stats.covariance(idx[a], idx[b]);
  }

  const bool use_target = inst.objective_mode == ObjectiveMode::return_target;
  WeightQpResult res = solve_weight_qp(in, use_target, inst.rho, inst.lambda);
  if (!res.feasible) return infeasible_sentinel(sel, inst.n_assets);

  EvaluatedCandidate out;
  out.selection = sel;
  out.weights = Eigen::VectorXd::Zero(inst.n_assets);
  for (int a = 0; a < k; ++a) out.weights(idx[a]) = res.w(a);
  out.feasible = true;
  const double variance = std::max(0.0, res.w.dot(in.sigma * res.w));
  if (use_target) {
    out.cost = std::sqrt(variance);
  } else {
    out.cost = inst.lambda * variance - (1.0 - inst.lambda) * in.returns.dot(res.w);
  }
  return out;
}

FrontierSet standard_frontier(const ReturnStats& stats, const Eigen::VectorXd& lower,
                              const Eigen::VectorXd& upper, int n_points) {
  if (n_points < 2) throw invalid_argument("standard_frontier: n_points must be >= 2");
  const Eigen::Index n = stats.mean_returns.size();
  if (lower.size() != n || upper.size() != n)
    throw invalid_argument("standard_frontier: bounds must match the asset count");

  WeightQpInput in{stats.covariance, stats.mean_returns, lower, upper};
  const double r_lo = stats.mean_returns.minCoeff();
  const double r_hi = stats.mean_returns.maxCoeff();

  std::vector<FrontierPoint> pts;
  for (int g = 0; g < n_points; ++g) {
    const double rho =
        r_lo + (r_hi - r_lo) * static_cast<double>(g) / static_cast<double>(n_points - 1);
    WeightQpResult res = solve_weight_qp(in, true, rho, 0.0);
    if (!res.feasible) continue;
    const double risk = std::sqrt(std::max(0.0, res.w.dot(stats.covariance * res.w)));
    pts.push_back({risk, rho});
  }
  if (pts.empty()) throw empty_frontier("standard_frontier: no feasible grid point");
  return make_frontier(std::move(pts), FrontierKind::standard);
}

PortfolioInstance generate_synthetic_instance(int n_assets, int kappa, std::uint64_t seed) {
  if (n_assets < 1) throw invalid_argument("generate_synthetic_instance: n_assets must be >= 1");
  if (kappa < 1 || kappa > n_assets)
    throw invalid_argument("generate_synthetic_instance: kappa must be in [1, n_assets]");

  Rng rng(seed);
  const int t_rows = 261;  // one year of daily closes
  PriceSeries series;
  series.period_label = "synthetic-daily";
  series.asset_ids.reserve(static_cast<std::size_t>(n_assets));
  for (int i = 0; i < n_assets; ++i) series.asset_ids.push_back("A" + std::to_string(i));

  // Market factor plus sector factors: heterogeneous correlations and a wide
  // volatility spread, so asset subsets differ materially in risk.
  const int n_sectors = std::clamp(n_assets / 6, 1, 6);
  std::vector<int> sector(static_cast<std::size_t>(n_assets));
  Eigen::VectorXd drift(n_assets), vol(n_assets), beta_mkt(n_assets), beta_sec(n_assets),
      start(n_assets);
  for (int i = 0; i < n_assets; ++i) {
    sector[static_cast<std::size_t>(i)] = rng.next_index(n_sectors);
    drift(i) = rng.next_uniform(-4e-4, 1.2e-3);
    vol(i) = rng.next_uniform(0.004, 0.035);
    beta_mkt(i) = rng.next_uniform(0.2, 0.6);
    beta_sec(i) = rng.next_uniform(0.3, 0.7);
    start(i) = rng.next_uniform(20.0, 200.0);
  }

  series.prices.resize(t_rows, n_assets);
  series.prices.row(0) = start.transpose();
  std::vector<double> sector_shock(static_cast<std::size_t>(n_sectors));
  for (int t = 1; t < t_rows; ++t) {
    const double market = rng.next_normal();
    for (auto& s : sector_shock) s = rng.next_normal();
    for (int i = 0; i < n_assets; ++i) {
      const double idio =
          std::sqrt(std::max(0.0, 1.0 - beta_mkt(i) * beta_mkt(i) - beta_sec(i) * beta_sec(i)));
      const double shock = beta_mkt(i) * market +
                           beta_sec(i) * sector_shock[static_cast<std::size_t>(sector[static_cast<std::size_t>(i)])] +
                           idio * rng.next_normal();
      series.prices(t, i) = series.prices(t - 1, i) * std::exp(drift(i) + vol(i) * shock);
    }
  }

  PortfolioInstance inst;
  inst.n_assets = n_assets;
  inst.cardinality = kappa;
  inst.objective_mode = ObjectiveMode::return_target;
  inst.lower_bounds = Eigen::VectorXd::Zero(n_assets);
  inst.upper_bounds = Eigen::VectorXd::Ones(n_assets);
  inst.stats = compute_returns(series);
  inst.rho = inst.stats.mean_returns.mean();
  validate_instance(inst);
  return inst;
}

std::uint64_t count_valid_selections(int n, int kappa) {
  if (n < 0 || kappa < 0 || kappa > n) throw invalid_argument("count_valid_selections: bad arguments");
  if (n > 62) throw invalid_argument("count_valid_selections: n too large for exact count");
  kappa = std::min(kappa, n - kappa);
  std::uint64_t result = 1;
  for (int i = 1; i <= kappa; ++i) {
    // result * (n - kappa + i) / i is integral at every step
    result = result / static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n - kappa + i) +
             result % static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n - kappa + i) /
                 static_cast<std::uint64_t>(i);
  }
  return result;
}

double log_count_valid_selections(int n, int kappa) {
  if (n < 0 || kappa < 0 || kappa > n) throw invalid_argument("log_count_valid_selections: bad arguments");
  return std::lgamma(n + 1.0) - std::lgamma(kappa + 1.0) - std::lgamma(n - kappa + 1.0);
}

std::vector<Selection> enumerate_valid_selections(int n, int kappa) {
  if (n > 24) throw invalid_argument("enumerate_valid_selections: n too large to enumerate");
  std::vector<Selection> out;
  out.reserve(static_cast<std::size_t>(count_valid_selections(n, kappa)));
  for (std::uint64_t idx = 0; idx < (std::uint64_t{1} << n); ++idx) {
    Bitstring bits = bitstring_from_index(idx, n);
    if (hamming_weight(bits) == kappa) out.push_back({std::move(bits)});
  }
  return out;
}

PriceSeries read_price_csv(const std::string& path, const std::string& period_label) {
  std::ifstream is(path);
  if (!is) throw io_error("read_price_csv: cannot open " + path);

  PriceSeries out;
  out.period_label = period_label;
  std::string line;
  if (!std::getline(is, line)) throw invalid_data("read_price_csv: empty file " + path);

  std::stringstream header(line);
  std::string cell;
  bool first = true;
  while (std::getline(header, cell, ',')) {
    if (first) {
      first = false;  // date column
      continue;
    }
    out.asset_ids.push_back(cell);
  }
  if (out.asset_ids.empty()) throw invalid_data("read_price_csv: header has no asset columns");

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string date;
    if (!std::getline(ss, date, ',')) continue;
    std::vector<double> row;
    row.reserve(out.asset_ids.size());
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw invalid_data("read_price_csv: bad number at line " + std::to_string(line_no));
      }
    }
    if (row.size() != out.asset_ids.size())
      throw invalid_data("read_price_csv: wrong column count at line " + std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw invalid_data("read_price_csv: need at least 2 price rows");

  out.prices.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(out.asset_ids.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < rows[t].size(); ++i)
      out.prices(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = rows[t][i];
  return out;
}

OrLibraryData read_orlib_port(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("read_orlib_port: cannot open " + path);

  int n = 0;
  if (!(is >> n) || n < 1) throw invalid_data("read_orlib_port: bad asset count in " + path);

  Eigen::VectorXd mean(n), stddev(n);
  for (int i = 0; i < n; ++i) {
    if (!(is >> mean(i) >> stddev(i)))
      throw invalid_data("read_orlib_port: truncated asset block at asset " + std::to_string(i + 1));
    if (stddev(i) < 0.0)
      throw invalid_data("read_orlib_port: negative stddev at asset " + std::to_string(i + 1));
  }

  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(n, n);
  int i = 0, j = 0;
  double c = 0.0;
  while (is >> i >> j >> c) {
    if (i < 1 || i > n || j < 1 || j > n)
      throw invalid_data("read_orlib_port: correlation index out of range");
    if (c < -1.0 - 1e-9 || c > 1.0 + 1e-9)
      throw invalid_data("read_orlib_port: correlation outside [-1, 1]");
    corr(i - 1, j - 1) = c;
    corr(j - 1, i - 1) = c;
  }

  OrLibraryData out;
  out.n_assets = n;
  out.stats.mean_returns = mean;
  out.stats.covariance = corr.cwiseProduct(stddev * stddev.transpose());
  out.stats.covariance =
      ((out.stats.covariance + out.stats.covariance.transpose()) / 2.0).eval();
  return out;
}

}  // namespace geopt
