#include "geopt/born_machine.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <unordered_map>

#include "geopt/log.hpp"
#include "geopt/rng.hpp"

namespace geopt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int max_exact_bond(int i, int n_vars) {
  const int e = std::min(i, n_vars - i);
  return e >= 30 ? std::numeric_limits<int>::max() : (1 << e);
}

void check_row(const Bitstring& x, int n_vars, const char* where) {
  if (static_cast<int>(x.size()) != n_vars)
    throw invalid_argument(std::string(where) + ": bitstring length does not match n_vars");
  for (auto b : x)
    if (b > 1) throw invalid_argument(std::string(where) + ": bitstring value is not 0 or 1");
}

// Left-orthonormalizes site i, absorbing the triangular factor into site i+1.
// QR signs are fixed (positive R diagonal) so canonicalization is idempotent.
void push_right(MpsModel& m, int i) {
  const int dl = m.bond_dims[i];
  const int dr = m.bond_dims[i + 1];
  Eigen::MatrixXd stacked(2 * dl, dr);
  stacked.topRows(dl) = m.sites[i][0];
  stacked.bottomRows(dl) = m.sites[i][1];

  const int k = std::min(2 * dl, dr);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(stacked);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(2 * dl, k);
  Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (int j = 0; j < k; ++j) {
    if (r(j, j) < 0) {
      q.col(j) *= -1.0;
      r.row(j) *= -1.0;
    }
  }

  m.sites[i][0] = q.topRows(dl);
  m.sites[i][1] = q.bottomRows(dl);
  m.bond_dims[i + 1] = k;
  m.sites[i + 1][0] = r * m.sites[i + 1][0];
  m.sites[i + 1][1] = r * m.sites[i + 1][1];
}

// Right-orthonormalizes site i, absorbing the factor into site i-1.
void push_left(MpsModel& m, int i) {
  const int dl = m.bond_dims[i];
  const int dr = m.bond_dims[i + 1];
  Eigen::MatrixXd wide(dl, 2 * dr);
  wide.leftCols(dr) = m.sites[i][0];
  wide.rightCols(dr) = m.sites[i][1];

  const int k = std::min(dl, 2 * dr);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(wide.transpose());
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(2 * dr, k);
  Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (int j = 0; j < k; ++j) {
    if (r(j, j) < 0) {
      q.col(j) *= -1.0;
      r.row(j) *= -1.0;
    }
  }

  // wide = (q r)^T restricted: rows of q^T are the new right-orthonormal site.
  Eigen::MatrixXd qt = q.transpose();  // k x 2dr
  m.sites[i][0] = qt.leftCols(dr);
  m.sites[i][1] = qt.rightCols(dr);
  m.bond_dims[i] = k;
  Eigen::MatrixXd l = r.transpose();  // dl x k
  m.sites[i - 1][0] = m.sites[i - 1][0] * l;
  m.sites[i - 1][1] = m.sites[i - 1][1] * l;
}

double center_norm_sq(const MpsModel& m, int c) {
  return m.sites[c][0].squaredNorm() + m.sites[c][1].squaredNorm();
}

// Squared amplitude of x in log space, or -inf. Per-site rescaling keeps the
// running vector O(1) for chains up to several hundred sites.
double log_abs_psi(const MpsModel& m, const Bitstring& x) {
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Ones(1);
  double log_abs = 0.0;
  for (int i = 0; i < m.n_vars(); ++i) {
    v = v * m.sites[i][x[i]];
    const double n = v.norm();
    if (n == 0.0) return kNegInf;
    log_abs += std::log(n);
    v /= n;
  }
  return log_abs;
}

struct DedupedData {
  std::vector<Bitstring> rows;   // unique, in first-occurrence order
  std::vector<double> weights;   // multiplicities
  double total_weight = 0.0;
};

DedupedData dedup_rows(const BitstringDataset& data) {
  DedupedData out;
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(data.rows.size());
  for (const auto& row : data.rows) {
    check_row(row, data.n_vars, "dataset");
    auto key = to_string(row);
    auto [it, inserted] = index.emplace(std::move(key), out.rows.size());
    if (inserted) {
      out.rows.push_back(row);
      out.weights.push_back(1.0);
    } else {
      out.weights[it->second] += 1.0;
    }
  }
  out.total_weight = static_cast<double>(data.rows.size());
  return out;
}

double weighted_nll(const MpsModel& m, const DedupedData& d) {
  const double log_z = log_partition_function(m);
  double acc = 0.0;
  for (std::size_t u = 0; u < d.rows.size(); ++u) {
    const double la = log_abs_psi(m, d.rows[u]);
    if (la == kNegInf)
      throw out_of_support("negative_log_likelihood: row has zero probability",
                           to_string(d.rows[u]));
    acc += d.weights[u] * (2.0 * la - log_z);
  }
  return -acc / d.total_weight;
}

double two_site_norm_sq(const TwoSiteTensor& m) {
  double n = 0.0;
  for (const auto& row : m)
    for (const auto& block : row) n += block.squaredNorm();
  return n;
}

// Per-row environment views at one bond. Vectors are normalized; the scale
// factors cancel in every gradient ratio.
struct BondRows {
  std::vector<int> phys_left;
  std::vector<int> phys_right;
  std::vector<Eigen::RowVectorXd> lvec;
  std::vector<Eigen::VectorXd> rvec;
  std::vector<double> weight;
  double total_weight = 0.0;
};

// grad = 2 M / |M|^2 - (2/W) sum_rows w * outer(l, r) / psi, the derivative
// of the mean NLL in the mixed-canonical frame where Z = |M|^2.
TwoSiteTensor bond_gradient(const TwoSiteTensor& m, const BondRows& rows) {
  const int dl = m[0][0].rows();
  const int dr = m[0][0].cols();
  const double norm_sq = two_site_norm_sq(m);

  TwoSiteTensor grad;
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 2; ++t) grad[s][t] = (2.0 / norm_sq) * m[s][t];

  Eigen::MatrixXd acc[2][2];
  for (auto& row : acc)
    for (auto& block : row) block = Eigen::MatrixXd::Zero(dl, dr);

  for (std::size_t u = 0; u < rows.weight.size(); ++u) {
    const int s = rows.phys_left[u];
    const int t = rows.phys_right[u];
    double psi = rows.lvec[u] * m[s][t] * rows.rvec[u];
    if (psi == 0.0) psi = 1e-290;  // transient zero crossing; NLL barrier pushes away
    acc[s][t].noalias() +=
        (rows.weight[u] / psi) * (rows.lvec[u].transpose() * rows.rvec[u].transpose());
  }
  const double scale = 2.0 / rows.total_weight;
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 2; ++t) grad[s][t] -= scale * acc[s][t];
  return grad;
}

struct SplitResult {
  SiteTensor left;
  SiteTensor right;
  int new_bond = 0;
};

SplitResult split_two_site(const TwoSiteTensor& m, int max_bond_dim, double svd_cutoff,
                           bool move_right) {
  const int dl = m[0][0].rows();
  const int dr = m[0][0].cols();
  Eigen::MatrixXd big(2 * dl, 2 * dr);
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 2; ++t) big.block(s * dl, t * dr, dl, dr) = m[s][t];

  Eigen::BDCSVD<Eigen::MatrixXd> svd(big, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const int n_sv = static_cast<int>(sv.size());

  double total = sv.squaredNorm();
  int keep = n_sv;
  if (total > 0.0 && svd_cutoff > 0.0) {
    double discarded = 0.0;
    while (keep > 1) {
      const double next = discarded + sv(keep - 1) * sv(keep - 1);
      if (next > svd_cutoff * total) break;
      discarded = next;
      --keep;
    }
  }
  keep = std::max(1, std::min(keep, max_bond_dim));

  Eigen::MatrixXd u = svd.matrixU().leftCols(keep);
  Eigen::MatrixXd v = svd.matrixV().leftCols(keep);
  Eigen::VectorXd s_kept = sv.head(keep);

  SplitResult out;
  out.new_bond = keep;
  if (move_right) {
    Eigen::MatrixXd right = s_kept.asDiagonal() * v.transpose();  // keep x 2dr
    out.left = {u.topRows(dl), u.bottomRows(dl)};
    out.right = {right.leftCols(dr), right.rightCols(dr)};
  } else {
    Eigen::MatrixXd left = u * s_kept.asDiagonal();  // 2dl x keep
    Eigen::MatrixXd vt = v.transpose();              // keep x 2dr
    out.left = {left.topRows(dl), left.bottomRows(dl)};
    out.right = {vt.leftCols(dr), vt.rightCols(dr)};
  }
  return out;
}

}  // namespace

void validate_mps(const MpsModel& model) {
  const int n = model.n_vars();
  if (n < 1) throw invalid_data("mps: model has no sites");
  if (static_cast<int>(model.bond_dims.size()) != n + 1)
    throw invalid_data("mps: bond_dims must have n_vars + 1 entries");
  if (model.bond_dims.front() != 1 || model.bond_dims.back() != 1)
    throw invalid_data("mps: boundary bond dimensions must be 1");
  for (int i = 0; i <= n; ++i)
    if (model.bond_dims[i] < 1) throw invalid_data("mps: bond dimensions must be positive");
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < 2; ++s) {
      const auto& t = model.sites[i][s];
      if (t.rows() != model.bond_dims[i] || t.cols() != model.bond_dims[i + 1])
        throw invalid_data("mps: site tensor shape does not match bond_dims");
      if (!t.allFinite()) throw invalid_data("mps: site tensor has non-finite entries");
    }
  }
  if (model.canonical_center < -1 || model.canonical_center >= n)
    throw invalid_data("mps: canonical_center out of range");
}

MpsModel init_mps(int n_vars, int init_bond, std::uint64_t seed) {
  if (n_vars < 1) throw invalid_argument("init_mps: n_vars must be >= 1");
  if (init_bond < 1) throw invalid_argument("init_mps: init_bond must be >= 1");

  MpsModel m;
  m.bond_dims.resize(n_vars + 1);
  for (int i = 0; i <= n_vars; ++i)
    m.bond_dims[i] = std::min(init_bond, max_exact_bond(i, n_vars));

  Rng rng(seed);
  m.sites.resize(n_vars);
  for (int i = 0; i < n_vars; ++i) {
    for (int s = 0; s < 2; ++s) {
      Eigen::MatrixXd t(m.bond_dims[i], m.bond_dims[i + 1]);
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = rng.next_uniform(0.9, 1.1);
      m.sites[i][s] = std::move(t);
    }
  }

  canonicalize(m, 0);
  const double norm = std::sqrt(center_norm_sq(m, 0));
  m.sites[0][0] /= norm;
  m.sites[0][1] /= norm;
  return m;
}

void canonicalize(MpsModel& model, int center) {
  const int n = model.n_vars();
  if (center < 0 || center >= n) throw invalid_argument("canonicalize: center out of range");
  for (int i = 0; i < center; ++i) push_right(model, i);
  for (int i = n - 1; i > center; --i) push_left(model, i);
  model.canonical_center = center;
}

double log_partition_function(const MpsModel& model) {
  if (model.canonical_center >= 0)
    return std::log(center_norm_sq(model, model.canonical_center));

  // Transfer contraction L <- sum_s A[s]^T L A[s] with per-site rescaling.
  Eigen::MatrixXd l = Eigen::MatrixXd::Ones(1, 1);
  double log_scale = 0.0;
  for (int i = 0; i < model.n_vars(); ++i) {
    Eigen::MatrixXd next = model.sites[i][0].transpose() * l * model.sites[i][0];
    next.noalias() += model.sites[i][1].transpose() * l * model.sites[i][1];
    const double f = next.norm();
    if (f == 0.0) throw invalid_data("partition function is zero");
    log_scale += std::log(f);
    l = next / f;
  }
  return log_scale + std::log(l(0, 0));
}

double partition_function(const MpsModel& model) {
  return std::exp(log_partition_function(model));
}

double log_born_probability(const MpsModel& model, const Bitstring& x) {
  check_row(x, model.n_vars(), "born_probability");
  const double la = log_abs_psi(model, x);
  if (la == kNegInf) return kNegInf;
  return 2.0 * la - log_partition_function(model);
}

double born_probability(const MpsModel& model, const Bitstring& x) {
  const double lp = log_born_probability(model, x);
  return lp == kNegInf ? 0.0 : std::exp(lp);
}

double negative_log_likelihood(const MpsModel& model, const BitstringDataset& data) {
  if (data.rows.empty()) throw invalid_argument("negative_log_likelihood: empty dataset");
  if (data.n_vars != model.n_vars())
    throw invalid_argument("negative_log_likelihood: dataset and model dimensions differ");
  return weighted_nll(model, dedup_rows(data));
}

TwoSiteTensor merge_bond(const MpsModel& model, int bond) {
  if (bond < 0 || bond >= model.n_vars() - 1)
    throw invalid_argument("merge_bond: bond out of range");
  TwoSiteTensor m;
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 2; ++t) m[s][t] = model.sites[bond][s] * model.sites[bond + 1][t];
  return m;
}

TwoSiteTensor nll_gradient(const MpsModel& model, const BitstringDataset& data, int bond) {
  if (bond < 0 || bond >= model.n_vars() - 1)
    throw invalid_argument("nll_gradient: bond out of range");
  if (model.canonical_center != bond && model.canonical_center != bond + 1)
    throw invalid_argument("nll_gradient: canonical center must sit on the merged bond");
  if (data.rows.empty()) throw invalid_argument("nll_gradient: empty dataset");

  const auto dedup = dedup_rows(data);
  BondRows rows;
  rows.total_weight = dedup.total_weight;
  const std::size_t n_rows = dedup.rows.size();
  rows.phys_left.reserve(n_rows);
  rows.phys_right.reserve(n_rows);
  rows.lvec.reserve(n_rows);
  rows.rvec.reserve(n_rows);
  rows.weight = dedup.weights;

  for (const auto& x : dedup.rows) {
    check_row(x, model.n_vars(), "nll_gradient");
    Eigen::RowVectorXd l = Eigen::RowVectorXd::Ones(1);
    for (int i = 0; i < bond; ++i) {
      l = l * model.sites[i][x[i]];
      const double n = l.norm();
      if (n > 0.0) l /= n;
    }
    Eigen::VectorXd r = Eigen::VectorXd::Ones(1);
    for (int i = model.n_vars() - 1; i > bond + 1; --i) {
      r = model.sites[i][x[i]] * r;
      const double n = r.norm();
      if (n > 0.0) r /= n;
    }
    rows.phys_left.push_back(x[bond]);
    rows.phys_right.push_back(x[bond + 1]);
    rows.lvec.push_back(std::move(l));
    rows.rvec.push_back(std::move(r));
  }
  return bond_gradient(merge_bond(model, bond), rows);
}

void set_bond(MpsModel& model, int bond, const TwoSiteTensor& merged, int max_bond_dim,
              double svd_cutoff, bool move_right) {
  if (bond < 0 || bond >= model.n_vars() - 1)
    throw invalid_argument("set_bond: bond out of range");
  if (max_bond_dim < 1) throw invalid_argument("set_bond: max_bond_dim must be >= 1");

  auto split = split_two_site(merged, max_bond_dim, svd_cutoff, move_right);
  model.sites[bond] = std::move(split.left);
  model.sites[bond + 1] = std::move(split.right);
  model.bond_dims[bond + 1] = split.new_bond;

  const bool was_on_bond =
      model.canonical_center == bond || model.canonical_center == bond + 1;
  model.canonical_center = was_on_bond ? (move_right ? bond + 1 : bond) : -1;
}

TrainReport train(const MpsModel& model, const BitstringDataset& data, const TrainConfig& cfg) {
  if (data.rows.empty()) throw invalid_argument("train: empty dataset");
  if (data.n_vars != model.n_vars())
    throw invalid_argument("train: dataset and model dimensions differ");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate))
    throw invalid_argument("train: learning_rate must be positive and finite");
  if (cfg.max_bond_dim < 1) throw invalid_argument("train: max_bond_dim must be >= 1");
  if (cfg.svd_cutoff < 0.0 || cfg.svd_cutoff >= 1.0)
    throw invalid_argument("train: svd_cutoff must be in [0, 1)");
  if (cfg.n_sweeps < 1) throw invalid_argument("train: n_sweeps must be >= 1");
  if (cfg.grad_steps_per_bond < 1) throw invalid_argument("train: grad_steps_per_bond must be >= 1");

  TrainReport report;
  const auto dedup = dedup_rows(data);
  const int n = model.n_vars();

  if (n == 1) {
    // No bonds to sweep; the single-site maximum-likelihood state is exact.
    double c1 = 0.0;
    for (std::size_t u = 0; u < dedup.rows.size(); ++u)
      if (dedup.rows[u][0] == 1) c1 += dedup.weights[u];
    MpsModel fitted = model;
    fitted.sites[0][0] = Eigen::MatrixXd::Constant(1, 1, std::sqrt(1.0 - c1 / dedup.total_weight));
    fitted.sites[0][1] = Eigen::MatrixXd::Constant(1, 1, std::sqrt(c1 / dedup.total_weight));
    fitted.canonical_center = 0;
    report.nll_per_sweep.push_back(weighted_nll(model, dedup));
    report.model = std::move(fitted);
    report.nll_per_sweep.push_back(weighted_nll(report.model, dedup));
    return report;
  }

  MpsModel work = model;
  canonicalize(work, 0);
  report.nll_per_sweep.push_back(weighted_nll(work, dedup));

  const std::size_t n_rows = dedup.rows.size();
  // Environment caches per unique row: lenv[i] covers sites < i, renv[i]
  // covers sites >= i. Entries ahead of the moving center stay valid within
  // a pass because those tensors are untouched until the center reaches them.
  std::vector<std::vector<Eigen::RowVectorXd>> lenv(n + 1);
  std::vector<std::vector<Eigen::VectorXd>> renv(n + 1);
  lenv[0].assign(n_rows, Eigen::RowVectorXd::Ones(1));
  renv[n].assign(n_rows, Eigen::VectorXd::Ones(1));

  bool warned_dead_row = false;
  auto note_dead_row = [&](std::size_t u) {
    if (!warned_dead_row) {
      warn(&report.warnings, "train-zero-amplitude",
           "row lost support during training: " + to_string(dedup.rows[u]));
      warned_dead_row = true;
    }
  };

  BondRows rows;
  rows.weight = dedup.weights;
  rows.total_weight = dedup.total_weight;
  rows.phys_left.resize(n_rows);
  rows.phys_right.resize(n_rows);
  rows.lvec.resize(n_rows);
  rows.rvec.resize(n_rows);

  // Local NLL as a function of the merged tensor, with the environments
  // fixed; scale-invariant, so trial tensors need no renormalization.
  auto local_nll = [&rows](const TwoSiteTensor& m) {
    double acc = 0.0;
    for (std::size_t u = 0; u < rows.weight.size(); ++u) {
      const double psi = rows.lvec[u] * m[rows.phys_left[u]][rows.phys_right[u]] * rows.rvec[u];
      acc += rows.weight[u] * std::log(std::max(std::fabs(psi), 1e-290));
    }
    return -2.0 * acc / rows.total_weight + std::log(two_site_norm_sq(m));
  };

  auto update_bond = [&](int bond, bool move_right) {
    TwoSiteTensor merged = merge_bond(work, bond);
    for (std::size_t u = 0; u < n_rows; ++u) {
      rows.phys_left[u] = dedup.rows[u][bond];
      rows.phys_right[u] = dedup.rows[u][bond + 1];
      rows.lvec[u] = lenv[bond][u];
      rows.rvec[u] = renv[bond + 2][u];
    }
    for (int step = 0; step < cfg.grad_steps_per_bond; ++step) {
      const double f0 = local_nll(merged);
      const TwoSiteTensor grad = bond_gradient(merged, rows);
      // Backtracking keeps every step a descent step; the barrier near
      // psi = 0 makes a fixed rate overshoot on wide distributions.
      double rate = cfg.learning_rate;
      bool accepted = false;
      for (int attempt = 0; attempt < 10; ++attempt) {
        TwoSiteTensor trial = merged;
        for (int s = 0; s < 2; ++s)
          for (int t = 0; t < 2; ++t) trial[s][t] -= rate * grad[s][t];
        const double norm = std::sqrt(two_site_norm_sq(trial));
        if (norm > 0.0 && std::isfinite(norm)) {
          for (int s = 0; s < 2; ++s)
            for (int t = 0; t < 2; ++t) trial[s][t] /= norm;
          if (local_nll(trial) <= f0 + 1e-12) {
            merged = std::move(trial);
            accepted = true;
            break;
          }
        }
        rate /= 2.0;
      }
      if (!accepted) break;  // flat to numerical precision at this bond
    }
    set_bond(work, bond, merged, cfg.max_bond_dim, cfg.svd_cutoff, move_right);
    // Truncation sheds weight; restore Z = 1 at the new center.
    const int c = work.canonical_center;
    const double norm = std::sqrt(center_norm_sq(work, c));
    work.sites[c][0] /= norm;
    work.sites[c][1] /= norm;
  };

  for (int sweep = 0; sweep < cfg.n_sweeps; ++sweep) {
    // Right environments for the left-to-right pass.
    for (int i = n - 1; i >= 2; --i) {
      renv[i].resize(n_rows);
      for (std::size_t u = 0; u < n_rows; ++u) {
        Eigen::VectorXd r = work.sites[i][dedup.rows[u][i]] * renv[i + 1][u];
        const double nr = r.norm();
        if (nr > 0.0) r /= nr; else note_dead_row(u);
        renv[i][u] = std::move(r);
      }
    }
    for (int bond = 0; bond <= n - 2; ++bond) {
      update_bond(bond, true);
      lenv[bond + 1].resize(n_rows);
      for (std::size_t u = 0; u < n_rows; ++u) {
        Eigen::RowVectorXd l = lenv[bond][u] * work.sites[bond][dedup.rows[u][bond]];
        const double nl = l.norm();
        if (nl > 0.0) l /= nl; else note_dead_row(u);
        lenv[bond + 1][u] = std::move(l);
      }
    }
    for (int bond = n - 2; bond >= 0; --bond) {
      update_bond(bond, false);
      renv[bond + 1].resize(n_rows);
      for (std::size_t u = 0; u < n_rows; ++u) {
        Eigen::VectorXd r = work.sites[bond + 1][dedup.rows[u][bond + 1]] * renv[bond + 2][u];
        const double nr = r.norm();
        if (nr > 0.0) r /= nr; else note_dead_row(u);
        renv[bond + 1][u] = std::move(r);
      }
    }
    report.nll_per_sweep.push_back(weighted_nll(work, dedup));
  }

  if (report.nll_per_sweep.back() > report.nll_per_sweep.front() + 1e-6) {
    warn(&report.warnings, "train-nll-increased",
         "training increased the NLL from " + std::to_string(report.nll_per_sweep.front()) +
             " to " + std::to_string(report.nll_per_sweep.back()));
  }
  report.model = std::move(work);
  return report;
}

std::vector<Bitstring> sample(const MpsModel& model, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw invalid_argument("sample: n_samples must be >= 1");

  const MpsModel* m = &model;
  MpsModel owned;
  if (model.canonical_center != 0) {
    owned = model;
    canonicalize(owned, 0);
    const double norm = std::sqrt(center_norm_sq(owned, 0));
    owned.sites[0][0] /= norm;
    owned.sites[0][1] /= norm;
    m = &owned;
  }

  const int n = m->n_vars();
  Rng rng(seed);
  std::vector<Bitstring> out(static_cast<std::size_t>(n_samples));
  for (auto& row : out) {
    row.resize(static_cast<std::size_t>(n));
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Ones(1);
    for (int i = 0; i < n; ++i) {
      const Eigen::RowVectorXd v0 = v * m->sites[i][0];
      const Eigen::RowVectorXd v1 = v * m->sites[i][1];
      // Clamp tiny negatives from floating point before renormalizing.
      const double w0 = std::max(v0.squaredNorm(), 0.0);
      const double w1 = std::max(v1.squaredNorm(), 0.0);
      const double total = w0 + w1;
      if (total <= 0.0)
        throw numerical_failure("sample: conditional distribution vanished", total);
      const int s = rng.next_double() < w0 / total ? 0 : 1;
      row[i] = static_cast<std::uint8_t>(s);
      v = (s == 0 ? v0 : v1);
      v /= v.norm();
    }
  }
  return out;
}

// --- serialization ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'E', 'O', 'P', 'T', 'M', 'P', 'S'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw io_error("mps load: truncated file");
  return v;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"max_bond_dim", cfg.max_bond_dim}, {"svd_cutoff", cfg.svd_cutoff},
          {"learning_rate", cfg.learning_rate}, {"n_sweeps", cfg.n_sweeps},
          {"grad_steps_per_bond", cfg.grad_steps_per_bond}, {"rng_seed", cfg.rng_seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.max_bond_dim = j.at("max_bond_dim").get<int>();
  cfg.svd_cutoff = j.at("svd_cutoff").get<double>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.n_sweeps = j.at("n_sweeps").get<int>();
  cfg.grad_steps_per_bond = j.at("grad_steps_per_bond").get<int>();
  cfg.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace

void save_mps(const MpsBundle& bundle, const std::string& path, MpsFileFormat format) {
  validate_mps(bundle.model);
  const auto& m = bundle.model;
  const int n = m.n_vars();

  if (format == MpsFileFormat::binary) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("mps save: cannot open " + path);
    os.write(kMagic, sizeof(kMagic));
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::int32_t>(n));
    write_pod(os, static_cast<std::int32_t>(m.canonical_center));
    for (int b : m.bond_dims) write_pod(os, static_cast<std::int32_t>(b));
    for (int i = 0; i < n; ++i) {
      for (int s = 0; s < 2; ++s) {
        const auto& t = m.sites[i][s];
        for (Eigen::Index r = 0; r < t.rows(); ++r)
          for (Eigen::Index c = 0; c < t.cols(); ++c) write_pod(os, t(r, c));
      }
    }
    const auto& cfg = bundle.train_config;
    write_pod(os, static_cast<std::int32_t>(cfg.max_bond_dim));
    write_pod(os, cfg.svd_cutoff);
    write_pod(os, cfg.learning_rate);
    write_pod(os, static_cast<std::int32_t>(cfg.n_sweeps));
    write_pod(os, static_cast<std::int32_t>(cfg.grad_steps_per_bond));
    write_pod(os, cfg.rng_seed);
    if (!os) throw io_error("mps save: write failed for " + path);
    return;
  }

  nlohmann::json j;
  j["format"] = "geopt-mps";
  j["version"] = kVersion;
  j["n_vars"] = n;
  j["canonical_center"] = m.canonical_center;
  j["bond_dims"] = m.bond_dims;
  nlohmann::json sites = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    nlohmann::json site = nlohmann::json::array();
    for (int s = 0; s < 2; ++s) {
      const auto& t = m.sites[i][s];
      std::vector<double> flat;
      flat.reserve(static_cast<std::size_t>(t.size()));
      for (Eigen::Index r = 0; r < t.rows(); ++r)
        for (Eigen::Index c = 0; c < t.cols(); ++c) flat.push_back(t(r, c));
      site.push_back(flat);
    }
    sites.push_back(site);
  }
  j["sites"] = sites;
  j["train_config"] = train_config_to_json(bundle.train_config);

  std::ofstream os(path);
  if (!os) throw io_error("mps save: cannot open " + path);
  os << j.dump(2) << '\n';
  if (!os) throw io_error("mps save: write failed for " + path);
}

MpsBundle load_mps(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw io_error("mps load: cannot open " + path);
  char head[8] = {};
  probe.read(head, sizeof(head));
  const bool binary = probe && std::memcmp(head, kMagic, sizeof(kMagic)) == 0;
  probe.close();

  MpsBundle bundle;
  if (binary) {
    std::ifstream is(path, std::ios::binary);
    is.seekg(sizeof(kMagic));
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kVersion) throw io_error("mps load: unsupported version");
    const int n = read_pod<std::int32_t>(is);
    if (n < 1 || n > 1'000'000) throw io_error("mps load: implausible n_vars");
    auto& m = bundle.model;
    m.canonical_center = read_pod<std::int32_t>(is);
    m.bond_dims.resize(static_cast<std::size_t>(n) + 1);
    for (auto& b : m.bond_dims) b = read_pod<std::int32_t>(is);
    m.sites.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int s = 0; s < 2; ++s) {
        Eigen::MatrixXd t(m.bond_dims[i], m.bond_dims[i + 1]);
        for (Eigen::Index r = 0; r < t.rows(); ++r)
          for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = read_pod<double>(is);
        m.sites[i][s] = std::move(t);
      }
    }
    auto& cfg = bundle.train_config;
    cfg.max_bond_dim = read_pod<std::int32_t>(is);
    cfg.svd_cutoff = read_pod<double>(is);
    cfg.learning_rate = read_pod<double>(is);
    cfg.n_sweeps = read_pod<std::int32_t>(is);
    cfg.grad_steps_per_bond = read_pod<std::int32_t>(is);
    cfg.rng_seed = read_pod<std::uint64_t>(is);
  } else {
    std::ifstream is(path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw io_error("mps load: not a valid container: " + std::string(e.what()));
    }
    if (j.value("format", "") != "geopt-mps") throw io_error("mps load: unknown format tag");
    if (j.at("version").get<std::uint32_t>() != kVersion)
      throw io_error("mps load: unsupported version");
    const int n = j.at("n_vars").get<int>();
    auto& m = bundle.model;
    m.canonical_center = j.at("canonical_center").get<int>();
    m.bond_dims = j.at("bond_dims").get<std::vector<int>>();
    m.sites.resize(static_cast<std::size_t>(n));
    const auto& sites = j.at("sites");
    for (int i = 0; i < n; ++i) {
      for (int s = 0; s < 2; ++s) {
        const auto flat = sites.at(i).at(s).get<std::vector<double>>();
        Eigen::MatrixXd t(m.bond_dims[i], m.bond_dims[i + 1]);
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < t.rows(); ++r)
          for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = flat.at(k++);
        m.sites[i][s] = std::move(t);
      }
    }
    bundle.train_config = train_config_from_json(j.at("train_config"));
  }
  validate_mps(bundle.model);
  return bundle;
}

}  // namespace geopt
