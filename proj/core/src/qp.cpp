#include "geopt/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "geopt/errors.hpp"

namespace geopt::qp {

namespace {

enum class VarStatus { free_var, at_lower, at_upper };

// Ridge added to the reduced Hessian so rank-deficient covariance blocks
// stay solvable; it perturbs the optimum by O(1e-12) on unit-scale weights.
constexpr double kRidge = 1e-12;

struct Workspace {
  std::vector<int> free_idx;
  Eigen::MatrixXd kkt;
  Eigen::VectorXd rhs;
};

}  // namespace

double projected_gradient_norm(const Problem& p, const Eigen::VectorXd& x, double active_tol) {
  const Eigen::Index n = p.Q.rows();
  Eigen::VectorXd g = p.Q * x + p.c;

  std::vector<Eigen::Index> active_bounds;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x(i) - p.lower(i) <= active_tol || p.upper(i) - x(i) <= active_tol)
      active_bounds.push_back(i);
  }
  const Eigen::Index m = p.A.rows() + static_cast<Eigen::Index>(active_bounds.size());
  if (m == 0) return g.norm();

  Eigen::MatrixXd act(m, n);
  act.topRows(p.A.rows()) = p.A;
  for (std::size_t k = 0; k < active_bounds.size(); ++k) {
    act.row(p.A.rows() + static_cast<Eigen::Index>(k)).setZero();
    act(p.A.rows() + static_cast<Eigen::Index>(k), active_bounds[k]) = 1.0;
  }
  // g_proj = g - act^T lsq(act act^T, act g)
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(act * act.transpose());
  Eigen::VectorXd mult = cod.solve(act * g);
  return (g - act.transpose() * mult).norm();
}

Solution solve(const Problem& p, const Eigen::VectorXd& x0, int max_iterations) {
  const Eigen::Index n = p.Q.rows();
  if (p.Q.cols() != n || p.c.size() != n || p.lower.size() != n || p.upper.size() != n)
    throw invalid_argument("qp: inconsistent problem dimensions");
  if (p.A.rows() > 0 && p.A.cols() != n) throw invalid_argument("qp: equality row width mismatch");
  if (x0.size() != n) throw invalid_argument("qp: x0 dimension mismatch");
  if (max_iterations <= 0) max_iterations = 100 * static_cast<int>(n);

  const Eigen::Index m = p.A.rows();
  const double bound_tol = 1e-12;

  Eigen::VectorXd x = x0;
  std::vector<VarStatus> status(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i) = std::clamp(x(i), p.lower(i), p.upper(i));
    if (x(i) - p.lower(i) <= bound_tol)
      status[i] = VarStatus::at_lower;
    else if (p.upper(i) - x(i) <= bound_tol)
      status[i] = VarStatus::at_upper;
    else
      status[i] = VarStatus::free_var;
  }

  int it = 0;
  for (; it < max_iterations; ++it) {
    std::vector<Eigen::Index> free_idx;
    for (Eigen::Index i = 0; i < n; ++i)
      if (status[i] == VarStatus::free_var) free_idx.push_back(i);
    const Eigen::Index nf = static_cast<Eigen::Index>(free_idx.size());

    // Equality-constrained subproblem on the free variables via the
    // bordered KKT system; COD tolerates dependent equality rows.
    Eigen::VectorXd xf_target(nf);
    if (nf > 0) {
      Eigen::VectorXd fixed_part = Eigen::VectorXd::Zero(n);
      for (Eigen::Index i = 0; i < n; ++i)
        if (status[i] != VarStatus::free_var) fixed_part(i) = x(i);

      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + m, nf + m);
      Eigen::VectorXd rhs(nf + m);
      for (Eigen::Index a = 0; a < nf; ++a) {
        for (Eigen::Index bcol = 0; bcol < nf; ++bcol)
          kkt(a, bcol) = p.Q(free_idx[a], free_idx[bcol]);
        kkt(a, a) += kRidge;
        double d = p.c(free_idx[a]);
        for (Eigen::Index i = 0; i < n; ++i)
          if (status[i] != VarStatus::free_var) d += p.Q(free_idx[a], i) * x(i);
        rhs(a) = -d;
      }
      if (m > 0) {
        Eigen::VectorXd bres = p.b - p.A * fixed_part;
        for (Eigen::Index r = 0; r < m; ++r) {
          for (Eigen::Index a = 0; a < nf; ++a) {
            kkt(nf + r, a) = p.A(r, free_idx[a]);
            kkt(a, nf + r) = p.A(r, free_idx[a]);
          }
          rhs(nf + r) = bres(r);
        }
      }
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(kkt);
      Eigen::VectorXd sol = cod.solve(rhs);
      xf_target = sol.head(nf);
    }

    // Step toward the subproblem optimum, stopping at the first bound.
    double step_norm = 0.0;
    for (Eigen::Index a = 0; a < nf; ++a)
      step_norm = std::max(step_norm, std::fabs(xf_target(a) - x(free_idx[a])));

    if (step_norm > 1e-13 * (1.0 + x.lpNorm<Eigen::Infinity>())) {
      double alpha = 1.0;
      Eigen::Index blocking = -1;
      bool blocking_upper = false;
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = free_idx[a];
        const double d = xf_target(a) - x(i);
        if (d > 1e-15) {
          const double room = (p.upper(i) - x(i)) / d;
          if (room < alpha) { alpha = room; blocking = i; blocking_upper = true; }
        } else if (d < -1e-15) {
          const double room = (p.lower(i) - x(i)) / d;
          if (room < alpha) { alpha = room; blocking = i; blocking_upper = false; }
        }
      }
      alpha = std::max(alpha, 0.0);
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = free_idx[a];
        x(i) += alpha * (xf_target(a) - x(i));
      }
      if (blocking >= 0) {
        x(blocking) = blocking_upper ? p.upper(blocking) : p.lower(blocking);
        status[blocking] = blocking_upper ? VarStatus::at_upper : VarStatus::at_lower;
      }
      if (blocking >= 0 || alpha < 1.0) continue;
      // Full step taken: fall through to the multiplier check.
    }

    // At the subproblem optimum; test bound multipliers for release.
    Eigen::VectorXd g = p.Q * x + p.c;
    Eigen::VectorXd mult = Eigen::VectorXd::Zero(m);
    if (m > 0) {
      if (nf > 0) {
        Eigen::MatrixXd af(nf, m);
        Eigen::VectorXd gf(nf);
        for (Eigen::Index a = 0; a < nf; ++a) {
          af.row(a) = p.A.col(free_idx[a]).transpose();
          gf(a) = g(free_idx[a]);
        }
        mult = af.completeOrthogonalDecomposition().solve(gf);
      } else {
        mult = p.A.transpose().completeOrthogonalDecomposition().solve(g);
      }
    }

    const double mult_tol = 1e-10 * (1.0 + g.lpNorm<Eigen::Infinity>());
    Eigen::Index release = -1;
    double worst = mult_tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (status[i] == VarStatus::free_var) continue;
      if (p.upper(i) - p.lower(i) <= bound_tol) continue;  // pinned variable
      const double reduced = g(i) - p.A.col(i).dot(mult);
      const double violation = (status[i] == VarStatus::at_lower) ? -reduced : reduced;
      if (violation > worst) {
        worst = violation;
        release = i;
      }
    }
    if (release < 0) {
      Solution out;
      out.x = x;
      out.objective = 0.5 * x.dot(p.Q * x) + p.c.dot(x);
      out.iterations = it + 1;
      out.kkt_residual = projected_gradient_norm(p, x);
      return out;
    }
    status[release] = VarStatus::free_var;
  }

  throw numerical_failure("qp: active-set iteration cap reached",
                          projected_gradient_norm(p, x));
}

}  // namespace geopt::qp
