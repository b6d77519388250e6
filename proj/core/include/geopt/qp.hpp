#pragma once

#include <Eigen/Dense>

namespace geopt::qp {

/// minimize 1/2 x^T Q x + c^T x  subject to  A x = b,  lower <= x <= upper.
/// Q must be symmetric positive semidefinite.
struct Problem {
  Eigen::MatrixXd Q;
  Eigen::VectorXd c;
  Eigen::MatrixXd A;      // equality rows; may have zero rows
  Eigen::VectorXd b;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct Solution {
  Eigen::VectorXd x;
  double objective = 0.0;
  int iterations = 0;
  double kkt_residual = 0.0;
};

/// Primal active-set method over the bound constraints, with the equality
/// rows kept in every working set. `x0` must satisfy the bounds and be
/// (approximately) consistent with the equalities; the first subproblem
/// restores them exactly. Default iteration cap is 100 * dimension; on cap,
/// throws numerical_failure carrying the current KKT residual.
Solution solve(const Problem& p, const Eigen::VectorXd& x0, int max_iterations = 0);

/// Norm of the gradient projected onto the null space of the active
/// constraints (equality rows plus bounds within active_tol of x).
double projected_gradient_norm(const Problem& p, const Eigen::VectorXd& x,
                               double active_tol = 1e-8);

}  // namespace geopt::qp
