#pragma once

// Dense convex QP:  minimize 1/2 x'Hx + f'x  subject to  A x <= b.

#include <vector>

#include <Eigen/Dense>

namespace gridloop {

struct QpProblem {
    Eigen::MatrixXd H;
    Eigen::VectorXd f;
    Eigen::MatrixXd A_ineq;  // m x n, may have zero rows
    Eigen::VectorXd b_ineq;
};

struct QpSolution {
    Eigen::VectorXd x_opt;
    std::vector<std::size_t> active_set;  // ascending constraint indices
    Eigen::VectorXd multipliers;          // one per constraint, zero when inactive
    double kkt_residual = 0.0;
    int iterations = 0;
};

/// Dual active-set method (Goldfarb-Idnani). Violated constraints enter
/// lowest index first. A singular H is regularized with 1e-10 I.
/// Throws Infeasible or IterationLimit.
QpSolution solve_qp(const QpProblem& p, double tol = 1e-10);

/// Largest of stationarity, primal, dual and complementarity violations.
double kkt_residual(const QpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda);

/// Euclidean projection onto {z | A z <= b}. Pure box constraints are clamped
/// directly; anything else goes through solve_qp.
Eigen::VectorXd project_box_polytope(const Eigen::VectorXd& x, const Eigen::MatrixXd& A,
                                     const Eigen::VectorXd& b);

}  // namespace gridloop
