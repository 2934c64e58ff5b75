#include "gridloop/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "gridloop/error.hpp"

namespace gridloop {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kRegularization = 1e-10;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_shapes(const QpProblem& p) {
    const Index n = p.H.rows();
    if (p.H.cols() != n || p.f.size() != n)
        throw Error(ErrorCode::InvalidConfig, "QP: H must be n x n and f of length n");
    if (p.A_ineq.rows() != p.b_ineq.size() || (p.A_ineq.rows() > 0 && p.A_ineq.cols() != n))
        throw Error(ErrorCode::InvalidConfig, "QP: constraint shapes are inconsistent");
    if (!p.H.isApprox(p.H.transpose(), 1e-12) && (p.H - p.H.transpose()).norm() > 1e-12)
        throw Error(ErrorCode::InvalidConfig, "QP: H is not symmetric");
}

// Inverse of H, regularized when H is only semidefinite.
MatrixXd hessian_inverse(const MatrixXd& h) {
    const Index n = h.rows();
    if (n == 0) return {};
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(h, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = std::max(1.0, eig.eigenvalues().maxCoeff());
    if (lo < -1e-10 * hi) throw Error(ErrorCode::InvalidConfig, "QP: H is not positive semidefinite");
    MatrixXd reg = h;
    if (lo < 1e-12 * hi) reg.diagonal().array() += kRegularization;
    Eigen::LLT<MatrixXd> llt(reg);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::InvalidConfig, "QP: H is not positive definite");
    return llt.solve(MatrixXd::Identity(n, n));
}

}  // namespace

double kkt_residual(const QpProblem& p, const VectorXd& x, const VectorXd& lambda) {
    double r = 0.0;
    VectorXd grad = p.H * x + p.f;
    if (p.A_ineq.rows() > 0) grad += p.A_ineq.transpose() * lambda;
    if (grad.size()) r = grad.lpNorm<Eigen::Infinity>();
    for (Index i = 0; i < p.A_ineq.rows(); ++i) {
        const double s = p.A_ineq.row(i).dot(x) - p.b_ineq[i];
        r = std::max({r, s, -lambda[i], std::abs(lambda[i] * s)});
    }
    return r;
}

QpSolution solve_qp(const QpProblem& p, double tol) {
    check_shapes(p);
    const Index n = p.H.rows();
    const Index m = p.A_ineq.rows();
    const MatrixXd hinv = hessian_inverse(p.H);

    // Constraints are handled as n_i' x >= c_i with n_i = -A_i', c_i = -b_i.
    auto normal = [&](Index i) -> VectorXd { return -p.A_ineq.row(i).transpose(); };
    auto slack = [&](Index i, const VectorXd& x) { return p.b_ineq[i] - p.A_ineq.row(i).dot(x); };

    VectorXd x = n ? VectorXd(-hinv * p.f) : VectorXd();
    std::vector<Index> active;
    std::vector<double> dual;

    const int max_iter = static_cast<int>(10 * (n + m) + 100);
    int iter = 0;

    for (;;) {
        // Step 1: lowest-index violated constraint.
        Index viol = -1;
        for (Index i = 0; i < m; ++i) {
            if (std::find(active.begin(), active.end(), i) != active.end()) continue;
            if (slack(i, x) < -tol) {
                viol = i;
                break;
            }
        }
        if (viol < 0) break;

        const VectorXd np = normal(viol);
        double up = 0.0;

        // Step 2: move until viol is satisfied, dropping blocking constraints.
        for (;;) {
            if (++iter > max_iter)
                throw Error(ErrorCode::IterationLimit, fmt::format("QP: no convergence in {} steps", max_iter));

            const Index q = static_cast<Index>(active.size());
            VectorXd z, r;
            if (q > 0) {
                MatrixXd nmat(n, q);
                for (Index j = 0; j < q; ++j) nmat.col(j) = normal(active[static_cast<std::size_t>(j)]);
                const MatrixXd hn = hinv * nmat;
                const MatrixXd gram = nmat.transpose() * hn;
                r = gram.ldlt().solve(hn.transpose() * np);
                z = hinv * (np - nmat * r);
            } else {
                z = hinv * np;
                r = VectorXd();
            }

            double t1 = kInf;
            Index drop = -1;
            for (Index j = 0; j < q; ++j) {
                if (r[j] > 0.0) {
                    const double ratio = dual[static_cast<std::size_t>(j)] / r[j];
                    if (ratio < t1) {
                        t1 = ratio;
                        drop = j;
                    }
                }
            }

            const double curvature = z.dot(np);
            const double scale = np.dot(hinv * np);
            double t2 = kInf;
            if (curvature > 1e-12 * scale) t2 = -slack(viol, x) / curvature;

            if (t1 == kInf && t2 == kInf)
                throw Error(ErrorCode::Infeasible,
                            fmt::format("QP: constraint {} cannot be satisfied together with the active set", viol));

            if (t2 == kInf) {
                for (Index j = 0; j < q; ++j) dual[static_cast<std::size_t>(j)] -= t1 * r[j];
                up += t1;
                active.erase(active.begin() + drop);
                dual.erase(dual.begin() + drop);
                continue;
            }

            const double t = std::min(t1, t2);
            x += t * z;
            for (Index j = 0; j < q; ++j) dual[static_cast<std::size_t>(j)] -= t * r[j];
            up += t;

            if (t2 <= t1) {
                active.push_back(viol);
                dual.push_back(up);
                break;
            }
            active.erase(active.begin() + drop);
            dual.erase(dual.begin() + drop);
        }
    }

    QpSolution sol;
    sol.x_opt = x;
    sol.multipliers = VectorXd::Zero(m);
    for (std::size_t j = 0; j < active.size(); ++j) sol.multipliers[active[j]] = std::max(0.0, dual[j]);
    for (auto i : active) sol.active_set.push_back(static_cast<std::size_t>(i));
    std::sort(sol.active_set.begin(), sol.active_set.end());
    sol.kkt_residual = kkt_residual(p, x, sol.multipliers);
    sol.iterations = iter;
    return sol;
}

VectorXd project_box_polytope(const VectorXd& x, const MatrixXd& A, const VectorXd& b) {
    const Index n = x.size();
    const Index m = A.rows();

    // Fast path: every row has a single nonzero entry.
    VectorXd lo = VectorXd::Constant(n, -kInf);
    VectorXd hi = VectorXd::Constant(n, kInf);
    bool box = true;
    for (Index i = 0; i < m && box; ++i) {
        Index col = -1;
        for (Index j = 0; j < n; ++j) {
            if (A(i, j) != 0.0) {
                if (col >= 0) {
                    box = false;
                    break;
                }
                col = j;
            }
        }
        if (!box) break;
        if (col < 0) {
            if (b[i] < 0.0) throw Error(ErrorCode::Infeasible, "projection: empty polytope");
            continue;
        }
        const double bound = b[i] / A(i, col);
        if (A(i, col) > 0.0) hi[col] = std::min(hi[col], bound);
        else lo[col] = std::max(lo[col], bound);
    }
    if (box) {
        VectorXd out(n);
        for (Index j = 0; j < n; ++j) {
            if (lo[j] > hi[j]) throw Error(ErrorCode::Infeasible, "projection: empty box");
            out[j] = std::clamp(x[j], lo[j], hi[j]);
        }
        return out;
    }

    QpProblem p{MatrixXd::Identity(n, n), -x, A, b};
    return solve_qp(p, 1e-12).x_opt;
}

}  // namespace gridloop
