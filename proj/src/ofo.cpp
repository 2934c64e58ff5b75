#include "gridloop/ofo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "gridloop/error.hpp"

namespace gridloop {

using Eigen::Index;

// ---------------------------------------------------------------------------
// Costs

void CostModel::validate() const {
    if (q_weights.size() != curtail_weights.size() || p_available.size() != curtail_weights.size())
        throw Error(ErrorCode::InvalidConfig, "cost model vectors must have one entry per unit");
    if ((curtail_weights.array() < 0.0).any() || (q_weights.array() < 0.0).any() || loss_weight < 0.0)
        throw Error(ErrorCode::InvalidConfig, "cost weights must be nonnegative");
}

double CostModel::curtailment_cost(const Vector& u) const {
    double c = 0.0;
    for (Index k = 0; k < curtail_weights.size(); ++k) {
        const double gap = p_available[k] - u[2 * k];
        c += curtail_weights[k] * gap * gap;
    }
    return c;
}

double CostModel::value(const Vector& u, double slack_p) const {
    double c = curtailment_cost(u);
    for (Index k = 0; k < q_weights.size(); ++k) c += q_weights[k] * u[2 * k + 1] * u[2 * k + 1];
    return c + loss_weight * slack_p;
}

double PenaltyModel::value(const Vector& y) const {
    if (C.rows() == 0) return 0.0;
    const Vector excess = (C * y - d).cwiseMax(0.0);
    return rho * excess.squaredNorm();
}

Vector PenaltyModel::gradient(const Vector& y) const {
    if (C.rows() == 0) return Vector::Zero(y.size());
    const Vector excess = (C * y - d).cwiseMax(0.0);
    return 2.0 * rho * (C.transpose() * excess);
}

double PenaltyModel::max_violation(const Vector& y) const {
    if (C.rows() == 0) return -std::numeric_limits<double>::infinity();
    return (C * y - d).maxCoeff();
}

CostGradients cost_gradients(const CostModel& cost, const PenaltyModel& pen, const Vector& u, const Vector& y) {
    CostGradients g;
    g.du = Vector::Zero(u.size());
    for (Index k = 0; k < cost.curtail_weights.size(); ++k) {
        g.du[2 * k] = -2.0 * cost.curtail_weights[k] * (cost.p_available[k] - u[2 * k]);
        g.du[2 * k + 1] = 2.0 * cost.q_weights[k] * u[2 * k + 1];
    }
    g.dy = pen.gradient(y);
    g.dslack = cost.loss_weight;
    return g;
}

Vector reduced_gradient(const CostGradients& g, const Matrix& dy_du, const Eigen::RowVectorXd& dslack_du) {
    Vector out = g.du + dy_du.transpose() * g.dy;
    if (g.dslack != 0.0) out += g.dslack * dslack_du.transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Controllers

std::string_view to_string(ControllerMode mode) {
    switch (mode) {
        case ControllerMode::PenaltyGradient: return "PenaltyGradient";
        case ControllerMode::ProjectedDescent: return "ProjectedDescent";
        case ControllerMode::PrimalDual: return "PrimalDual";
    }
    return "ProjectedDescent";
}

ControllerMode controller_mode_from_string(std::string_view s) {
    if (s == "PenaltyGradient") return ControllerMode::PenaltyGradient;
    if (s == "ProjectedDescent") return ControllerMode::ProjectedDescent;
    if (s == "PrimalDual") return ControllerMode::PrimalDual;
    throw Error(ErrorCode::InvalidConfig, fmt::format("unknown controller mode '{}'", s));
}

void ControllerConfig::validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw Error(ErrorCode::InvalidConfig, "alpha and beta must be positive");
    if (!(penalty.rho > 0.0)) throw Error(ErrorCode::InvalidConfig, "rho must be positive");
    if (A.rows() != b.size() || penalty.C.rows() != penalty.d.size())
        throw Error(ErrorCode::InvalidConfig, "constraint matrices and vectors disagree in size");
    cost.validate();
}

Vector penalty_gradient_step(const ControllerConfig& cfg, const Vector& u, const Measurement& m,
                             const Sensitivity& s) {
    const auto g = reduced_gradient(cost_gradients(cfg.cost, cfg.penalty, u, m.y), s.dy_du, s.dslack_du);
    return project_box_polytope(u - cfg.alpha * g, cfg.A, cfg.b);
}

DescentStep projected_descent_step(const ControllerConfig& cfg, const Vector& u, const Measurement& m,
                                   const Sensitivity& s) {
    // Gradient of phi only; the output set is kept as a hard (linearized) constraint.
    PenaltyModel no_penalty;
    no_penalty.rho = cfg.penalty.rho;
    const auto grads = cost_gradients(cfg.cost, no_penalty, u, m.y);
    const Vector g = reduced_gradient(grads, s.dy_du, s.dslack_du);

    const Index n = u.size();
    const Index mi = cfg.A.rows();
    const Index mo = cfg.penalty.C.rows();
    const Matrix cs = mo ? Matrix(cfg.penalty.C * s.dy_du) : Matrix(0, n);
    const Vector out_rhs = mo ? Vector(cfg.penalty.d - cfg.penalty.C * m.y) : Vector(0);
    const Vector in_rhs = mi ? Vector(cfg.b - cfg.A * u) : Vector(0);

    DescentStep step;
    QpProblem qp;
    qp.H = Matrix::Identity(n, n);
    qp.f = g;
    qp.A_ineq.resize(mi + mo, n);
    qp.b_ineq.resize(mi + mo);
    if (mi) {
        qp.A_ineq.topRows(mi) = cfg.A;
        qp.b_ineq.head(mi) = in_rhs;
    }
    if (mo) {
        qp.A_ineq.bottomRows(mo) = cs;
        qp.b_ineq.tail(mo) = out_rhs;
    }

    try {
        step.qp = solve_qp(qp);
        step.sigma = step.qp.x_opt;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::Infeasible) throw;
        // Soften output rows: C S delta - s <= d - C y, s >= 0, cost 1/2 * 1e6 * |s|^2.
        constexpr double kSlackWeight = 1e6;
        QpProblem relaxed;
        relaxed.H = Matrix::Identity(n + mo, n + mo);
        relaxed.H.bottomRightCorner(mo, mo) *= kSlackWeight;
        relaxed.f = Vector::Zero(n + mo);
        relaxed.f.head(n) = g;
        relaxed.A_ineq = Matrix::Zero(mi + 2 * mo, n + mo);
        relaxed.b_ineq = Vector::Zero(mi + 2 * mo);
        if (mi) {
            relaxed.A_ineq.topLeftCorner(mi, n) = cfg.A;
            relaxed.b_ineq.head(mi) = in_rhs;
        }
        relaxed.A_ineq.block(mi, 0, mo, n) = cs;
        relaxed.A_ineq.block(mi, n, mo, mo) = -Matrix::Identity(mo, mo);
        relaxed.b_ineq.segment(mi, mo) = out_rhs;
        relaxed.A_ineq.block(mi + mo, n, mo, mo) = -Matrix::Identity(mo, mo);
        step.qp = solve_qp(relaxed);
        step.sigma = step.qp.x_opt.head(n);
        step.relaxed = true;
    }

    step.u_next = u + cfg.alpha * step.sigma;
    // No-op whenever u is already in U and alpha <= 1.
    if (mi) step.u_next = project_box_polytope(step.u_next, cfg.A, cfg.b);
    return step;
}

PrimalDualStep primal_dual_step(const ControllerConfig& cfg, const Vector& u, const Measurement& m,
                                const Sensitivity& s, const DualState& dual) {
    const Index mo = cfg.penalty.C.rows();
    const Vector lambda = dual.lambda.size() == mo ? dual.lambda : Vector(Vector::Zero(mo));

    PenaltyModel no_penalty;
    auto grads = cost_gradients(cfg.cost, no_penalty, u, m.y);
    if (mo) grads.dy += cfg.penalty.C.transpose() * lambda;
    const Vector g = reduced_gradient(grads, s.dy_du, s.dslack_du);

    PrimalDualStep out;
    out.u_next = project_box_polytope(u - cfg.alpha * g, cfg.A, cfg.b);
    out.dual.lambda = mo ? Vector((lambda + cfg.beta * (cfg.penalty.C * m.y - cfg.penalty.d)).cwiseMax(0.0))
                         : Vector(0);
    return out;
}

// ---------------------------------------------------------------------------
// Grid constraint builders

LinearConstraints input_box(const GridCase& grid, const InputLayout& layout, const Vector& p_available) {
    const auto n = static_cast<Index>(layout.dim());
    const auto units = static_cast<Index>(layout.generators.size());
    LinearConstraints lc;
    lc.A = Matrix::Zero(4 * units, n);
    lc.b = Vector::Zero(4 * units);
    for (Index k = 0; k < units; ++k) {
        const auto& g = grid.generators[layout.generators[static_cast<std::size_t>(k)]];
        const Index p = 2 * k, q = 2 * k + 1;
        const double p_hi = std::max(g.p_min, p_available[k]);
        lc.A(4 * k + 0, p) = 1.0;
        lc.b[4 * k + 0] = p_hi;
        lc.A(4 * k + 1, p) = -1.0;
        lc.b[4 * k + 1] = -g.p_min;
        lc.A(4 * k + 2, q) = 1.0;
        lc.b[4 * k + 2] = g.q_max;
        lc.A(4 * k + 3, q) = -1.0;
        lc.b[4 * k + 3] = -g.q_min;
    }
    return lc;
}

LinearConstraints output_limits(const GridCase& grid, double current_scale) {
    const auto nb = static_cast<Index>(grid.n_bus());
    const auto ny = nb + static_cast<Index>(grid.n_branch());
    std::vector<std::pair<Index, double>> upper;  // (output index, bound) for +y <= bound
    std::vector<std::pair<Index, double>> lower;  // -y <= -bound
    for (std::size_t k = 0; k < grid.n_branch(); ++k) {
        const auto& br = grid.branches[k];
        if (br.in_service && br.current_limit > 0.0)
            upper.emplace_back(nb + static_cast<Index>(k), br.current_limit * current_scale);
    }
    for (Index i = 0; i < nb; ++i) {
        upper.emplace_back(i, grid.buses[static_cast<std::size_t>(i)].v_max);
        lower.emplace_back(i, grid.buses[static_cast<std::size_t>(i)].v_min);
    }
    LinearConstraints lc;
    const auto rows = static_cast<Index>(upper.size() + lower.size());
    lc.A = Matrix::Zero(rows, ny);
    lc.b = Vector::Zero(rows);
    Index r = 0;
    for (const auto& [idx, bound] : upper) {
        lc.A(r, idx) = 1.0;
        lc.b[r++] = bound;
    }
    for (const auto& [idx, bound] : lower) {
        lc.A(r, idx) = -1.0;
        lc.b[r++] = -bound;
    }
    return lc;
}

CostModel cost_from_case(const GridCase& grid, const InputLayout& layout, double loss_weight) {
    const auto units = static_cast<Index>(layout.generators.size());
    CostModel c;
    c.curtail_weights.resize(units);
    c.q_weights.resize(units);
    c.p_available.resize(units);
    for (Index k = 0; k < units; ++k) {
        const auto& g = grid.generators[layout.generators[static_cast<std::size_t>(k)]];
        c.curtail_weights[k] = g.cost_curtail;
        c.q_weights[k] = g.cost_q;
        c.p_available[k] = g.p_available;
    }
    c.loss_weight = loss_weight;
    return c;
}

}  // namespace gridloop
