#pragma once

// Single-area online feedback optimization controllers.
//
// Inputs u are laid out as [p_0, q_0, p_1, q_1, ...] per controllable
// generator (see InputLayout). Operating cost
//
//   phi(u, y) = sum_k c_k (p_avail_k - p_k)^2 + sum_k cq_k q_k^2 + loss_weight * slack_p
//
// and the squared-hinge penalty p(y) = rho * sum_j max(0, (C y - d)_j)^2 form J = phi + p.

#include <vector>

#include "gridloop/plant.hpp"
#include "gridloop/qp.hpp"

namespace gridloop {

struct CostModel {
    Vector curtail_weights;  // per controllable generator, currency / p.u.^2
    Vector q_weights;        // per controllable generator, currency / p.u.^2
    Vector p_available;      // per controllable generator, p.u.
    double loss_weight = 0.0;

    std::size_t n_units() const { return static_cast<std::size_t>(curtail_weights.size()); }
    void validate() const;

    /// Monetary curtailment part only.
    double curtailment_cost(const Vector& u) const;
    double value(const Vector& u, double slack_p) const;
};

struct PenaltyModel {
    double rho = 1e3;
    Matrix C;
    Vector d;

    double value(const Vector& y) const;
    Vector gradient(const Vector& y) const;
    /// Largest (C y - d)_j, or -inf when there are no rows.
    double max_violation(const Vector& y) const;
};

struct CostGradients {
    Vector du;           // grad_u J (explicit dependence only)
    Vector dy;           // grad_y J
    double dslack = 0.0; // dJ / d slack_p
};

CostGradients cost_gradients(const CostModel& cost, const PenaltyModel& pen, const Vector& u, const Vector& y);

/// grad_u J + S' grad_y J + dslack * (d slack / du)'.
Vector reduced_gradient(const CostGradients& g, const Matrix& dy_du, const Eigen::RowVectorXd& dslack_du);

enum class ControllerMode { PenaltyGradient, ProjectedDescent, PrimalDual };

std::string_view to_string(ControllerMode mode);
ControllerMode controller_mode_from_string(std::string_view s);

struct ControllerConfig {
    double alpha = 1e-3;
    double beta = 1e-3;
    ControllerMode mode = ControllerMode::ProjectedDescent;
    Matrix A;  // input set  A u <= b
    Vector b;
    PenaltyModel penalty;  // also carries the output set C y <= d
    CostModel cost;

    void validate() const;
};

struct DualState {
    Vector lambda;
};

/// u+ = proj_U[u - alpha (grad_u J + S' grad_y J)].
Vector penalty_gradient_step(const ControllerConfig& cfg, const Vector& u, const Measurement& m,
                             const Sensitivity& s);

struct DescentStep {
    Vector u_next;
    Vector sigma;
    QpSolution qp;
    bool relaxed = false;  // output rows needed slack to make the subproblem feasible
};

/// u+ = u + alpha * sigma, sigma from the linearized projection QP.
DescentStep projected_descent_step(const ControllerConfig& cfg, const Vector& u, const Measurement& m,
                                   const Sensitivity& s);

struct PrimalDualStep {
    Vector u_next;
    DualState dual;
};

PrimalDualStep primal_dual_step(const ControllerConfig& cfg, const Vector& u, const Measurement& m,
                                const Sensitivity& s, const DualState& dual);

// ---------------------------------------------------------------------------
// Constraint builders for grid plants

struct LinearConstraints {
    Matrix A;
    Vector b;
};

/// Box rows per unit: p <= p_available, -p <= -p_min, q <= q_max, -q <= -q_min.
LinearConstraints input_box(const GridCase& grid, const InputLayout& layout, const Vector& p_available);

/// Branch current limits (rows only for limited, in-service branches) and
/// bus voltage bounds. `current_scale` multiplies every current limit.
LinearConstraints output_limits(const GridCase& grid, double current_scale = 1.0);

/// Cost model from generator data of the units in `layout`.
CostModel cost_from_case(const GridCase& grid, const InputLayout& layout, double loss_weight = 0.0);

}  // namespace gridloop
