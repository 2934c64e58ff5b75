#pragma once

// AC power flow plant y = h(u; w): Newton-Raphson solve, output extraction,
// and the input-output sensitivity obtained from the implicit function theorem.

#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gridloop/netmodel.hpp"

namespace gridloop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct VoltageState {
    Vector v_mag;
    Vector v_ang;
};

/// Ordering of controllable generators inside u: sorted by (area, generator
/// index); each generator contributes [p_inject, q_inject] in p.u.
struct InputLayout {
    std::vector<std::size_t> generators;
    std::vector<int> generator_area;  // parallel to `generators`
    int n_areas = 1;

    static InputLayout build(const GridCase& grid, const AreaPartition& partition);
    static InputLayout build(const GridCase& grid);

    std::size_t dim() const { return 2 * generators.size(); }
    std::size_t p_index(std::size_t k) const { return 2 * k; }
    std::size_t q_index(std::size_t k) const { return 2 * k + 1; }

    /// Contiguous [offset, offset+size) slice of u owned by `area` (1-based).
    std::pair<std::size_t, std::size_t> area_slice(int area) const;

    /// u at the case's current set points.
    Vector initial_input(const GridCase& grid) const;
};

struct Disturbance {
    Vector p_load;          // per bus, p.u.
    Vector q_load;          // per bus, p.u.
    Vector p_uncontrolled;  // per generator, p.u.; entries of controllable units are unused

    static Disturbance from_case(const GridCase& grid);
};

struct OutputVector {
    Vector v_mag;  // per bus
    Vector i_mag;  // per branch, from-end magnitude

    std::size_t dim() const { return static_cast<std::size_t>(v_mag.size() + i_mag.size()); }
    Vector stacked() const;
};

struct PFOptions {
    double tol = 1e-8;
    int max_iter = 20;
    bool flat_start = true;
};

struct PowerFlowSolution {
    VoltageState state;
    int iterations = 0;
    double max_mismatch = 0.0;
};

/// Newton-Raphson solve. `warm` is used as the initial guess when
/// opts.flat_start is false (PV and slack magnitudes are always reset to set points).
PowerFlowSolution solve_pf(const GridCase& grid, const InputLayout& layout, const Vector& u,
                           const Disturbance& w, const PFOptions& opts = {},
                           const VoltageState* warm = nullptr);

OutputVector compute_outputs(const GridCase& grid, const VoltageState& state);

/// Net active power injected at the slack bus (p.u.).
double slack_injection(const GridCase& grid, const VoltageState& state);

/// Mismatch F(x) = S_calc - S_spec over [P at non-slack buses; Q at PQ buses].
Vector power_mismatch(const GridCase& grid, const InputLayout& layout, const Vector& u,
                      const Disturbance& w, const VoltageState& state);

/// Newton-Raphson Jacobian dF/dx at `state`, x = [angles of non-slack; magnitudes of PQ].
Matrix pf_jacobian(const GridCase& grid, const VoltageState& state);

struct Sensitivity {
    Matrix dy_du;            // (n_bus + n_branch) x dim u
    Eigen::RowVectorXd dslack_du;  // slack active injection vs u
};

/// dy/du = (dy/dx) (dF/dx)^-1 (-dF/du) at a converged state.
Sensitivity sensitivity(const GridCase& grid, const InputLayout& layout, const VoltageState& state);

/// Central differences of solve_pf followed by compute_outputs; test and diagnostics oracle.
Sensitivity finite_diff_sensitivity(const GridCase& grid, const InputLayout& layout, const Vector& u,
                                    const Disturbance& w, double step, const PFOptions& opts = {},
                                    const VoltageState* warm = nullptr);

/// Diagnostic CSV: header `bus_<id>_vm,...,branch_<k>_im,...` then one row.
void write_outputs_csv(std::ostream& os, const GridCase& grid, const OutputVector& y);

}  // namespace gridloop
