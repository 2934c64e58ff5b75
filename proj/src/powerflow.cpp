#include "gridloop/powerflow.hpp"

#include <cmath>
#include <complex>
#include <ostream>

#include <fmt/format.h>

#include "gridloop/error.hpp"

namespace gridloop {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

// ---------------------------------------------------------------------------
// Layout and signals

InputLayout InputLayout::build(const GridCase& grid, const AreaPartition& partition) {
    AreaPartition p = partition;
    validate_partition(grid, p);
    InputLayout layout;
    layout.n_areas = p.n_areas;
    for (int a = 1; a <= p.n_areas; ++a) {
        for (auto g : p.controllable_by_area[static_cast<std::size_t>(a - 1)]) {
            layout.generators.push_back(g);
            layout.generator_area.push_back(a);
        }
    }
    return layout;
}

InputLayout InputLayout::build(const GridCase& grid) {
    return build(grid, AreaPartition::single_area(grid));
}

std::pair<std::size_t, std::size_t> InputLayout::area_slice(int area) const {
    std::size_t offset = 0, size = 0;
    for (std::size_t k = 0; k < generators.size(); ++k) {
        if (generator_area[k] < area) offset += 2;
        else if (generator_area[k] == area) size += 2;
    }
    return {offset, size};
}

Vector InputLayout::initial_input(const GridCase& grid) const {
    Vector u(static_cast<Eigen::Index>(dim()));
    for (std::size_t k = 0; k < generators.size(); ++k) {
        const auto& g = grid.generators[generators[k]];
        u[static_cast<Eigen::Index>(p_index(k))] = g.p_set;
        u[static_cast<Eigen::Index>(q_index(k))] = g.q_set;
    }
    return u;
}

Disturbance Disturbance::from_case(const GridCase& grid) {
    Disturbance w;
    const auto n = static_cast<Eigen::Index>(grid.n_bus());
    w.p_load.resize(n);
    w.q_load.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        w.p_load[i] = grid.buses[static_cast<std::size_t>(i)].p_load;
        w.q_load[i] = grid.buses[static_cast<std::size_t>(i)].q_load;
    }
    w.p_uncontrolled.resize(static_cast<Eigen::Index>(grid.generators.size()));
    for (std::size_t g = 0; g < grid.generators.size(); ++g)
        w.p_uncontrolled[static_cast<Eigen::Index>(g)] = grid.generators[g].p_set;
    return w;
}

Vector OutputVector::stacked() const {
    Vector y(v_mag.size() + i_mag.size());
    y << v_mag, i_mag;
    return y;
}

// ---------------------------------------------------------------------------
// Internals

namespace {

struct BusSets {
    std::vector<Eigen::Index> pvpq;  // non-slack buses (angle unknowns)
    std::vector<Eigen::Index> pq;    // magnitude unknowns
    Eigen::Index slack = 0;
};

BusSets bus_sets(const GridCase& grid) {
    BusSets s;
    for (std::size_t i = 0; i < grid.n_bus(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        switch (grid.buses[i].kind) {
            case BusKind::Slack: s.slack = k; break;
            case BusKind::PV: s.pvpq.push_back(k); break;
            case BusKind::PQ:
                s.pvpq.push_back(k);
                s.pq.push_back(k);
                break;
        }
    }
    return s;
}

CMatrix dense_admittance(const GridCase& grid) { return CMatrix(build_admittance(grid)); }

CVector complex_voltage(const VoltageState& st) {
    CVector v(st.v_mag.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::polar(st.v_mag[i], st.v_ang[i]);
    return v;
}

// Specified net injection S_spec per bus.
CVector specified_injection(const GridCase& grid, const InputLayout& layout, const Vector& u,
                            const Disturbance& w) {
    const auto n = static_cast<Eigen::Index>(grid.n_bus());
    CVector s(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = Complex(-w.p_load[i], -w.q_load[i]);

    std::vector<Eigen::Index> slot(grid.generators.size(), -1);
    for (std::size_t k = 0; k < layout.generators.size(); ++k)
        slot[layout.generators[k]] = static_cast<Eigen::Index>(k);

    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        const auto b = static_cast<Eigen::Index>(grid.bus_index(gen.bus));
        if (slot[g] >= 0) {
            const auto k = static_cast<std::size_t>(slot[g]);
            s[b] += Complex(u[static_cast<Eigen::Index>(layout.p_index(k))],
                            u[static_cast<Eigen::Index>(layout.q_index(k))]);
        } else {
            s[b] += Complex(w.p_uncontrolled[static_cast<Eigen::Index>(g)], gen.q_set);
        }
    }
    return s;
}

struct SbusDerivatives {
    CMatrix ds_dva;
    CMatrix ds_dvm;
};

SbusDerivatives sbus_derivatives(const CMatrix& y, const CVector& v) {
    const CVector ibus = y * v;
    CVector vnorm(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) vnorm[i] = v[i] / std::abs(v[i]);

    SbusDerivatives d;
    CMatrix y_diag_v = y * v.asDiagonal();
    CMatrix tmp = -y_diag_v;
    tmp.diagonal() += ibus;
    d.ds_dva = Complex(0.0, 1.0) * (v.asDiagonal() * tmp.conjugate());
    d.ds_dvm = v.asDiagonal() * (y * vnorm.asDiagonal()).conjugate();
    d.ds_dvm.diagonal() += ibus.conjugate().cwiseProduct(vnorm);
    return d;
}

Matrix assemble_jacobian(const SbusDerivatives& d, const BusSets& s) {
    const auto npvpq = static_cast<Eigen::Index>(s.pvpq.size());
    const auto npq = static_cast<Eigen::Index>(s.pq.size());
    Matrix jac(npvpq + npq, npvpq + npq);
    for (Eigen::Index r = 0; r < npvpq; ++r) {
        for (Eigen::Index c = 0; c < npvpq; ++c) jac(r, c) = d.ds_dva(s.pvpq[r], s.pvpq[c]).real();
        for (Eigen::Index c = 0; c < npq; ++c) jac(r, npvpq + c) = d.ds_dvm(s.pvpq[r], s.pq[c]).real();
    }
    for (Eigen::Index r = 0; r < npq; ++r) {
        for (Eigen::Index c = 0; c < npvpq; ++c) jac(npvpq + r, c) = d.ds_dva(s.pq[r], s.pvpq[c]).imag();
        for (Eigen::Index c = 0; c < npq; ++c)
            jac(npvpq + r, npvpq + c) = d.ds_dvm(s.pq[r], s.pq[c]).imag();
    }
    return jac;
}

Vector mismatch_vector(const CMatrix& y, const CVector& v, const CVector& spec, const BusSets& s) {
    const CVector calc = v.cwiseProduct((y * v).conjugate());
    const auto npvpq = static_cast<Eigen::Index>(s.pvpq.size());
    const auto npq = static_cast<Eigen::Index>(s.pq.size());
    Vector f(npvpq + npq);
    for (Eigen::Index r = 0; r < npvpq; ++r) f[r] = (calc[s.pvpq[r]] - spec[s.pvpq[r]]).real();
    for (Eigen::Index r = 0; r < npq; ++r) f[npvpq + r] = (calc[s.pq[r]] - spec[s.pq[r]]).imag();
    return f;
}

Eigen::PartialPivLU<Matrix> factor_checked(const Matrix& jac) {
    Eigen::PartialPivLU<Matrix> lu(jac);
    if (jac.size() > 0) {
        const double rc = lu.rcond();
        if (!(rc > 1e-14))
            throw Error(ErrorCode::SingularJacobian,
                        fmt::format("power flow Jacobian is singular (rcond={:.3e})", rc));
    }
    return lu;
}

double regulated_voltage(const GridCase& grid, std::size_t bus) {
    const int id = grid.buses[bus].id;
    for (const auto& g : grid.generators)
        if (g.bus == id) return g.v_set;
    return 1.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Solve

PowerFlowSolution solve_pf(const GridCase& grid, const InputLayout& layout, const Vector& u,
                           const Disturbance& w, const PFOptions& opts, const VoltageState* warm) {
    if (!(opts.tol > 0.0) || opts.max_iter < 1)
        throw Error(ErrorCode::InvalidConfig, "PFOptions need tol > 0 and max_iter >= 1");
    if (u.size() != static_cast<Eigen::Index>(layout.dim()))
        throw Error(ErrorCode::InvalidConfig, "input dimension does not match layout");
    if (!u.allFinite()) throw Error(ErrorCode::InvalidConfig, "input vector is not finite");

    const auto n = static_cast<Eigen::Index>(grid.n_bus());
    const BusSets sets = bus_sets(grid);
    const CMatrix y = dense_admittance(grid);
    const CVector spec = specified_injection(grid, layout, u, w);

    VoltageState st;
    if (!opts.flat_start && warm != nullptr && warm->v_mag.size() == n) {
        st = *warm;
    } else {
        st.v_mag = Vector::Ones(n);
        st.v_ang = Vector::Zero(n);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto kind = grid.buses[static_cast<std::size_t>(i)].kind;
        if (kind != BusKind::PQ) st.v_mag[i] = regulated_voltage(grid, static_cast<std::size_t>(i));
    }
    st.v_ang[sets.slack] = 0.0;

    const auto npvpq = static_cast<Eigen::Index>(sets.pvpq.size());
    const auto npq = static_cast<Eigen::Index>(sets.pq.size());

    CVector v = complex_voltage(st);
    Vector f = mismatch_vector(y, v, spec, sets);
    double norm = f.size() ? f.lpNorm<Eigen::Infinity>() : 0.0;
    int iter = 0;
    while (norm > opts.tol) {
        if (iter >= opts.max_iter || !std::isfinite(norm))
            throw Error(ErrorCode::NonConvergence,
                        fmt::format("Newton-Raphson did not converge in {} iterations (mismatch {:.3e})",
                                    iter, norm));
        const Matrix jac = assemble_jacobian(sbus_derivatives(y, v), sets);
        const Vector dx = factor_checked(jac).solve(-f);
        for (Eigen::Index r = 0; r < npvpq; ++r) st.v_ang[sets.pvpq[r]] += dx[r];
        for (Eigen::Index r = 0; r < npq; ++r) st.v_mag[sets.pq[r]] += dx[npvpq + r];
        v = complex_voltage(st);
        f = mismatch_vector(y, v, spec, sets);
        norm = f.size() ? f.lpNorm<Eigen::Infinity>() : 0.0;
        ++iter;
    }
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(st.v_mag[i] > 0.0))
            throw Error(ErrorCode::NonConvergence, "solution has non-positive voltage magnitude");
    return {st, iter, norm};
}

Vector power_mismatch(const GridCase& grid, const InputLayout& layout, const Vector& u,
                      const Disturbance& w, const VoltageState& state) {
    return mismatch_vector(dense_admittance(grid), complex_voltage(state),
                           specified_injection(grid, layout, u, w), bus_sets(grid));
}

Matrix pf_jacobian(const GridCase& grid, const VoltageState& state) {
    return assemble_jacobian(sbus_derivatives(dense_admittance(grid), complex_voltage(state)),
                             bus_sets(grid));
}

// ---------------------------------------------------------------------------
// Outputs

OutputVector compute_outputs(const GridCase& grid, const VoltageState& state) {
    OutputVector out;
    out.v_mag = state.v_mag;
    out.i_mag = Vector::Zero(static_cast<Eigen::Index>(grid.n_branch()));
    const CVector v = complex_voltage(state);
    for (std::size_t k = 0; k < grid.n_branch(); ++k) {
        const auto& br = grid.branches[k];
        if (!br.in_service) continue;
        const auto a = branch_admittance(br);
        const auto f = static_cast<Eigen::Index>(grid.bus_index(br.from_bus));
        const auto t = static_cast<Eigen::Index>(grid.bus_index(br.to_bus));
        out.i_mag[static_cast<Eigen::Index>(k)] = std::abs(a.yff * v[f] + a.yft * v[t]);
    }
    return out;
}

double slack_injection(const GridCase& grid, const VoltageState& state) {
    const auto s = static_cast<Eigen::Index>(grid.slack_index());
    const CVector v = complex_voltage(state);
    const CMatrix y = dense_admittance(grid);
    const Complex i_s = (y.row(s) * v)(0);
    return (v[s] * std::conj(i_s)).real();
}

// ---------------------------------------------------------------------------
// Sensitivity

Sensitivity sensitivity(const GridCase& grid, const InputLayout& layout, const VoltageState& state) {
    const auto nb = static_cast<Eigen::Index>(grid.n_bus());
    const auto nl = static_cast<Eigen::Index>(grid.n_branch());
    const auto nu = static_cast<Eigen::Index>(layout.dim());

    Sensitivity out;
    out.dy_du = Matrix::Zero(nb + nl, nu);
    out.dslack_du = Eigen::RowVectorXd::Zero(nu);
    if (nu == 0) return out;

    const BusSets sets = bus_sets(grid);
    const auto npvpq = static_cast<Eigen::Index>(sets.pvpq.size());
    const auto npq = static_cast<Eigen::Index>(sets.pq.size());
    const CMatrix y = dense_admittance(grid);
    const CVector v = complex_voltage(state);
    const SbusDerivatives d = sbus_derivatives(y, v);
    const Matrix jac = assemble_jacobian(d, sets);

    // Row positions of each bus inside F.
    std::vector<Eigen::Index> p_row(static_cast<std::size_t>(nb), -1), q_row(static_cast<std::size_t>(nb), -1);
    for (Eigen::Index r = 0; r < npvpq; ++r) p_row[static_cast<std::size_t>(sets.pvpq[r])] = r;
    for (Eigen::Index r = 0; r < npq; ++r) q_row[static_cast<std::size_t>(sets.pq[r])] = npvpq + r;

    // -dF/du: injections enter S_spec with a positive sign.
    Matrix rhs = Matrix::Zero(npvpq + npq, nu);
    for (std::size_t k = 0; k < layout.generators.size(); ++k) {
        const auto b = grid.bus_index(grid.generators[layout.generators[k]].bus);
        if (p_row[b] >= 0) rhs(p_row[b], static_cast<Eigen::Index>(layout.p_index(k))) = 1.0;
        if (q_row[b] >= 0) rhs(q_row[b], static_cast<Eigen::Index>(layout.q_index(k))) = 1.0;
    }
    const Matrix dx_du = factor_checked(jac).solve(rhs);

    // dy/dx
    Matrix dy_dx = Matrix::Zero(nb + nl, npvpq + npq);
    for (Eigen::Index r = 0; r < npq; ++r) dy_dx(sets.pq[r], npvpq + r) = 1.0;

    std::vector<Eigen::Index> ang_col(static_cast<std::size_t>(nb), -1), mag_col(static_cast<std::size_t>(nb), -1);
    for (Eigen::Index r = 0; r < npvpq; ++r) ang_col[static_cast<std::size_t>(sets.pvpq[r])] = r;
    for (Eigen::Index r = 0; r < npq; ++r) mag_col[static_cast<std::size_t>(sets.pq[r])] = npvpq + r;

    for (Eigen::Index k = 0; k < nl; ++k) {
        const auto& br = grid.branches[static_cast<std::size_t>(k)];
        if (!br.in_service) continue;
        const auto a = branch_admittance(br);
        const auto f = static_cast<Eigen::Index>(grid.bus_index(br.from_bus));
        const auto t = static_cast<Eigen::Index>(grid.bus_index(br.to_bus));
        const Complex i_f = a.yff * v[f] + a.yft * v[t];
        const double mag = std::abs(i_f);
        if (mag == 0.0) continue;  // |I| is not differentiable at zero flow
        const auto add = [&](Eigen::Index col, Complex di) {
            if (col >= 0) dy_dx(nb + k, col) += (std::conj(i_f) * di).real() / mag;
        };
        const Complex j(0.0, 1.0);
        add(ang_col[static_cast<std::size_t>(f)], j * a.yff * v[f]);
        add(ang_col[static_cast<std::size_t>(t)], j * a.yft * v[t]);
        add(mag_col[static_cast<std::size_t>(f)], a.yff * v[f] / std::abs(v[f]));
        add(mag_col[static_cast<std::size_t>(t)], a.yft * v[t] / std::abs(v[t]));
    }
    out.dy_du = dy_dx * dx_du;

    Eigen::RowVectorXd dslack_dx(npvpq + npq);
    for (Eigen::Index c = 0; c < npvpq; ++c) dslack_dx[c] = d.ds_dva(sets.slack, sets.pvpq[c]).real();
    for (Eigen::Index c = 0; c < npq; ++c) dslack_dx[npvpq + c] = d.ds_dvm(sets.slack, sets.pq[c]).real();
    out.dslack_du = dslack_dx * dx_du;
    return out;
}

Sensitivity finite_diff_sensitivity(const GridCase& grid, const InputLayout& layout, const Vector& u,
                                    const Disturbance& w, double step, const PFOptions& opts,
                                    const VoltageState* warm) {
    const auto nb = static_cast<Eigen::Index>(grid.n_bus());
    const auto nl = static_cast<Eigen::Index>(grid.n_branch());
    const auto nu = static_cast<Eigen::Index>(layout.dim());
    Sensitivity out;
    out.dy_du = Matrix::Zero(nb + nl, nu);
    out.dslack_du = Eigen::RowVectorXd::Zero(nu);

    PFOptions o = opts;
    if (warm != nullptr) o.flat_start = false;
    for (Eigen::Index c = 0; c < nu; ++c) {
        Vector up = u, um = u;
        up[c] += step;
        um[c] -= step;
        const auto sp = solve_pf(grid, layout, up, w, o, warm).state;
        const auto sm = solve_pf(grid, layout, um, w, o, warm).state;
        out.dy_du.col(c) = (compute_outputs(grid, sp).stacked() - compute_outputs(grid, sm).stacked()) /
                           (2.0 * step);
        out.dslack_du[c] = (slack_injection(grid, sp) - slack_injection(grid, sm)) / (2.0 * step);
    }
    return out;
}

void write_outputs_csv(std::ostream& os, const GridCase& grid, const OutputVector& y) {
    for (std::size_t i = 0; i < grid.n_bus(); ++i) os << (i ? "," : "") << "bus_" << grid.buses[i].id << "_vm";
    for (std::size_t k = 0; k < grid.n_branch(); ++k) os << ",branch_" << (k + 1) << "_im";
    os << '\n';
    for (Eigen::Index i = 0; i < y.v_mag.size(); ++i) os << (i ? "," : "") << fmt::format("{:.12g}", y.v_mag[i]);
    for (Eigen::Index k = 0; k < y.i_mag.size(); ++k) os << ',' << fmt::format("{:.12g}", y.i_mag[k]);
    os << '\n';
}

}  // namespace gridloop
