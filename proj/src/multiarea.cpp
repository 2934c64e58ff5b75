#include "gridloop/multiarea.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "gridloop/error.hpp"
#include "gridloop/log.hpp"

namespace gridloop {

using Eigen::Index;

Vector AreaController::local_input(const Vector& u) const {
    return u.segment(static_cast<Index>(offset), static_cast<Index>(size));
}

Vector AreaController::local_outputs(const Vector& y) const {
    Vector yi(static_cast<Index>(outputs.size()));
    for (std::size_t j = 0; j < outputs.size(); ++j) yi[static_cast<Index>(j)] = y[static_cast<Index>(outputs[j])];
    return yi;
}

Matrix AreaController::local_block(const Matrix& dy_du) const {
    Matrix s(static_cast<Index>(outputs.size()), static_cast<Index>(size));
    for (std::size_t j = 0; j < outputs.size(); ++j)
        s.row(static_cast<Index>(j)) =
            dy_du.row(static_cast<Index>(outputs[j])).segment(static_cast<Index>(offset), static_cast<Index>(size));
    return s;
}

Eigen::RowVectorXd AreaController::local_slack_row(const Eigen::RowVectorXd& dslack_du) const {
    return dslack_du.segment(static_cast<Index>(offset), static_cast<Index>(size));
}

double AreaController::local_cost(const Vector& u, const Measurement& m) const {
    return cost.value(local_input(u), m.slack_p) + penalty.value(local_outputs(m.y));
}

Gains Gains::from(const std::vector<AreaController>& controllers) {
    std::size_t n = 0;
    for (const auto& c : controllers) n = std::max(n, c.offset + c.size);
    Gains g;
    g.diagonal = Vector::Zero(static_cast<Index>(n));
    for (const auto& c : controllers)
        g.diagonal.segment(static_cast<Index>(c.offset), static_cast<Index>(c.size)).setConstant(c.gamma);
    return g;
}

Vector local_gradient(const AreaController& ctrl, const Vector& u, const Measurement& m, const Matrix& s_local,
                      const Eigen::RowVectorXd& slack_local) {
    const auto grads = cost_gradients(ctrl.cost, ctrl.penalty, ctrl.local_input(u), ctrl.local_outputs(m.y));
    return reduced_gradient(grads, s_local, slack_local);
}

Vector local_gradient(const AreaController& ctrl, const Vector& u, const Measurement& m, const Sensitivity& s) {
    return local_gradient(ctrl, u, m, ctrl.local_block(s.dy_du), ctrl.local_slack_row(s.dslack_du));
}

Vector project_product_set(const std::vector<AreaController>& controllers, const Vector& u) {
    Vector out = u;
    for (const auto& c : controllers) {
        const auto off = static_cast<Index>(c.offset), n = static_cast<Index>(c.size);
        out.segment(off, n) = project_box_polytope(u.segment(off, n), c.A, c.b);
    }
    return out;
}

GameState multiarea_step(const std::vector<AreaController>& controllers, const GameState& state, Plant& plant,
                         const Sensitivity& s) {
    GameState next;
    next.u = state.u;
    for (const auto& c : controllers) {
        const Vector f = local_gradient(c, state.u, state.measurement, s);
        next.u.segment(static_cast<Index>(c.offset), static_cast<Index>(c.size)) =
            project_box_polytope(c.local_input(state.u) - c.gamma * f, c.A, c.b);
    }
    next.measurement = plant.measure(next.u);
    next.k = state.k + 1;
    return next;
}

Vector pseudo_gradient(const std::vector<AreaController>& controllers, const Vector& u, Plant& plant) {
    const Measurement m = plant.measure(u);
    const Sensitivity s = plant.sensitivity(u);
    Vector out = Vector::Zero(u.size());
    for (const auto& c : controllers)
        out.segment(static_cast<Index>(c.offset), static_cast<Index>(c.size)) = local_gradient(c, u, m, s);
    return out;
}

Vector fb_operator(const Gains& gains, const Vector& u, const Vector& f, const Projector& projector) {
    return projector(u - gains.diagonal.cwiseProduct(f));
}

// ---------------------------------------------------------------------------
// Cocoercivity

CocoercivityEstimate estimate_cocoercivity(const std::function<Vector(const Vector&)>& op, int sample_pairs,
                                           const SamplingRegion& region, std::uint64_t seed) {
    if (region.lower.size() != region.upper.size())
        throw Error(ErrorCode::InvalidConfig, "sampling region bounds differ in size");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw = [&] {
        Vector x(region.lower.size());
        for (Index j = 0; j < x.size(); ++j)
            x[j] = region.lower[j] + unit(rng) * (region.upper[j] - region.lower[j]);
        return x;
    };

    CocoercivityEstimate est;
    est.mu_hat = std::numeric_limits<double>::infinity();
    for (int p = 0; p < sample_pairs; ++p) {
        const Vector a = draw();
        const Vector b = draw();
        const Vector fa = op(a);
        const Vector fb = op(b);
        const Vector df = fa - fb;
        const double denom = df.squaredNorm();
        const double scale = std::max({1.0, fa.squaredNorm(), fb.squaredNorm()});
        if (denom <= 1e-24 * scale) continue;
        const double ratio = df.dot(a - b) / denom;
        ++est.informative_pairs;
        if (ratio < 0.0) ++est.negative_pairs;
        if (ratio < est.mu_hat) {
            est.mu_hat = ratio;
            est.pair_a = a;
            est.pair_b = b;
        }
    }
    if (est.informative_pairs == 0)
        throw Error(ErrorCode::NoInformativePairs, "every sampled pair had a vanishing operator difference");
    if (est.negative_pairs > 0)
        log().warn("cocoercivity: {} of {} sampled pairs have a negative ratio", est.negative_pairs,
                   est.informative_pairs);
    return est;
}

CocoercivityEstimate estimate_cocoercivity(const std::vector<AreaController>& controllers, Plant& plant,
                                           int sample_pairs, const SamplingRegion& region, std::uint64_t seed) {
    return estimate_cocoercivity([&](const Vector& u) { return pseudo_gradient(controllers, u, plant); },
                                 sample_pairs, region, seed);
}

// ---------------------------------------------------------------------------
// Nash certification

namespace {

struct BestResponse {
    double cost = 0.0;
    Vector u;
};

// Projected gradient with backtracking on J_i(., u_-i) through the true plant.
BestResponse best_response(const AreaController& c, const Vector& u0, Plant& plant, const BestResponseOptions& opts) {
    Vector u = u0;
    Measurement m = plant.measure(u);
    double cost = c.local_cost(u, m);
    double step = 2.0 * c.gamma;
    const auto off = static_cast<Index>(c.offset), n = static_cast<Index>(c.size);

    for (int it = 0; it < opts.max_iter; ++it) {
        const Vector g = local_gradient(c, u, m, plant.sensitivity(u));
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            Vector trial = u;
            trial.segment(off, n) = project_box_polytope(c.local_input(u) - step * g, c.A, c.b);
            const Vector delta = (trial - u).segment(off, n);
            if (delta.squaredNorm() == 0.0) return {cost, u};
            const Measurement mt = plant.measure(trial);
            const double ct = c.local_cost(trial, mt);
            if (ct <= cost + g.dot(delta) + delta.squaredNorm() / (2.0 * step)) {
                const double improvement = cost - ct;
                u = trial;
                m = mt;
                cost = ct;
                accepted = true;
                step *= 1.5;
                if (improvement < opts.inner_tol * std::max(1.0, std::abs(cost))) return {cost, u};
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
    }
    return {cost, u};
}

}  // namespace

NashCertificate certify_nash(const std::vector<AreaController>& controllers, const Vector& u, Plant& plant,
                             const BestResponseOptions& opts) {
    NashCertificate cert;
    const Vector f = pseudo_gradient(controllers, u, plant);
    const Vector next = fb_operator(Gains::from(controllers), u, f,
                                    [&](const Vector& x) { return project_product_set(controllers, x); });
    cert.fixed_point_residual = (u - next).norm();

    const Measurement m = plant.measure(u);
    for (const auto& c : controllers) {
        const double here = c.local_cost(u, m);
        const BestResponse br = best_response(c, u, plant, opts);
        const double gap = std::max(0.0, here - br.cost) / std::max(std::abs(here), 1e-12);
        cert.local_cost.push_back(here);
        cert.best_response_cost.push_back(std::min(here, br.cost));
        cert.best_response_gap.push_back(gap);
    }
    plant.measure(u);
    return cert;
}

StepSizeCheck check_step_sizes(const Gains& gains, double mu_hat) {
    const double gmax = gains.diagonal.size() ? gains.diagonal.maxCoeff() : 0.0;
    StepSizeCheck out;
    out.margin = 2.0 * mu_hat - gmax;
    out.ok = mu_hat > 0.0 && gmax < 2.0 * mu_hat && gains.diagonal.size() > 0 && gains.diagonal.minCoeff() > 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Grid construction

std::vector<AreaController> make_area_controllers(const GridCase& grid, const AreaPartition& partition,
                                                  const InputLayout& layout, const CostModel& global_cost,
                                                  const AreaCostSettings& settings, const std::vector<double>& gammas) {
    if (gammas.size() != static_cast<std::size_t>(partition.n_areas))
        throw Error(ErrorCode::InvalidConfig,
                    fmt::format("{} gains given for {} areas", gammas.size(), partition.n_areas));
    const LinearConstraints global_in = input_box(grid, layout, global_cost.p_available);
    const LinearConstraints global_out = output_limits(grid, settings.current_scale);

    std::vector<AreaController> out;
    for (int a = 1; a <= partition.n_areas; ++a) {
        AreaController c;
        c.area = a;
        c.gamma = gammas[static_cast<std::size_t>(a - 1)];
        const auto [off, size] = layout.area_slice(a);
        c.offset = off;
        c.size = size;
        c.outputs = area_output_indices(grid, partition, a);

        const auto u0 = static_cast<Index>(off / 2), un = static_cast<Index>(size / 2);
        c.cost.curtail_weights = global_cost.curtail_weights.segment(u0, un);
        c.cost.q_weights = global_cost.q_weights.segment(u0, un);
        c.cost.p_available = global_cost.p_available.segment(u0, un);
        c.cost.loss_weight = settings.loss_weight;

        c.A = global_in.A.block(4 * u0, static_cast<Index>(off), 4 * un, static_cast<Index>(size));
        c.b = global_in.b.segment(4 * u0, 4 * un);

        std::vector<Index> local_pos(static_cast<std::size_t>(global_out.A.cols()), -1);
        for (std::size_t j = 0; j < c.outputs.size(); ++j) local_pos[c.outputs[j]] = static_cast<Index>(j);
        std::vector<Index> rows;
        for (Index r = 0; r < global_out.A.rows(); ++r) {
            bool local = true;
            for (Index col = 0; col < global_out.A.cols() && local; ++col)
                if (global_out.A(r, col) != 0.0 && local_pos[static_cast<std::size_t>(col)] < 0) local = false;
            if (local) rows.push_back(r);
        }
        c.penalty.rho = settings.rho;
        c.penalty.C = Matrix::Zero(static_cast<Index>(rows.size()), static_cast<Index>(c.outputs.size()));
        c.penalty.d = Vector::Zero(static_cast<Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (Index col = 0; col < global_out.A.cols(); ++col) {
                const double v = global_out.A(rows[r], col);
                if (v != 0.0) c.penalty.C(static_cast<Index>(r), local_pos[static_cast<std::size_t>(col)]) = v;
            }
            c.penalty.d[static_cast<Index>(r)] = global_out.b[rows[r]];
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace gridloop
