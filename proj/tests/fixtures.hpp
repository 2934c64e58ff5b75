#pragma once

#include <Eigen/Eigenvalues>

#include "gridloop/multiarea.hpp"
#include "support.hpp"

namespace testing {

using namespace gridloop;

// Two players, one unit each, u = [p1, q1, p2, q2]. Output 0 is a line only
// area 1 watches; its hinge is active on the whole input box. Output 1 is
// watched by area 2 and unconstrained.
struct ToyGame {
    double c1 = 1.0, c2 = 5.0, a1 = 5.0, a2 = 1.0, wq = 1.0, rho = 2.0;
    double g1 = 1.0, g2 = 0.8, y00 = 1.5, d = 1.2;

    Matrix plant_matrix() const {
        Matrix g = Matrix::Zero(2, 4);
        g(0, 0) = g1;
        g(0, 2) = g2;
        g(1, 2) = 1.0;
        return g;
    }
    Vector plant_offset() const { return Vector((Vector(2) << y00, 0.0).finished()); }
    LinearPlant plant() const { return LinearPlant(plant_matrix(), plant_offset()); }

    static Matrix box() {
        Matrix a(4, 2);
        a << 1, 0, -1, 0, 0, 1, 0, -1;
        return a;
    }

    std::vector<AreaController> areas(double gamma1, double gamma2) const {
        AreaController one, two;
        one.area = 1;
        one.gamma = gamma1;
        one.offset = 0;
        one.size = 2;
        one.outputs = {0};
        one.cost.curtail_weights = Vector::Constant(1, c1);
        one.cost.q_weights = Vector::Constant(1, wq);
        one.cost.p_available = Vector::Constant(1, a1);
        one.penalty.rho = rho;
        one.penalty.C = Matrix::Ones(1, 1);
        one.penalty.d = Vector::Constant(1, d);
        one.A = box();
        one.b = Vector((Vector(4) << a1, 0.0, 1.0, 1.0).finished());

        two.area = 2;
        two.gamma = gamma2;
        two.offset = 2;
        two.size = 2;
        two.outputs = {1};
        two.cost.curtail_weights = Vector::Constant(1, c2);
        two.cost.q_weights = Vector::Constant(1, wq);
        two.cost.p_available = Vector::Constant(1, a2);
        two.penalty.rho = rho;
        two.penalty.C = Matrix(0, 1);
        two.penalty.d = Vector(0);
        two.A = box();
        two.b = Vector((Vector(4) << a2, 0.0, 1.0, 1.0).finished());
        return {one, two};
    }

    // Jacobian of the pseudo-gradient (constant: the hinge never switches off).
    Matrix pseudo_jacobian() const {
        Matrix m = Matrix::Zero(4, 4);
        m(0, 0) = 2 * c1 + 2 * rho * g1 * g1;
        m(0, 2) = 2 * rho * g1 * g2;
        m(1, 1) = 2 * wq;
        m(2, 2) = 2 * c2;
        m(3, 3) = 2 * wq;
        return m;
    }

    // Exact cocoercivity of u -> M u + c: min over w of w' M^-1 w / |w|^2.
    double mu() const {
        const Matrix inv = pseudo_jacobian().inverse();
        const Matrix sym = 0.5 * (inv + inv.transpose());
        return Eigen::SelfAdjointEigenSolver<Matrix>(sym).eigenvalues().minCoeff();
    }

    Vector nash() const {
        Vector u = Vector::Zero(4);
        u[2] = a2;
        u[0] = (c1 * a1 - rho * g1 * (g2 * a2 + y00 - d)) / (c1 + rho * g1 * g1);
        return u;
    }
};

inline Vector run_fb(const std::vector<AreaController>& ctrls, Plant& plant, Vector u, int iters,
              std::vector<double>* dist = nullptr, const Vector* star = nullptr) {
    const Gains gains = Gains::from(ctrls);
    for (int k = 0; k < iters; ++k) {
        const Vector f = pseudo_gradient(ctrls, u, plant);
        u = fb_operator(gains, u, f, [&](const Vector& x) { return project_product_set(ctrls, x); });
        if (dist) dist->push_back(std::sqrt((u - *star).cwiseAbs2().cwiseQuotient(gains.diagonal).sum()));
    }
    return u;
}

struct Case30Game {
    GridCase grid = case30();
    AreaPartition partition;
    InputLayout layout;
    CostModel cost;

    Case30Game() {
        partition.n_areas = 3;
        const std::vector<std::vector<int>> areas = {{1, 2, 3, 4, 5, 6, 7, 8, 9, 11, 28},
                                                     {12, 13, 14, 15, 16, 17, 18, 19, 20, 23},
                                                     {10, 21, 22, 24, 25, 26, 27, 29, 30}};
        for (std::size_t a = 0; a < areas.size(); ++a)
            for (int id : areas[a]) partition.bus_area[id] = static_cast<int>(a) + 1;
        validate_partition(grid, partition);
        layout = InputLayout::build(grid, partition);
        cost = cost_from_case(grid, layout);
    }

    Vector full_availability() const {
        Vector u = Vector::Zero(static_cast<Eigen::Index>(layout.dim()));
        for (std::size_t k = 0; k < layout.generators.size(); ++k)
            u[static_cast<Eigen::Index>(layout.p_index(k))] = cost.p_available[static_cast<Eigen::Index>(k)];
        return u;
    }
};

}  // namespace testing
