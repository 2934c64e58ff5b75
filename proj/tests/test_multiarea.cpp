#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "gridloop/error.hpp"
#include "gridloop/multiarea.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace gridloop;
using Eigen::Index;

using testing::Case30Game;
using testing::run_fb;
using testing::ToyGame;

TEST_CASE("toy game converges to the closed-form Nash point for all gamma in (0, 2 mu)") {
    const ToyGame t;
    const double mu = t.mu();
    REQUIRE(mu > 0.0);
    const Vector star = t.nash();
    // Hinge active at the Nash point and inside the box.
    CHECK(t.g1 * star[0] + t.g2 * star[2] + t.y00 > t.d);
    CHECK(star[0] > 0.0);
    CHECK(star[0] < t.a1);

    for (double f : {0.2, 0.6, 1.0, 1.4, 1.9}) {
        CAPTURE(f);
        auto plant = t.plant();
        const auto ctrls = t.areas(f * mu, f * mu);
        std::vector<double> dist;
        Vector u0(4);
        u0 << t.a1, 0.5, 0.0, -0.5;
        const Vector u = run_fb(ctrls, plant, u0, 20000, &dist, &star);
        CHECK((u - star).norm() < 1e-8);
        for (std::size_t k = 1; k < dist.size(); ++k) CHECK(dist[k] <= dist[k - 1] * (1 + 1e-12) + 1e-15);
    }
}

TEST_CASE("heterogeneous gains also converge") {
    const ToyGame t;
    auto plant = t.plant();
    const auto ctrls = t.areas(1.5 * t.mu(), 0.3 * t.mu());
    const Vector u = run_fb(ctrls, plant, Vector::Zero(4), 20000);
    CHECK((u - t.nash()).norm() < 1e-8);
}

TEST_CASE("pseudo-gradient of the toy is the affine map") {
    const ToyGame t;
    auto plant = t.plant();
    const auto ctrls = t.areas(0.1, 0.1);
    const Vector a = Vector((Vector(4) << 1.0, 0.2, 0.5, -0.1).finished());
    const Vector b = Vector((Vector(4) << 2.0, -0.3, 0.1, 0.4).finished());
    const Vector df = pseudo_gradient(ctrls, a, plant) - pseudo_gradient(ctrls, b, plant);
    CHECK((df - t.pseudo_jacobian() * (a - b)).norm() < 1e-12);
}

TEST_CASE("cocoercivity estimate of a symmetric map approaches 1 / lambda_max") {
    Matrix m(2, 2);
    m << 3.0, 1.0, 1.0, 2.0;
    const double lmax = Eigen::SelfAdjointEigenSolver<Matrix>(m).eigenvalues().maxCoeff();
    SamplingRegion region{Vector::Constant(2, -1.0), Vector::Constant(2, 1.0)};
    const auto est = estimate_cocoercivity([&](const Vector& u) { return Vector(m * u); }, 4000, region, 42);
    CHECK(est.mu_hat >= 1.0 / lmax * (1 - 1e-12));
    CHECK(est.mu_hat <= 1.02 / lmax);
    CHECK(est.informative_pairs == 4000);
    CHECK(est.negative_pairs == 0);

    const auto again = estimate_cocoercivity([&](const Vector& u) { return Vector(m * u); }, 4000, region, 42);
    CHECK(again.mu_hat == est.mu_hat);
}

TEST_CASE("constant operator has no informative pairs") {
    SamplingRegion region{Vector::Zero(2), Vector::Ones(2)};
    try {
        estimate_cocoercivity([](const Vector&) { return Vector(Vector::Ones(2)); }, 50, region, 1);
        FAIL("expected NoInformativePairs");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoInformativePairs);
    }
}

TEST_CASE("step-size admissibility is an open interval") {
    Gains g{Vector::Constant(3, 1.0)};
    CHECK(check_step_sizes(g, 0.51).ok);
    CHECK_FALSE(check_step_sizes(g, 0.5).ok);
    CHECK_FALSE(check_step_sizes(g, 0.4).ok);
    CHECK(check_step_sizes(g, 0.6).margin == doctest::Approx(0.2));
    CHECK_FALSE(check_step_sizes(Gains{Vector::Constant(2, 0.0)}, 1.0).ok);
}

TEST_CASE("certificate on the toy: zero gap at Nash, positive gap elsewhere") {
    const ToyGame t;
    auto plant = t.plant();
    const auto ctrls = t.areas(t.mu(), t.mu());
    const auto cert = certify_nash(ctrls, t.nash(), plant);
    CHECK(cert.fixed_point_residual < 1e-12);
    for (double gap : cert.best_response_gap) CHECK(gap < 1e-8);

    Vector off = t.nash();
    off[0] += 0.5;
    const auto bad = certify_nash(ctrls, off, plant);
    CHECK(bad.fixed_point_residual > 1e-3);
    CHECK(bad.best_response_gap[0] > 1e-3);
    CHECK(bad.best_response_cost[0] < bad.local_cost[0]);
}

TEST_CASE("multiarea_step equals the forward-backward operator on case30") {
    Case30Game game;
    const auto ctrls = make_area_controllers(game.grid, game.partition, game.layout, game.cost, {1e4, 0.0, 0.85},
                                             {3e-5, 2e-5, 1e-5});
    GridPlant plant_a(game.grid, game.layout, Disturbance::from_case(game.grid));
    GridPlant plant_b(game.grid, game.layout, Disturbance::from_case(game.grid));
    const Gains gains = Gains::from(ctrls);

    GameState st{game.full_availability(), plant_a.measure(game.full_availability()), 0};
    Vector v = game.full_availability();
    for (int k = 0; k < 100; ++k) {
        const auto next = multiarea_step(ctrls, st, plant_a, plant_a.sensitivity(st.u));
        const Vector f = pseudo_gradient(ctrls, v, plant_b);
        v = fb_operator(gains, v, f, [&](const Vector& x) { return project_product_set(ctrls, x); });
        CHECK((next.u - v).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(next.k == k + 1);
        st = next;
    }
}

TEST_CASE("one-area game reproduces the penalty gradient controller bit for bit") {
    Case30Game game;
    AreaPartition single = AreaPartition::single_area(game.grid);
    validate_partition(game.grid, single);
    const InputLayout layout = InputLayout::build(game.grid, single);
    const CostModel cost = cost_from_case(game.grid, layout);
    const double alpha = 2e-5;
    const auto ctrls = make_area_controllers(game.grid, single, layout, cost, {1e4, 0.0, 0.85}, {alpha});

    ControllerConfig cfg;
    cfg.alpha = alpha;
    cfg.mode = ControllerMode::PenaltyGradient;
    cfg.cost = cost;
    const auto in = input_box(game.grid, layout, cost.p_available);
    cfg.A = in.A;
    cfg.b = in.b;
    const auto out = output_limits(game.grid, 0.85);
    cfg.penalty.rho = 1e4;
    cfg.penalty.C = out.A;
    cfg.penalty.d = out.b;
    REQUIRE(ctrls[0].penalty.C == cfg.penalty.C);

    const Disturbance w = Disturbance::from_case(game.grid);
    GridPlant plant_a(game.grid, layout, w), plant_b(game.grid, layout, w);
    Vector u0 = Vector::Zero(static_cast<Index>(layout.dim()));
    for (std::size_t k = 0; k < layout.generators.size(); ++k)
        u0[static_cast<Index>(layout.p_index(k))] = cost.p_available[static_cast<Index>(k)];

    GameState st{u0, plant_a.measure(u0), 0};
    Vector u = u0;
    bool identical = true;
    for (int k = 0; k < 500 && identical; ++k) {
        st = multiarea_step(ctrls, st, plant_a, plant_a.sensitivity(st.u));
        const auto m = plant_b.measure(u);
        u = penalty_gradient_step(cfg, u, m, plant_b.sensitivity(u));
        identical = (st.u.array() == u.array()).all();
    }
    CHECK(identical);
}

TEST_CASE("area controllers on case30") {
    Case30Game game;
    const auto ctrls =
        make_area_controllers(game.grid, game.partition, game.layout, game.cost, {1e3, 0.0, 1.0}, {1, 1, 1});
    REQUIRE(ctrls.size() == 3);
    std::size_t total = 0;
    for (const auto& c : ctrls) {
        CHECK(c.size == 2);
        CHECK(c.offset == total);
        total += c.size;
        CHECK(c.penalty.C.cols() == static_cast<Index>(c.outputs.size()));
    }
    // Every global output row lands in at least one area.
    const auto out = output_limits(game.grid);
    Index rows = 0;
    for (const auto& c : ctrls) rows += c.penalty.C.rows();
    CHECK(rows >= out.A.rows());
    CHECK_THROWS_AS(
        make_area_controllers(game.grid, game.partition, game.layout, game.cost, {1e3, 0.0, 1.0}, {1, 1}), Error);
}
