#include <doctest.h>

#include <fstream>
#include <sstream>

#include "gridloop/error.hpp"
#include "gridloop/sim.hpp"
#include "support.hpp"

using namespace gridloop;
using nlohmann::json;
using Eigen::Index;

namespace {

json case2_doc() {
    return json::parse(R"({
      "case": {"path": "case2.m"},
      "controllers": {"mode": "PenaltyGradient", "alpha": 0.002, "rho": 1000.0},
      "schedule": [{"t": 0}],
      "run": {"sampling_period": 10, "horizon": 300}
    })");
}

Scenario case2_scenario(const json& doc) { return parse_scenario(doc, testing::source_path("data")); }

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::size_t count_fields(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

}  // namespace

TEST_CASE("zero cost from a feasible start holds u constant") {
    json doc = case2_doc();
    doc["case"]["generators"] = json::array({{{"index", 2}, {"cost_curtail", 0.0}, {"cost_q", 0.0}}});
    const Scenario sc = case2_scenario(doc);
    for (auto arch : {Architecture::Centralized, Architecture::MultiArea}) {
        Scenario s = sc;
        s.controllers.gamma = std::vector<double>{0.002};
        const SimLog lg = run_closed_loop(s, arch);
        REQUIRE(lg.records.size() == 30);
        for (const auto& r : lg.records) {
            CHECK(r.u == lg.records.front().u);
            CHECK(r.residual == 0.0);
            CHECK(r.max_violation < 0.0);
        }
        CHECK(lg.steady_state_step.value() == 0);
    }
}

TEST_CASE("scenario validation") {
    json doc = case2_doc();
    doc["run"]["horizon"] = 5;
    CHECK_THROWS_AS(case2_scenario(doc), Error);

    doc = case2_doc();
    doc["schedule"] = json::array({{{"t", 10}}});
    CHECK_THROWS_AS(case2_scenario(doc), Error);

    doc = case2_doc();
    doc["controllers"]["mode"] = "Newton";
    CHECK_THROWS_AS(case2_scenario(doc), Error);

    doc = case2_doc();
    doc["case"].erase("path");
    CHECK_THROWS_AS(case2_scenario(doc), Error);

    doc = case2_doc();
    doc["run"]["initial_u"] = json::array({1.0, 2.0, 3.0});
    CHECK_THROWS_AS(build_model(case2_scenario(doc)), Error);
}

TEST_CASE("overrides write dotted keys and are echoed") {
    json doc = case2_doc();
    apply_override(doc, "controllers.gamma=0.0125");
    apply_override(doc, "run.horizon=120");
    apply_override(doc, "controllers.mode=\"ProjectedDescent\"");
    apply_override(doc, "case.note=plain text");
    CHECK(doc["controllers"]["gamma"] == 0.0125);
    CHECK(doc["run"]["horizon"] == 120);
    CHECK(doc["case"]["note"] == "plain text");
    const Scenario sc = case2_scenario(doc);
    CHECK(sc.controllers.gamma.value() == std::vector<double>{0.0125});
    CHECK(sc.periods() == 12);
    CHECK(sc.effective_config["controllers"]["gamma"] == 0.0125);
    CHECK_THROWS_AS(apply_override(doc, "novalue"), Error);
}

TEST_CASE("closed loop is deterministic and emits byte-identical series") {
    const Scenario sc = load_scenario(testing::source_path("scenarios/default30.json"), {"run.horizon=400"});
    const SimLog a = run_closed_loop(sc, Architecture::MultiArea);
    const SimLog b = run_closed_loop(sc, Architecture::MultiArea);
    REQUIRE(a.records.size() == 40);
    REQUIRE(b.records.size() == a.records.size());
    for (std::size_t k = 0; k < a.records.size(); ++k) {
        CHECK(a.records[k].u == b.records[k].u);
        CHECK(a.records[k].y == b.records[k].y);
        CHECK(a.records[k].time == doctest::Approx(10.0 * static_cast<double>(k)));
    }

    const auto d1 = testing::scratch_dir("emit1"), d2 = testing::scratch_dir("emit2");
    emit_series(a, sc, d1.string());
    emit_series(b, sc, d2.string());
    for (const char* f : {"currents.csv", "voltages.csv", "injections.csv", "costs.csv", "summary.json"})
        CHECK(slurp(d1 / f) == slurp(d2 / f));

    const std::string currents = slurp(d1 / "currents.csv");
    const std::string voltages = slurp(d1 / "voltages.csv");
    CHECK(count_lines(currents) == a.records.size() + 1);
    CHECK(count_lines(voltages) == a.records.size() + 1);
    CHECK(count_fields(currents.substr(0, currents.find('\r'))) == 2 + 41);
    CHECK(count_fields(voltages.substr(0, voltages.find('\r'))) == 2 + 30);
    const json summary = json::parse(slurp(d1 / "summary.json"));
    CHECK(summary["periods"] == a.records.size());
    CHECK(summary["effective_config"]["run"]["horizon"] == 400);
}

TEST_CASE("schedule steps change the disturbance") {
    json doc = case2_doc();
    doc["schedule"] = json::array({{{"t", 0}, {"load_scale", 1.0}}, {{"t", 100}, {"load_scale", 0.5}, {"available_scale", 0.5}}});
    const Scenario sc = case2_scenario(doc);
    const ScenarioModel model = build_model(sc);
    CHECK(model.disturbance_at(sc, 99.0).p_load[1] == doctest::Approx(0.5));
    CHECK(model.disturbance_at(sc, 100.0).p_load[1] == doctest::Approx(0.25));
    CHECK(model.available_at(sc, 150.0)[0] == doctest::Approx(0.15));
    const SimLog lg = run_closed_loop(sc, Architecture::Centralized);
    // After the step the unit must come down to the halved availability.
    CHECK(lg.records.back().u[0] <= 0.15 + 1e-12);
}

TEST_CASE("plant failure keeps the partial log") {
    json doc = case2_doc();
    doc["schedule"] = json::array({{{"t", 0}}, {{"t", 50}, {"load_scale", 100.0}}});
    const SimLog lg = run_closed_loop(case2_scenario(doc), Architecture::Centralized);
    CHECK(lg.plant_failed);
    CHECK(lg.records.size() == 5);
    CHECK_FALSE(lg.failure.empty());
}

TEST_CASE("toy two-area comparison matches the closed form") {
    // u = [p1, q1, p2, q2]; y0 = p1 + 0.8 p2 + 1.5 watched by area 1 only.
    const double c1 = 1.0, c2 = 5.0, a1 = 5.0, a2 = 1.0, rho = 2.0, g1 = 1.0, g2 = 0.8, off = 1.5, d = 1.2;
    Matrix g = Matrix::Zero(2, 4);
    g(0, 0) = g1;
    g(0, 2) = g2;
    g(1, 2) = 1.0;
    LinearPlant plant(g, Vector((Vector(2) << off, 0.0).finished()));

    auto unit = [&](int area, std::size_t offset, double c, double a, std::vector<std::size_t> outputs, bool watch) {
        AreaController ctl;
        ctl.area = area;
        ctl.gamma = 0.05;
        ctl.offset = offset;
        ctl.size = 2;
        ctl.outputs = std::move(outputs);
        ctl.cost.curtail_weights = Vector::Constant(1, c);
        ctl.cost.q_weights = Vector::Constant(1, 1.0);
        ctl.cost.p_available = Vector::Constant(1, a);
        ctl.penalty.rho = rho;
        ctl.penalty.C = watch ? Matrix::Ones(1, 1) : Matrix(0, 1);
        ctl.penalty.d = watch ? Vector::Constant(1, d) : Vector(0);
        ctl.A = Matrix(4, 2);
        ctl.A << 1, 0, -1, 0, 0, 1, 0, -1;
        ctl.b = Vector((Vector(4) << a, 0.0, 1.0, 1.0).finished());
        return ctl;
    };
    const std::vector<AreaController> areas = {unit(1, 0, c1, a1, {0}, true), unit(2, 2, c2, a2, {1}, false)};

    AreaController central;
    central.gamma = 0.05;
    central.offset = 0;
    central.size = 4;
    central.outputs = {0, 1};
    central.cost.curtail_weights = Vector((Vector(2) << c1, c2).finished());
    central.cost.q_weights = Vector::Ones(2);
    central.cost.p_available = Vector((Vector(2) << a1, a2).finished());
    central.penalty.rho = rho;
    central.penalty.C = Matrix::Zero(1, 2);
    central.penalty.C(0, 0) = 1.0;
    central.penalty.d = Vector::Constant(1, d);
    central.A = Matrix::Zero(8, 4);
    central.A.topLeftCorner(4, 2) = areas[0].A;
    central.A.bottomRightCorner(4, 2) = areas[1].A;
    central.b = Vector(8);
    central.b << areas[0].b, areas[1].b;

    // Nash: area 2 ignores the line; area 1 balances its curtailment against the hinge.
    const double p1n = (c1 * a1 - rho * g1 * (g2 * a2 + off - d)) / (c1 + rho * g1 * g1);
    const double p2n = a2;
    // Social optimum: normal equations of the two-unit quadratic.
    Matrix k(2, 2);
    k << c1 + rho * g1 * g1, rho * g1 * g2, rho * g1 * g2, c2 + rho * g2 * g2;
    const Vector rhs = Vector((Vector(2) << c1 * a1 - rho * g1 * (off - d), c2 * a2 - rho * g2 * (off - d)).finished());
    const Vector ps = k.lu().solve(rhs);
    REQUIRE(ps[1] > 0.0);
    REQUIRE(ps[1] < a2);

    auto hinge = [&](double p1, double p2) { return std::max(0.0, g1 * p1 + g2 * p2 + off - d); };
    const double nash_curt = c1 * (a1 - p1n) * (a1 - p1n) + c2 * (a2 - p2n) * (a2 - p2n);
    const double soc_curt = c1 * (a1 - ps[0]) * (a1 - ps[0]) + c2 * (a2 - ps[1]) * (a2 - ps[1]);
    const double nash_social = nash_curt + rho * hinge(p1n, p2n) * hinge(p1n, p2n);
    const double soc_social = soc_curt + rho * hinge(ps[0], ps[1]) * hinge(ps[0], ps[1]);

    const Vector u0 = Vector::Zero(4);
    const ComparisonReport rep = compare_equilibria(areas, central, plant, u0, 1.0, 200000, 1e-14);
    CHECK(rep.multi_area_steady);
    CHECK(rep.centralized_steady);
    CHECK(rep.multi_area_curtailment_cost == doctest::Approx(nash_curt).epsilon(1e-6));
    CHECK(rep.centralized_curtailment_cost == doctest::Approx(soc_curt).epsilon(1e-6));
    CHECK(rep.multi_area_social_cost == doctest::Approx(nash_social).epsilon(1e-6));
    CHECK(rep.centralized_social_cost == doctest::Approx(soc_social).epsilon(1e-6));
    CHECK(rep.cost_ratio == doctest::Approx(nash_curt / soc_curt).epsilon(1e-6));
    CHECK(rep.multi_area_curtailed_mw == doctest::Approx((a1 - p1n) + (a2 - p2n)).epsilon(1e-6));
    CHECK(rep.social_cost_ordering);
    CHECK(rep.incentive_misalignment);  // area 2 pays nothing at Nash

    double sum = 0.0;
    for (const auto& a : rep.multi_area) sum += a.curtailment_cost;
    CHECK(sum == doctest::Approx(rep.multi_area_curtailment_cost));
}

TEST_CASE("no active output constraints: ratio one") {
    // Same toy with the line limit far away: nobody curtails.
    Matrix g = Matrix::Zero(1, 2);
    g(0, 0) = 1.0;
    LinearPlant plant(g, Vector::Zero(1));
    AreaController c;
    c.gamma = 0.1;
    c.offset = 0;
    c.size = 2;
    c.outputs = {0};
    c.cost.curtail_weights = Vector::Ones(1);
    c.cost.q_weights = Vector::Ones(1);
    c.cost.p_available = Vector::Constant(1, 0.5);
    c.penalty.C = Matrix::Ones(1, 1);
    c.penalty.d = Vector::Constant(1, 10.0);
    c.A = Matrix(4, 2);
    c.A << 1, 0, -1, 0, 0, 1, 0, -1;
    c.b = Vector((Vector(4) << 0.5, 0.0, 1.0, 1.0).finished());
    const auto rep = compare_equilibria({c}, c, plant, Vector::Zero(2));
    CHECK(rep.cost_ratio == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(rep.multi_area_curtailed_mw == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("case30 comparison: ordering, misalignment and constraint recovery") {
    const Scenario sc = load_scenario(testing::source_path("scenarios/default30.json"));
    const ComparisonReport rep = run_comparison(sc);
    CHECK(rep.multi_area_steady);
    CHECK(rep.centralized_steady);
    CHECK(rep.social_cost_ordering);
    CHECK(rep.incentive_misalignment);
    CHECK(rep.cost_ratio > 1.0);

    double mw = 0.0;
    for (const auto& a : rep.multi_area) mw += a.curtailed_mw;
    CHECK(mw == doctest::Approx(rep.multi_area_curtailed_mw));

    // Soft-constraint bound on the tightened rows: rho v^2 <= J.
    Scenario run = sc;
    run.stop_at_steady_state = true;
    const SimLog lg = run_closed_loop(run, Architecture::MultiArea);
    REQUIRE(lg.steady_state_step.has_value());
    const auto tight = output_limits(sc.grid, sc.controllers.current_scale);
    const auto& last = lg.records.back();
    const double v = (tight.A * last.y - tight.b).maxCoeff();
    CHECK(v <= std::sqrt(last.social_cost / sc.controllers.rho));
    CHECK(last.max_violation <= 0.0);

    const json j = to_json(rep);
    CHECK(j["cost_ratio"].get<double>() == doctest::Approx(rep.cost_ratio));
    CHECK(j["effective_config"]["controllers"]["rho"] == sc.effective_config["controllers"]["rho"]);
}

TEST_CASE("CSV quoting") {
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(format_number(1.0 / 3.0) == "0.333333333333");
    CHECK(format_number(1e-20) == "1e-20");
}
