#include <doctest.h>

#include <algorithm>
#include <set>

#include "gridloop/error.hpp"
#include "support.hpp"

using namespace gridloop;

namespace {

// Minimal MATPOWER text with caller-supplied tables.
std::string mini_case(const std::string& bus, const std::string& gen, const std::string& branch) {
    return "function mpc = t\nmpc.baseMVA = 100;\nmpc.bus = [\n" + bus + "];\nmpc.gen = [\n" + gen +
           "];\nmpc.branch = [\n" + branch + "];\n";
}

const std::string kBus2 =
    "1 3 0 0 0 0 1 1 0 20 1 1.05 0.95;\n"
    "2 1 10 5 0 0 1 1 0 20 1 1.05 0.95;\n";
const std::string kGen1 = "1 0 0 50 -50 1 100 1 100 0;\n";
const std::string kBranch12 = "1 2 0 0.1 0 0 0 0 0 0 1 -360 360;\n";

ErrorCode code_of(const std::string& text) {
    try {
        parse_matpower_case(text);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::Io;
}

}  // namespace

TEST_CASE("case30 dimensions and units") {
    const auto& g = testing::case30();
    CHECK(g.n_bus() == 30);
    CHECK(g.n_branch() == 41);
    CHECK(g.generators.size() == 9);
    CHECK(g.base_mva == 100.0);
    CHECK(g.buses[g.slack_index()].id == 1);
    // Bus 8 load is 30 MW, 30 MVAr.
    CHECK(g.buses[g.bus_index(8)].p_load == doctest::Approx(0.30));
    CHECK(g.buses[g.bus_index(8)].q_load == doctest::Approx(0.30));
    // rateA 32 MVA on branch 6-28.
    CHECK(g.branches[40].current_limit == doctest::Approx(0.32));
    const auto n_ctrl = std::count_if(g.generators.begin(), g.generators.end(), [](auto& x) { return x.controllable; });
    CHECK(n_ctrl == 3);
    CHECK(g.generators[6].cost_curtail == doctest::Approx(0.2 * 1e4));
    CHECK(g.generators[6].p_available == doctest::Approx(0.40));
}

TEST_CASE("admittance structure") {
    const auto& g = testing::case30();
    const auto y = build_admittance(g);
    CHECK(y.nonZeros() == 112);  // 30 diagonal + 2 per branch, no parallel lines

    GridCase two;
    two.buses = {{1, BusKind::Slack}, {2, BusKind::PQ}};
    Branch br;
    br.from_bus = 1;
    br.to_bus = 2;
    br.x = 0.1;
    two.branches = {br};
    const auto y2 = Eigen::MatrixXcd(build_admittance(two));
    CHECK(y2(0, 1).real() == doctest::Approx(0.0));
    CHECK(y2(0, 1).imag() == doctest::Approx(10.0));
    CHECK(y2(0, 0).imag() == doctest::Approx(-10.0));
}

TEST_CASE("branch admittance matches the transformer two-port") {
    Branch br;
    br.from_bus = 1;
    br.to_bus = 2;
    br.r = 0.02;
    br.x = 0.08;
    br.b_charging = 0.04;
    br.tap_ratio = 0.97;
    br.phase_shift = 0.05;
    const auto a = branch_admittance(br);

    const std::complex<double> t = std::polar(br.tap_ratio, br.phase_shift);
    const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
    const std::complex<double> jb2(0.0, br.b_charging / 2.0);
    const std::complex<double> vf = std::polar(1.02, 0.1), vt = std::polar(0.98, -0.05);
    // Ideal t:1 transformer at the from end, then the pi section.
    const std::complex<double> vi = vf / t;
    const std::complex<double> i_series = ys * (vi - vt) + jb2 * vi;
    const std::complex<double> i_from = i_series / std::conj(t);
    const std::complex<double> i_to = ys * (vt - vi) + jb2 * vt;
    CHECK(std::abs(a.yff * vf + a.yft * vt - i_from) < 1e-12);
    CHECK(std::abs(a.ytf * vf + a.ytt * vt - i_to) < 1e-12);
}

TEST_CASE("JSON round trip is field-identical and deterministic") {
    const auto& g = testing::case30();
    const std::string a = emit_json_case(g);
    const GridCase back = parse_json_case(a);
    CHECK(back == g);
    CHECK(emit_json_case(back) == a);
    CHECK(emit_json_case(g) == a);
}

TEST_CASE("parser rejects malformed input") {
    CHECK(code_of(mini_case(kBus2, kGen1, "1 2 0 0.1 0 0 0 0 0 0 1;\n")) == ErrorCode::MalformedTable);
    CHECK(code_of(mini_case(kBus2 + "3 1 0 0 0 0 1 1 0 20 1 1.05;\n", kGen1, kBranch12)) == ErrorCode::MalformedTable);
    CHECK(code_of(mini_case(kBus2, kGen1, "1 9 0 0.1 0 0 0 0 0 0 1 -360 360;\n")) ==
          ErrorCode::UnknownBusReference);
    CHECK(code_of(mini_case("1 3 0 0 0 0 1 1 0 20 1 1.05 0.95;\n2 3 0 0 0 0 1 1 0 20 1 1.05 0.95;\n", kGen1,
                            kBranch12)) == ErrorCode::MultipleSlack);
    CHECK(code_of(mini_case(kBus2 + "3 1 1 0 0 0 1 1 0 20 1 1.05 0.95;\n", kGen1, kBranch12)) ==
          ErrorCode::DisconnectedGraph);
    CHECK(code_of(mini_case(kBus2, kGen1, "1 2 0 0 0 0 0 0 0 0 1 -360 360;\n")) == ErrorCode::InvalidField);
    CHECK(code_of(mini_case("1 3 0 0 0 0 1 1 0 20 1 0.9 0.95;\n2 1 0 0 0 0 1 1 0 20 1 1.05 0.95;\n", kGen1,
                            kBranch12)) == ErrorCode::InvalidField);
    CHECK(code_of("mpc.baseMVA = 100;\n") == ErrorCode::MalformedTable);
}

TEST_CASE("mini case parses with defaults") {
    const auto g = parse_matpower_case(mini_case(kBus2, kGen1, kBranch12));
    CHECK(g.n_bus() == 2);
    CHECK(g.branches[0].tap_ratio == 1.0);
    CHECK(g.branches[0].current_limit == 0.0);
    CHECK_FALSE(g.generators[0].controllable);
    // Without gen_ofo: 0.1 per MW^2 and 0.01 per MVAr^2, stored per p.u.^2.
    CHECK(g.generators[0].cost_curtail == doctest::Approx(0.1 * g.base_mva * g.base_mva));
    CHECK(g.generators[0].cost_q == doctest::Approx(0.01 * g.base_mva * g.base_mva));
}

TEST_CASE("three-area partition of case30") {
    const auto& g = testing::case30();
    AreaPartition p;
    p.n_areas = 3;
    const std::vector<std::vector<int>> areas = {{1, 2, 3, 4, 5, 6, 7, 8, 9, 11, 28},
                                                 {12, 13, 14, 15, 16, 17, 18, 19, 20, 23},
                                                 {10, 21, 22, 24, 25, 26, 27, 29, 30}};
    for (std::size_t a = 0; a < areas.size(); ++a)
        for (int id : areas[a]) p.bus_area[id] = static_cast<int>(a) + 1;
    const auto ties = validate_partition(g, p);

    std::set<std::size_t> expected;
    for (std::size_t k = 0; k < g.n_branch(); ++k)
        if (p.bus_area[g.branches[k].from_bus] != p.bus_area[g.branches[k].to_bus]) expected.insert(k);
    CHECK(std::set<std::size_t>(ties.begin(), ties.end()) == expected);
    CHECK(expected.count(35) == 1);  // 28-27

    // One renewable per area; slack bus generator excluded.
    REQUIRE(p.controllable_by_area.size() == 3);
    for (const auto& units : p.controllable_by_area) CHECK(units.size() == 1);

    // Tie-line currents are observed by both sides.
    const auto o1 = area_output_indices(g, p, 1);
    const auto o3 = area_output_indices(g, p, 3);
    const std::size_t tie = g.n_bus() + 35;
    CHECK(std::count(o1.begin(), o1.end(), tie) == 1);
    CHECK(std::count(o3.begin(), o3.end(), tie) == 1);
    CHECK(std::count(o1.begin(), o1.end(), g.bus_index(28)) == 1);
    CHECK(std::count(o3.begin(), o3.end(), g.bus_index(28)) == 0);
}

TEST_CASE("partition errors") {
    const auto& g = testing::case30();
    AreaPartition p = AreaPartition::single_area(g);
    p.bus_area.erase(30);
    CHECK_THROWS_AS(validate_partition(g, p), Error);
    try {
        validate_partition(g, p);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnassignedBus);
    }

    AreaPartition q = AreaPartition::single_area(g);
    q.n_areas = 2;
    q.bus_area[1] = 2;
    q.bus_area[30] = 2;  // {1, 30} is not connected
    try {
        validate_partition(g, q);
        FAIL("expected DisconnectedArea");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DisconnectedArea);
    }
}
