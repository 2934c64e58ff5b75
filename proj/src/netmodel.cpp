#include "gridloop/netmodel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "gridloop/error.hpp"
#include "gridloop/log.hpp"

namespace gridloop {

std::string_view to_string(BusKind kind) {
    switch (kind) {
        case BusKind::Slack: return "Slack";
        case BusKind::PV: return "PV";
        case BusKind::PQ: return "PQ";
    }
    return "PQ";
}

BusKind bus_kind_from_string(std::string_view s) {
    if (s == "Slack") return BusKind::Slack;
    if (s == "PV") return BusKind::PV;
    if (s == "PQ") return BusKind::PQ;
    throw Error(ErrorCode::InvalidField, fmt::format("unknown bus kind '{}'", s));
}

std::size_t GridCase::bus_index(int id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id) return i;
    throw Error(ErrorCode::UnknownBusReference, fmt::format("bus {} does not exist", id));
}

std::size_t GridCase::slack_index() const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].kind == BusKind::Slack) return i;
    throw Error(ErrorCode::InvalidField, "case has no slack bus");
}

namespace {

// Breadth-first reachability over in-service branches restricted to `members`.
bool connected(const GridCase& grid, const std::vector<bool>& members) {
    const std::size_t n = grid.n_bus();
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& br : grid.branches) {
        if (!br.in_service) continue;
        const auto f = grid.bus_index(br.from_bus);
        const auto t = grid.bus_index(br.to_bus);
        if (members[f] && members[t]) {
            adj[f].push_back(t);
            adj[t].push_back(f);
        }
    }
    const auto first = std::find(members.begin(), members.end(), true);
    if (first == members.end()) return true;
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> q;
    q.push(static_cast<std::size_t>(first - members.begin()));
    seen[q.front()] = true;
    while (!q.empty()) {
        const auto k = q.front();
        q.pop();
        for (auto j : adj[k])
            if (!seen[j]) {
                seen[j] = true;
                q.push(j);
            }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (members[i] && !seen[i]) return false;
    return true;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::InvalidField, what);
}

}  // namespace

void validate_case(const GridCase& grid) {
    require(grid.base_mva > 0.0, "base_mva must be positive");
    require(!grid.buses.empty(), "case has no buses");

    std::set<int> ids;
    int slack_count = 0;
    for (const auto& b : grid.buses) {
        if (!ids.insert(b.id).second)
            throw Error(ErrorCode::InvalidField, fmt::format("duplicate bus id {}", b.id));
        require(b.v_min > 0.0 && b.v_min <= b.v_max, fmt::format("bus {}: bad voltage limits", b.id));
        if (b.kind == BusKind::Slack) ++slack_count;
    }
    if (slack_count > 1)
        throw Error(ErrorCode::MultipleSlack, fmt::format("{} slack buses", slack_count));
    require(slack_count == 1, "case has no slack bus");

    for (std::size_t k = 0; k < grid.branches.size(); ++k) {
        const auto& br = grid.branches[k];
        (void)grid.bus_index(br.from_bus);
        (void)grid.bus_index(br.to_bus);
        require(br.from_bus != br.to_bus, fmt::format("branch {} is a self loop", k + 1));
        require(br.r >= 0.0, fmt::format("branch {}: negative resistance", k + 1));
        require(br.x != 0.0, fmt::format("branch {}: zero reactance", k + 1));
        require(br.current_limit >= 0.0, fmt::format("branch {}: negative current limit", k + 1));
        require(br.tap_ratio > 0.0, fmt::format("branch {}: non-positive tap ratio", k + 1));
    }

    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        (void)grid.bus_index(gen.bus);
        constexpr double slop = 1e-12;
        require(gen.p_min <= gen.p_set + slop && gen.p_set <= gen.p_max + slop,
                fmt::format("generator {}: p_set outside [p_min, p_max]", g + 1));
        require(gen.q_min <= gen.q_set + slop && gen.q_set <= gen.q_max + slop,
                fmt::format("generator {}: q_set outside [q_min, q_max]", g + 1));
        require(gen.p_available >= 0.0, fmt::format("generator {}: negative p_available", g + 1));
        require(gen.cost_curtail >= 0.0 && gen.cost_q >= 0.0,
                fmt::format("generator {}: negative cost", g + 1));
    }

    if (!connected(grid, std::vector<bool>(grid.n_bus(), true)))
        throw Error(ErrorCode::DisconnectedGraph, "in-service branches do not connect all buses");
}

// ---------------------------------------------------------------------------
// MATPOWER text

namespace {

using Table = std::vector<std::vector<double>>;

// Costs used when the case has no gen_ofo table, per MW^2 and per MVAr^2.
constexpr double kDefaultCostCurtail = 0.1;
constexpr double kDefaultCostQ = 1e-2;

struct MatpowerDoc {
    double base_mva = 0.0;
    bool has_base = false;
    std::map<std::string, Table> tables;
};

std::string strip_comments(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_comment = false;
    for (char c : text) {
        if (c == '%' || c == '#') in_comment = true;
        if (c == '\n') in_comment = false;
        if (!in_comment) out.push_back(c);
    }
    return out;
}

double parse_number(const std::string& tok, const std::string& table) {
    try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        if (tok == "Inf" || tok == "inf") return std::numeric_limits<double>::infinity();
        if (tok == "-Inf" || tok == "-inf") return -std::numeric_limits<double>::infinity();
        throw Error(ErrorCode::MalformedTable, fmt::format("table '{}': bad number '{}'", table, tok));
    }
}

Table parse_table_body(std::string_view body, const std::string& name) {
    Table rows;
    std::vector<double> row;
    std::string tok;
    auto flush_tok = [&] {
        if (!tok.empty()) {
            row.push_back(parse_number(tok, name));
            tok.clear();
        }
    };
    auto flush_row = [&] {
        flush_tok();
        if (!row.empty()) rows.push_back(std::move(row));
        row.clear();
    };
    for (char c : body) {
        if (c == ';' || c == '\n') flush_row();
        else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') flush_tok();
        else tok.push_back(c);
    }
    flush_row();
    return rows;
}

std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

MatpowerDoc scan_matpower(std::string_view raw) {
    const std::string text = strip_comments(raw);
    MatpowerDoc doc;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto eq = text.find('=', pos);
        if (eq == std::string::npos) break;
        const auto line_start = text.rfind('\n', eq);
        std::string lhs = trim(std::string_view(text).substr(
            line_start == std::string::npos ? 0 : line_start + 1,
            eq - (line_start == std::string::npos ? 0 : line_start + 1)));
        if (const auto dot = lhs.rfind('.'); dot != std::string::npos) lhs = lhs.substr(dot + 1);

        std::size_t k = eq + 1;
        while (k < text.size() && std::isspace(static_cast<unsigned char>(text[k]))) ++k;
        if (k < text.size() && text[k] == '[') {
            const auto close = text.find(']', k);
            if (close == std::string::npos)
                throw Error(ErrorCode::MalformedTable, fmt::format("table '{}' is not closed", lhs));
            doc.tables[lhs] = parse_table_body(std::string_view(text).substr(k + 1, close - k - 1), lhs);
            pos = close + 1;
        } else {
            auto end = text.find_first_of(";\n", k);
            if (end == std::string::npos) end = text.size();
            const std::string rhs = trim(std::string_view(text).substr(k, end - k));
            if (lhs == "baseMVA") {
                doc.base_mva = parse_number(rhs, "baseMVA");
                doc.has_base = true;
            }
            pos = end;
        }
    }
    return doc;
}

const Table& checked_table(const MatpowerDoc& doc, const std::string& name, std::size_t min_cols,
                           std::size_t std_cols) {
    const auto it = doc.tables.find(name);
    if (it == doc.tables.end())
        throw Error(ErrorCode::MalformedTable, fmt::format("missing table '{}'", name));
    const Table& t = it->second;
    if (t.empty()) throw Error(ErrorCode::MalformedTable, fmt::format("table '{}' is empty", name));
    const std::size_t width = t.front().size();
    for (std::size_t r = 0; r < t.size(); ++r) {
        if (t[r].size() != width || width < min_cols)
            throw Error(ErrorCode::MalformedTable,
                        fmt::format("table '{}' row {} has {} columns, expected {}", name, r + 1,
                                    t[r].size(), width < min_cols ? min_cols : width));
    }
    if (width > std_cols)
        log().warn("table '{}': ignoring {} extra columns", name, width - std_cols);
    return t;
}

}  // namespace

GridCase parse_matpower_case(std::string_view text) {
    const MatpowerDoc doc = scan_matpower(text);
    if (!doc.has_base) throw Error(ErrorCode::MalformedTable, "missing baseMVA");

    GridCase grid;
    grid.base_mva = doc.base_mva;
    const double base = doc.base_mva;

    const Table& bus = checked_table(doc, "bus", 13, 13);
    for (const auto& row : bus) {
        Bus b;
        b.id = static_cast<int>(row[0]);
        switch (static_cast<int>(row[1])) {
            case 3: b.kind = BusKind::Slack; break;
            case 2: b.kind = BusKind::PV; break;
            case 1: b.kind = BusKind::PQ; break;
            default:
                throw Error(ErrorCode::InvalidField,
                            fmt::format("bus {}: unsupported type code {}", b.id, row[1]));
        }
        b.p_load = row[2] / base;
        b.q_load = row[3] / base;
        b.shunt_g = row[4] / base;
        b.shunt_b = row[5] / base;
        b.base_kv = row[9];
        b.v_max = row[11];
        b.v_min = row[12];
        grid.buses.push_back(b);
    }

    const Table& gen = checked_table(doc, "gen", 10, 21);
    std::vector<std::size_t> gen_rows;
    for (std::size_t r = 0; r < gen.size(); ++r) {
        const auto& row = gen[r];
        if (row[7] <= 0.0) {
            log().warn("generator row {} is out of service; skipped", r + 1);
            continue;
        }
        Generator g;
        g.bus = static_cast<int>(row[0]);
        g.p_set = row[1] / base;
        g.q_set = row[2] / base;
        g.q_max = row[3] / base;
        g.q_min = row[4] / base;
        g.v_set = row[5];
        g.p_max = row[8] / base;
        g.p_min = row[9] / base;
        const auto bi = grid.bus_index(g.bus);
        g.controllable = grid.buses[bi].kind == BusKind::PQ;
        g.p_available = g.controllable ? g.p_max : 0.0;
        g.cost_curtail = kDefaultCostCurtail * base * base;
        g.cost_q = kDefaultCostQ * base * base;
        grid.generators.push_back(g);
        gen_rows.push_back(r);
    }

    // Optional per-generator table: [p_available(MW) cost_curtail(/MW^2) cost_q(/MVAr^2) controllable]
    if (doc.tables.contains("gen_ofo")) {
        const Table& ofo = checked_table(doc, "gen_ofo", 4, 4);
        if (ofo.size() != gen.size())
            throw Error(ErrorCode::MalformedTable, "table 'gen_ofo' must have one row per gen row");
        for (std::size_t k = 0; k < gen_rows.size(); ++k) {
            const auto& row = ofo[gen_rows[k]];
            auto& g = grid.generators[k];
            g.p_available = row[0] / base;
            g.cost_curtail = row[1] * base * base;
            g.cost_q = row[2] * base * base;
            g.controllable = row[3] != 0.0;
        }
    }

    // PV buses keep their regulated voltage from the first attached generator.
    for (auto& b : grid.buses) {
        if (b.kind == BusKind::PQ) continue;
        const auto it = std::find_if(grid.generators.begin(), grid.generators.end(),
                                     [&](const Generator& g) { return g.bus == b.id; });
        if (it == grid.generators.end() && b.kind == BusKind::PV) {
            log().warn("PV bus {} has no generator; treated as PQ", b.id);
            b.kind = BusKind::PQ;
        }
    }

    const Table& branch = checked_table(doc, "branch", 13, 13);
    for (const auto& row : branch) {
        Branch br;
        br.from_bus = static_cast<int>(row[0]);
        br.to_bus = static_cast<int>(row[1]);
        br.r = row[2];
        br.x = row[3];
        br.b_charging = row[4];
        br.current_limit = row[5] / base;
        br.tap_ratio = row[8] == 0.0 ? 1.0 : row[8];
        br.phase_shift = row[9] * std::numbers::pi / 180.0;
        br.in_service = row[10] != 0.0;
        grid.branches.push_back(br);
    }

    validate_case(grid);
    return grid;
}

GridCase load_case_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open '{}'", path));
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return parse_json_case(text);
    return parse_matpower_case(text);
}

// ---------------------------------------------------------------------------
// Canonical JSON

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }
std::string flag(bool v) { return v ? "true" : "false"; }

}  // namespace

std::string emit_json_case(const GridCase& grid) {
    std::string out;
    out += "{\n  \"base_mva\": " + num(grid.base_mva) + ",\n  \"buses\": [";
    for (std::size_t i = 0; i < grid.buses.size(); ++i) {
        const auto& b = grid.buses[i];
        out += i ? ",\n    " : "\n    ";
        out += fmt::format(
            "{{\"id\": {}, \"kind\": \"{}\", \"p_load\": {}, \"q_load\": {}, \"shunt_g\": {}, "
            "\"shunt_b\": {}, \"v_min\": {}, \"v_max\": {}, \"base_kv\": {}}}",
            b.id, to_string(b.kind), num(b.p_load), num(b.q_load), num(b.shunt_g), num(b.shunt_b),
            num(b.v_min), num(b.v_max), num(b.base_kv));
    }
    out += "\n  ],\n  \"branches\": [";
    for (std::size_t i = 0; i < grid.branches.size(); ++i) {
        const auto& br = grid.branches[i];
        out += i ? ",\n    " : "\n    ";
        out += fmt::format(
            "{{\"from_bus\": {}, \"to_bus\": {}, \"r\": {}, \"x\": {}, \"b_charging\": {}, "
            "\"current_limit\": {}, \"tap_ratio\": {}, \"phase_shift\": {}, \"in_service\": {}}}",
            br.from_bus, br.to_bus, num(br.r), num(br.x), num(br.b_charging), num(br.current_limit),
            num(br.tap_ratio), num(br.phase_shift), flag(br.in_service));
    }
    out += "\n  ],\n  \"generators\": [";
    for (std::size_t i = 0; i < grid.generators.size(); ++i) {
        const auto& g = grid.generators[i];
        out += i ? ",\n    " : "\n    ";
        out += fmt::format(
            "{{\"bus\": {}, \"p_set\": {}, \"q_set\": {}, \"p_min\": {}, \"p_max\": {}, "
            "\"q_min\": {}, \"q_max\": {}, \"v_set\": {}, \"controllable\": {}, "
            "\"p_available\": {}, \"cost_curtail\": {}, \"cost_q\": {}}}",
            g.bus, num(g.p_set), num(g.q_set), num(g.p_min), num(g.p_max), num(g.q_min),
            num(g.q_max), num(g.v_set), flag(g.controllable), num(g.p_available),
            num(g.cost_curtail), num(g.cost_q));
    }
    out += "\n  ]\n}\n";
    return out;
}

namespace {

template <class T>
T field(const nlohmann::json& obj, const char* key, const char* where) {
    const auto it = obj.find(key);
    if (it == obj.end())
        throw Error(ErrorCode::MalformedTable, fmt::format("{}: missing field '{}'", where, key));
    try {
        return it->template get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::MalformedTable, fmt::format("{}: field '{}' has wrong type", where, key));
    }
}

}  // namespace

GridCase parse_json_case(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::MalformedTable, fmt::format("invalid JSON: {}", e.what()));
    }
    if (!doc.is_object()) throw Error(ErrorCode::MalformedTable, "case JSON must be an object");

    GridCase grid;
    grid.base_mva = field<double>(doc, "base_mva", "case");
    for (const auto& j : field<nlohmann::json>(doc, "buses", "case")) {
        Bus b;
        b.id = field<int>(j, "id", "bus");
        b.kind = bus_kind_from_string(field<std::string>(j, "kind", "bus"));
        b.p_load = field<double>(j, "p_load", "bus");
        b.q_load = field<double>(j, "q_load", "bus");
        b.shunt_g = field<double>(j, "shunt_g", "bus");
        b.shunt_b = field<double>(j, "shunt_b", "bus");
        b.v_min = field<double>(j, "v_min", "bus");
        b.v_max = field<double>(j, "v_max", "bus");
        b.base_kv = field<double>(j, "base_kv", "bus");
        grid.buses.push_back(b);
    }
    for (const auto& j : field<nlohmann::json>(doc, "branches", "case")) {
        Branch br;
        br.from_bus = field<int>(j, "from_bus", "branch");
        br.to_bus = field<int>(j, "to_bus", "branch");
        br.r = field<double>(j, "r", "branch");
        br.x = field<double>(j, "x", "branch");
        br.b_charging = field<double>(j, "b_charging", "branch");
        br.current_limit = field<double>(j, "current_limit", "branch");
        br.tap_ratio = field<double>(j, "tap_ratio", "branch");
        br.phase_shift = field<double>(j, "phase_shift", "branch");
        br.in_service = field<bool>(j, "in_service", "branch");
        grid.branches.push_back(br);
    }
    for (const auto& j : field<nlohmann::json>(doc, "generators", "case")) {
        Generator g;
        g.bus = field<int>(j, "bus", "generator");
        g.p_set = field<double>(j, "p_set", "generator");
        g.q_set = field<double>(j, "q_set", "generator");
        g.p_min = field<double>(j, "p_min", "generator");
        g.p_max = field<double>(j, "p_max", "generator");
        g.q_min = field<double>(j, "q_min", "generator");
        g.q_max = field<double>(j, "q_max", "generator");
        g.v_set = field<double>(j, "v_set", "generator");
        g.controllable = field<bool>(j, "controllable", "generator");
        g.p_available = field<double>(j, "p_available", "generator");
        g.cost_curtail = field<double>(j, "cost_curtail", "generator");
        g.cost_q = field<double>(j, "cost_q", "generator");
        grid.generators.push_back(g);
    }
    validate_case(grid);
    return grid;
}

// ---------------------------------------------------------------------------
// Admittance

BranchAdmittance branch_admittance(const Branch& br) {
    using C = std::complex<double>;
    const C ys = 1.0 / C(br.r, br.x);
    const C bc(0.0, br.b_charging / 2.0);
    const C tap = std::polar(br.tap_ratio, br.phase_shift);
    BranchAdmittance a;
    a.ytt = ys + bc;
    a.yff = a.ytt / (tap * std::conj(tap));
    a.yft = -ys / std::conj(tap);
    a.ytf = -ys / tap;
    return a;
}

AdmittanceMatrix build_admittance(const GridCase& grid) {
    using C = std::complex<double>;
    const auto n = static_cast<Eigen::Index>(grid.n_bus());
    std::vector<Eigen::Triplet<C>> trips;
    trips.reserve(grid.n_bus() + 4 * grid.n_branch());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& b = grid.buses[static_cast<std::size_t>(i)];
        trips.emplace_back(i, i, C(b.shunt_g, b.shunt_b));
    }
    for (const auto& br : grid.branches) {
        if (!br.in_service) continue;
        const auto f = static_cast<Eigen::Index>(grid.bus_index(br.from_bus));
        const auto t = static_cast<Eigen::Index>(grid.bus_index(br.to_bus));
        const auto a = branch_admittance(br);
        trips.emplace_back(f, f, a.yff);
        trips.emplace_back(f, t, a.yft);
        trips.emplace_back(t, f, a.ytf);
        trips.emplace_back(t, t, a.ytt);
    }
    AdmittanceMatrix y(n, n);
    y.setFromTriplets(trips.begin(), trips.end());
    y.makeCompressed();
    return y;
}

// ---------------------------------------------------------------------------
// Partitions

AreaPartition AreaPartition::single_area(const GridCase& grid) {
    AreaPartition p;
    p.n_areas = 1;
    for (const auto& b : grid.buses) p.bus_area[b.id] = 1;
    return p;
}

int AreaPartition::area_of(int bus_id) const {
    const auto it = bus_area.find(bus_id);
    if (it == bus_area.end())
        throw Error(ErrorCode::UnassignedBus, fmt::format("bus {} has no area", bus_id));
    return it->second;
}

std::vector<std::size_t> validate_partition(const GridCase& grid, AreaPartition& partition) {
    if (partition.n_areas < 1) throw Error(ErrorCode::InvalidConfig, "n_areas must be >= 1");
    for (const auto& b : grid.buses) {
        const int a = partition.area_of(b.id);
        if (a < 1 || a > partition.n_areas)
            throw Error(ErrorCode::UnassignedBus,
                        fmt::format("bus {} assigned to area {} outside 1..{}", b.id, a, partition.n_areas));
    }
    for (const auto& [id, area] : partition.bus_area) {
        (void)area;
        (void)grid.bus_index(id);
    }

    for (int a = 1; a <= partition.n_areas; ++a) {
        std::vector<bool> members(grid.n_bus(), false);
        bool any = false;
        for (std::size_t i = 0; i < grid.n_bus(); ++i) {
            members[i] = partition.area_of(grid.buses[i].id) == a;
            any = any || members[i];
        }
        if (!any) throw Error(ErrorCode::DisconnectedArea, fmt::format("area {} has no buses", a));
        if (!connected(grid, members))
            throw Error(ErrorCode::DisconnectedArea, fmt::format("area {} is not connected", a));
    }

    partition.tie_lines.clear();
    for (std::size_t k = 0; k < grid.n_branch(); ++k) {
        const auto& br = grid.branches[k];
        if (partition.area_of(br.from_bus) != partition.area_of(br.to_bus))
            partition.tie_lines.push_back(k);
    }
    partition.controllable_by_area.assign(static_cast<std::size_t>(partition.n_areas), {});
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        if (!gen.controllable) continue;
        const auto kind = grid.buses[grid.bus_index(gen.bus)].kind;
        if (kind == BusKind::Slack) continue;
        partition.controllable_by_area[static_cast<std::size_t>(partition.area_of(gen.bus) - 1)]
            .push_back(g);
    }
    return partition.tie_lines;
}

std::vector<std::size_t> area_output_indices(const GridCase& grid, const AreaPartition& partition,
                                             int area) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < grid.n_bus(); ++i)
        if (partition.area_of(grid.buses[i].id) == area) idx.push_back(i);
    for (std::size_t k = 0; k < grid.n_branch(); ++k) {
        const auto& br = grid.branches[k];
        if (partition.area_of(br.from_bus) == area || partition.area_of(br.to_bus) == area)
            idx.push_back(grid.n_bus() + k);
    }
    return idx;
}

}  // namespace gridloop
