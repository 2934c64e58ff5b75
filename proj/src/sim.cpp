#include "gridloop/sim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gridloop/error.hpp"
#include "gridloop/log.hpp"

namespace gridloop {

using Eigen::Index;
using nlohmann::json;

namespace {

constexpr double kSteadyResidual = 1e-6;
constexpr int kSteadyWindow = 10;

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return fallback;
    try {
        return it->template get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("scenario field '{}' has the wrong type", key));
    }
}

const json& section(const json& doc, const char* key) {
    static const json empty = json::object();
    const auto it = doc.find(key);
    return it == doc.end() || it->is_null() ? empty : *it;
}

}  // namespace

std::string format_number(double v) { return fmt::format("{:.12g}", v); }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// ---------------------------------------------------------------------------
// Scenario document

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw Error(ErrorCode::Usage, fmt::format("override '{}' is not KEY=VALUE", assignment));
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;
    }
    std::string pointer;
    std::stringstream ss(key);
    for (std::string part; std::getline(ss, part, '.');) pointer += "/" + part;
    doc[json::json_pointer(pointer)] = value;
}

std::size_t Scenario::periods() const {
    return static_cast<std::size_t>(std::floor(horizon / sampling_period + 1e-9));
}

void Scenario::validate() const {
    if (!(sampling_period > 0.0) || horizon < sampling_period)
        throw Error(ErrorCode::InvalidConfig, "need horizon >= sampling_period > 0");
    if (schedule.empty() || schedule.front().t > 0.0)
        throw Error(ErrorCode::InvalidConfig, "schedule must start at t = 0");
    for (std::size_t i = 1; i < schedule.size(); ++i)
        if (schedule[i].t <= schedule[i - 1].t)
            throw Error(ErrorCode::InvalidConfig, "schedule times must increase");
    for (const auto& e : schedule)
        if (e.load_scale < 0.0 || e.available_scale < 0.0)
            throw Error(ErrorCode::InvalidConfig, "schedule scales must be nonnegative");
    if (controllers.refresh_every_k < 1) throw Error(ErrorCode::InvalidConfig, "refresh_every_k must be >= 1");
    if (!(controllers.rho > 0.0) || !(controllers.beta > 0.0))
        throw Error(ErrorCode::InvalidConfig, "rho and beta must be positive");
    if (controllers.alpha && !(*controllers.alpha > 0.0)) throw Error(ErrorCode::InvalidConfig, "alpha must be positive");
    if (controllers.gamma) {
        if (controllers.gamma->size() != static_cast<std::size_t>(partition.n_areas))
            throw Error(ErrorCode::InvalidConfig, "one gamma per area required");
        for (double g : *controllers.gamma)
            if (!(g > 0.0)) throw Error(ErrorCode::InvalidConfig, "gamma must be positive");
    }
}

Scenario parse_scenario(const json& doc, const std::string& base_dir) {
    if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "scenario must be a JSON object");
    Scenario sc;
    sc.effective_config = doc;

    // case
    const json& cs = section(doc, "case");
    const auto path = get_or<std::string>(cs, "path", "");
    if (path.empty()) throw Error(ErrorCode::InvalidConfig, "scenario needs case.path");
    const std::filesystem::path p(path);
    sc.grid = load_case_file(p.is_absolute() ? path : (std::filesystem::path(base_dir) / p).string());
    for (const auto& lim : section(cs, "branch_limits")) {
        const auto k = get_or<int>(lim, "branch", 0);
        if (k < 1 || static_cast<std::size_t>(k) > sc.grid.n_branch())
            throw Error(ErrorCode::InvalidConfig, fmt::format("branch_limits: no branch {}", k));
        sc.grid.branches[static_cast<std::size_t>(k - 1)].current_limit = get_or<double>(lim, "limit_mva", 0.0) / sc.grid.base_mva;
    }
    for (const auto& gen : section(cs, "generators")) {
        const auto g = get_or<int>(gen, "index", 0);
        if (g < 1 || static_cast<std::size_t>(g) > sc.grid.generators.size())
            throw Error(ErrorCode::InvalidConfig, fmt::format("generators: no generator {}", g));
        auto& unit = sc.grid.generators[static_cast<std::size_t>(g - 1)];
        const double base = sc.grid.base_mva;
        if (gen.contains("p_available_mw")) unit.p_available = get_or<double>(gen, "p_available_mw", 0.0) / base;
        if (gen.contains("cost_curtail")) unit.cost_curtail = get_or<double>(gen, "cost_curtail", 0.0) * base * base;
        if (gen.contains("cost_q")) unit.cost_q = get_or<double>(gen, "cost_q", 0.0) * base * base;
        if (gen.contains("controllable")) unit.controllable = get_or<bool>(gen, "controllable", false);
    }
    validate_case(sc.grid);

    // partition
    const json& part = section(doc, "partition");
    if (part.contains("areas")) {
        sc.partition.n_areas = static_cast<int>(part["areas"].size());
        int a = 1;
        for (const auto& area : part["areas"]) {
            for (const auto& id : area) sc.partition.bus_area[id.get<int>()] = a;
            ++a;
        }
    } else {
        sc.partition = AreaPartition::single_area(sc.grid);
    }
    validate_partition(sc.grid, sc.partition);

    // controllers
    const json& ctl = section(doc, "controllers");
    auto& s = sc.controllers;
    s.mode = controller_mode_from_string(get_or<std::string>(ctl, "mode", "ProjectedDescent"));
    if (ctl.contains("alpha") && !ctl["alpha"].is_null()) s.alpha = get_or<double>(ctl, "alpha", 0.0);
    s.beta = get_or<double>(ctl, "beta", s.beta);
    s.rho = get_or<double>(ctl, "rho", s.rho);
    if (ctl.contains("gamma") && !ctl["gamma"].is_null()) {
        const json& g = ctl["gamma"];
        if (g.is_number()) s.gamma = std::vector<double>(static_cast<std::size_t>(sc.partition.n_areas), g.get<double>());
        else s.gamma = g.get<std::vector<double>>();
    }
    s.gamma_factor = get_or<double>(ctl, "gamma_factor", s.gamma_factor);
    s.loss_weight = get_or<double>(ctl, "loss_weight", s.loss_weight);
    s.current_scale = get_or<double>(ctl, "current_scale", s.current_scale);
    s.refresh_every_k = get_or<int>(ctl, "refresh_every_k", s.refresh_every_k);
    const json& coco = section(ctl, "cocoercivity");
    s.cocoercivity.pairs = get_or<int>(coco, "pairs", s.cocoercivity.pairs);
    s.cocoercivity.radius = get_or<double>(coco, "radius_mw", s.cocoercivity.radius * sc.grid.base_mva) / sc.grid.base_mva;
    s.cocoercivity.seed = get_or<std::uint64_t>(coco, "seed", s.cocoercivity.seed);

    // schedule
    for (const auto& e : section(doc, "schedule")) {
        ScheduleEntry entry;
        entry.t = get_or<double>(e, "t", 0.0);
        entry.load_scale = get_or<double>(e, "load_scale", 1.0);
        entry.available_scale = get_or<double>(e, "available_scale", 1.0);
        sc.schedule.push_back(entry);
    }
    if (sc.schedule.empty()) sc.schedule.push_back({});

    // run
    const json& run = section(doc, "run");
    sc.sampling_period = get_or<double>(run, "sampling_period", sc.sampling_period);
    sc.horizon = get_or<double>(run, "horizon", sc.horizon);
    sc.stop_at_steady_state = get_or<bool>(run, "stop_at_steady_state", false);
    if (run.contains("initial_u") && !run["initial_u"].is_null()) {
        const auto v = run["initial_u"].get<std::vector<double>>();
        Vector u(static_cast<Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) u[static_cast<Index>(i)] = v[i] / sc.grid.base_mva;
        sc.initial_u = u;
    }
    sc.validate();
    return sc;
}

Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, fmt::format("cannot open scenario '{}'", path));
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, fmt::format("scenario '{}': {}", path, e.what()));
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return parse_scenario(doc, std::filesystem::path(path).parent_path().string());
}

// ---------------------------------------------------------------------------
// Model

namespace {

const ScheduleEntry& entry_at(const Scenario& sc, double t) {
    const ScheduleEntry* e = &sc.schedule.front();
    for (const auto& s : sc.schedule)
        if (s.t <= t + 1e-9) e = &s;
    return *e;
}

void set_availability(AreaController& c, const Vector& p_available_global) {
    const auto u0 = static_cast<Index>(c.offset / 2);
    for (Index j = 0; j < c.cost.p_available.size(); ++j) {
        c.cost.p_available[j] = p_available_global[u0 + j];
        const double p_min = -c.b[4 * j + 1];
        c.b[4 * j] = std::max(p_min, c.cost.p_available[j]);
    }
}

ControllerConfig central_config(const AreaController& central, const ControllerSettings& s, double alpha) {
    ControllerConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = s.beta;
    cfg.mode = s.mode;
    cfg.A = central.A;
    cfg.b = central.b;
    cfg.penalty = central.penalty;
    cfg.cost = central.cost;
    return cfg;
}

SamplingRegion sampling_region(const std::vector<AreaController>& ctrls, const Vector& center, double radius) {
    SamplingRegion r{center.array() - radius, center.array() + radius};
    // Clip into the input set, which is a box for grid controllers.
    for (const auto& c : ctrls) {
        for (std::size_t j = 0; j < c.size; ++j) {
            const auto gi = static_cast<Index>(c.offset + j);
            for (Index row = 0; row < c.A.rows(); ++row) {
                const double a = c.A(row, static_cast<Index>(j));
                if (a > 0.0) r.upper[gi] = std::min(r.upper[gi], c.b[row] / a);
                if (a < 0.0) r.lower[gi] = std::max(r.lower[gi], c.b[row] / a);
            }
            if (r.lower[gi] > r.upper[gi]) r.lower[gi] = r.upper[gi];
        }
    }
    return r;
}

}  // namespace

Disturbance ScenarioModel::disturbance_at(const Scenario& sc, double t) const {
    const auto& e = entry_at(sc, t);
    Disturbance w = nominal;
    w.p_load *= e.load_scale;
    w.q_load *= e.load_scale;
    return w;
}

Vector ScenarioModel::available_at(const Scenario& sc, double t) const {
    return cost.p_available * entry_at(sc, t).available_scale;
}

ScenarioModel build_model(const Scenario& sc) {
    ScenarioModel m;
    m.layout = InputLayout::build(sc.grid, sc.partition);
    m.nominal = Disturbance::from_case(sc.grid);
    m.cost = cost_from_case(sc.grid, m.layout, sc.controllers.loss_weight);

    AreaCostSettings acs{sc.controllers.rho, sc.controllers.loss_weight, sc.controllers.current_scale};
    m.areas = make_area_controllers(sc.grid, sc.partition, m.layout, m.cost, acs,
                                    std::vector<double>(static_cast<std::size_t>(sc.partition.n_areas), 1.0));

    InputLayout flat = m.layout;
    std::fill(flat.generator_area.begin(), flat.generator_area.end(), 1);
    flat.n_areas = 1;
    m.central = make_area_controllers(sc.grid, AreaPartition::single_area(sc.grid), flat, m.cost, acs, {1.0}).front();

    if (sc.initial_u) {
        if (sc.initial_u->size() != static_cast<Index>(m.layout.dim()))
            throw Error(ErrorCode::InvalidConfig,
                        fmt::format("initial_u has {} entries, layout needs {}", sc.initial_u->size(), m.layout.dim()));
        m.initial_u = *sc.initial_u;
    } else {
        m.initial_u = m.layout.initial_input(sc.grid);
        const Vector avail = m.available_at(sc, 0.0);
        for (std::size_t k = 0; k < m.layout.generators.size(); ++k) {
            m.initial_u[static_cast<Index>(m.layout.p_index(k))] = avail[static_cast<Index>(k)];
            m.initial_u[static_cast<Index>(m.layout.q_index(k))] = 0.0;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Closed loop

SimLog run_closed_loop(const Scenario& sc, Architecture arch, const ProgressCallback& progress) {
    ScenarioModel model = build_model(sc);
    GridPlant plant(sc.grid, model.layout, model.disturbance_at(sc, 0.0));
    const LinearConstraints true_limits = output_limits(sc.grid, 1.0);

    SimLog log_out;
    log_out.architecture = arch;
    const auto& s = sc.controllers;

    auto area_list = model.areas;
    for (auto& c : area_list) set_availability(c, model.available_at(sc, 0.0));
    AreaController central = model.central;
    set_availability(central, model.available_at(sc, 0.0));

    // Gains
    const bool descent = arch == Architecture::Centralized && s.mode == ControllerMode::ProjectedDescent;
    const bool need_mu =
        arch == Architecture::MultiArea ? !s.gamma.has_value() : !s.alpha.has_value() && !descent;
    if (need_mu) {
        const std::vector<AreaController> game =
            arch == Architecture::MultiArea ? area_list : std::vector<AreaController>{central};
        const auto region = sampling_region(game, model.initial_u, s.cocoercivity.radius);
        log_out.cocoercivity = estimate_cocoercivity(game, plant, s.cocoercivity.pairs, region, s.cocoercivity.seed);
        if (!(log_out.cocoercivity->mu_hat > 0.0))
            throw Error(ErrorCode::NoInformativePairs,
                        fmt::format("estimated cocoercivity {:.3e} is not positive", log_out.cocoercivity->mu_hat));
        plant = GridPlant(sc.grid, model.layout, model.disturbance_at(sc, 0.0));
    }
    if (arch == Architecture::MultiArea) {
        log_out.gammas = s.gamma ? *s.gamma
                                 : std::vector<double>(area_list.size(), s.gamma_factor * log_out.cocoercivity->mu_hat);
        for (std::size_t i = 0; i < area_list.size(); ++i) area_list[i].gamma = log_out.gammas[i];
    } else {
        if (s.alpha) {
            log_out.alpha = *s.alpha;
        } else if (descent) {
            // sigma corrects constraint violations at rate alpha; phi alone needs alpha < 1 / max curvature.
            const double curvature =
                2.0 * std::max(central.cost.curtail_weights.maxCoeff(), central.cost.q_weights.maxCoeff());
            log_out.alpha = curvature > 0.0 ? std::min(0.5, 1.0 / curvature) : 0.5;
        } else {
            log_out.alpha = s.gamma_factor * log_out.cocoercivity->mu_hat;
        }
        central.gamma = log_out.alpha;
    }

    Vector u = model.initial_u;
    DualState dual{Vector::Zero(central.penalty.C.rows())};
    Sensitivity sens;
    int quiet = 0;
    const std::size_t periods = sc.periods();
    for (std::size_t k = 0; k < periods; ++k) {
        const double t = static_cast<double>(k) * sc.sampling_period;
        const Vector avail = model.available_at(sc, t);
        for (auto& c : area_list) set_availability(c, avail);
        set_availability(central, avail);
        plant.set_disturbance(model.disturbance_at(sc, t));

        Measurement m;
        try {
            m = plant.measure(u);
            if (k % static_cast<std::size_t>(s.refresh_every_k) == 0) sens = plant.sensitivity(u);
        } catch (const Error& e) {
            if (!e.is_numerical()) throw;
            log_out.plant_failed = true;
            log_out.failure = e.what();
            log().error("plant failed at k={}: {}", k, e.what());
            break;
        }

        StepRecord rec;
        rec.k = static_cast<long>(k);
        rec.time = t;
        rec.u = u;
        rec.y = m.y;
        for (const auto& c : area_list) rec.area_cost.push_back(c.local_cost(u, m));
        rec.social_cost = central.local_cost(u, m);
        rec.max_violation = (true_limits.A * m.y - true_limits.b).maxCoeff();

        Vector next;
        if (arch == Architecture::MultiArea) {
            next = u;
            for (const auto& c : area_list) {
                const Vector f = local_gradient(c, u, m, sens);
                next.segment(static_cast<Index>(c.offset), static_cast<Index>(c.size)) =
                    project_box_polytope(c.local_input(u) - c.gamma * f, c.A, c.b);
            }
        } else {
            const ControllerConfig cfg = central_config(central, s, log_out.alpha);
            switch (s.mode) {
                case ControllerMode::PenaltyGradient: next = penalty_gradient_step(cfg, u, m, sens); break;
                case ControllerMode::ProjectedDescent: {
                    auto step = projected_descent_step(cfg, u, m, sens);
                    next = step.u_next;
                    rec.relaxed = step.relaxed;
                    break;
                }
                case ControllerMode::PrimalDual: {
                    auto step = primal_dual_step(cfg, u, m, sens, dual);
                    next = step.u_next;
                    dual = step.dual;
                    break;
                }
            }
        }
        rec.residual = (next - u).norm();
        if (progress) progress(rec);
        log_out.records.push_back(rec);
        u = next;

        quiet = rec.residual < kSteadyResidual ? quiet + 1 : 0;
        if (quiet >= kSteadyWindow && !log_out.steady_state_step) {
            log_out.steady_state_step = rec.k - (kSteadyWindow - 1);
            if (sc.stop_at_steady_state) break;
        }
    }
    return log_out;
}

// ---------------------------------------------------------------------------
// Comparison

namespace {

std::vector<AreaReport> reports_at(const std::vector<AreaController>& areas, const Vector& u, const Measurement& m,
                                   double base_mva) {
    std::vector<AreaReport> out;
    for (const auto& c : areas) {
        AreaReport r;
        r.area = c.area;
        const Vector ui = c.local_input(u);
        for (Index j = 0; j < c.cost.p_available.size(); ++j)
            r.curtailed_mw += (c.cost.p_available[j] - ui[2 * j]) * base_mva;
        r.curtailment_cost = c.cost.curtailment_cost(ui);
        r.local_cost = c.local_cost(u, m);
        out.push_back(r);
    }
    return out;
}

// Fills everything but the steady flags and the echoed config.
ComparisonReport assemble(const std::vector<AreaController>& areas, const AreaController& central, Plant& plant,
                          const Vector& u_multi, const Vector& u_central, double base_mva) {
    ComparisonReport rep;
    auto summarize = [&](const Vector& u, std::vector<AreaReport>& dst, double& mw, double& cost, double& social) {
        const Measurement m = plant.measure(u);
        dst = reports_at(areas, u, m, base_mva);
        mw = cost = 0.0;
        for (const auto& r : dst) {
            mw += r.curtailed_mw;
            cost += r.curtailment_cost;
        }
        social = central.local_cost(u, m);
    };
    summarize(u_multi, rep.multi_area, rep.multi_area_curtailed_mw, rep.multi_area_curtailment_cost,
              rep.multi_area_social_cost);
    summarize(u_central, rep.centralized, rep.centralized_curtailed_mw, rep.centralized_curtailment_cost,
              rep.centralized_social_cost);

    rep.cost_ratio = rep.centralized_curtailment_cost > 0.0
                         ? rep.multi_area_curtailment_cost / rep.centralized_curtailment_cost
                         : (rep.multi_area_curtailment_cost == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
    rep.social_cost_ordering = rep.centralized_social_cost <=
                               rep.multi_area_social_cost + 1e-9 * std::max(1.0, std::abs(rep.multi_area_social_cost));
    if (!rep.social_cost_ordering)
        log().warn("centralized social cost {} exceeds multi-area social cost {}", rep.centralized_social_cost,
                   rep.multi_area_social_cost);
    for (std::size_t i = 0; i < rep.multi_area.size(); ++i)
        if (rep.multi_area[i].local_cost < rep.centralized[i].local_cost - 1e-12) rep.incentive_misalignment = true;
    return rep;
}

}  // namespace

std::vector<AreaReport> area_reports(const Scenario& sc, const ScenarioModel& model, const Vector& u,
                                     const Measurement& m, double t) {
    auto areas = model.areas;
    for (auto& c : areas) set_availability(c, model.available_at(sc, t));
    return reports_at(areas, u, m, sc.grid.base_mva);
}

ComparisonReport compare_equilibria(const std::vector<AreaController>& areas, const AreaController& central,
                                    Plant& plant, const Vector& u0, double base_mva, int max_iter, double tol) {
    auto iterate = [&](const std::vector<AreaController>& ctrls, bool& converged) {
        Vector u = u0;
        converged = false;
        for (int k = 0; k < max_iter; ++k) {
            const Vector f = pseudo_gradient(ctrls, u, plant);
            const Vector next = fb_operator(Gains::from(ctrls), u, f,
                                            [&](const Vector& x) { return project_product_set(ctrls, x); });
            const double r = (next - u).norm();
            u = next;
            if (r < tol) {
                converged = true;
                break;
            }
        }
        return u;
    };
    bool multi_ok = false, central_ok = false;
    const Vector u_multi = iterate(areas, multi_ok);
    const Vector u_central = iterate({central}, central_ok);
    ComparisonReport rep = assemble(areas, central, plant, u_multi, u_central, base_mva);
    rep.multi_area_steady = multi_ok;
    rep.centralized_steady = central_ok;
    return rep;
}

ComparisonReport run_comparison(const Scenario& scenario, const ProgressCallback& progress) {
    Scenario sc = scenario;
    sc.stop_at_steady_state = true;
    // Both architectures minimize the same penalized cost, so the social costs are comparable.
    sc.controllers.mode = ControllerMode::PenaltyGradient;
    const SimLog multi = run_closed_loop(sc, Architecture::MultiArea, progress);
    const SimLog cent = run_closed_loop(sc, Architecture::Centralized, progress);
    if (multi.plant_failed || cent.plant_failed || multi.records.empty() || cent.records.empty())
        throw Error(ErrorCode::NonConvergence, "comparison run lost the plant");
    if (&entry_at(sc, multi.records.back().time) != &entry_at(sc, cent.records.back().time))
        log().warn("runs settled at different times; reporting under the later disturbance");

    const ScenarioModel model = build_model(sc);
    const double t = std::max(multi.records.back().time, cent.records.back().time);
    auto areas = model.areas;
    for (auto& c : areas) set_availability(c, model.available_at(sc, t));
    AreaController central = model.central;
    set_availability(central, model.available_at(sc, t));
    GridPlant plant(sc.grid, model.layout, model.disturbance_at(sc, t));

    ComparisonReport rep =
        assemble(areas, central, plant, multi.records.back().u, cent.records.back().u, sc.grid.base_mva);
    rep.effective_config = sc.effective_config;
    rep.multi_area_steady = multi.steady_state_step.has_value();
    rep.centralized_steady = cent.steady_state_step.has_value();
    return rep;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json number(double v) {
    if (!std::isfinite(v)) return nullptr;
    return std::stod(format_number(v));
}

json areas_json(const std::vector<AreaReport>& areas) {
    json arr = json::array();
    for (const auto& a : areas)
        arr.push_back({{"area", a.area},
                       {"curtailed_mw", number(a.curtailed_mw)},
                       {"curtailment_cost", number(a.curtailment_cost)},
                       {"local_cost", number(a.local_cost)}});
    return arr;
}

json vector_json(const std::vector<double>& v) {
    json arr = json::array();
    for (double x : v) arr.push_back(number(x));
    return arr;
}

}  // namespace

json to_json(const ComparisonReport& r) {
    return {{"multi_area", areas_json(r.multi_area)},
            {"centralized", areas_json(r.centralized)},
            {"multi_area_curtailed_mw", number(r.multi_area_curtailed_mw)},
            {"centralized_curtailed_mw", number(r.centralized_curtailed_mw)},
            {"multi_area_curtailment_cost", number(r.multi_area_curtailment_cost)},
            {"centralized_curtailment_cost", number(r.centralized_curtailment_cost)},
            {"cost_ratio", number(r.cost_ratio)},
            {"multi_area_social_cost", number(r.multi_area_social_cost)},
            {"centralized_social_cost", number(r.centralized_social_cost)},
            {"social_cost_ordering", r.social_cost_ordering},
            {"incentive_misalignment", r.incentive_misalignment},
            {"multi_area_steady", r.multi_area_steady},
            {"centralized_steady", r.centralized_steady},
            {"effective_config", r.effective_config}};
}

json to_json(const NashCertificate& c) {
    return {{"fixed_point_residual", number(c.fixed_point_residual)},
            {"best_response_gap", vector_json(c.best_response_gap)},
            {"local_cost", vector_json(c.local_cost)},
            {"best_response_cost", vector_json(c.best_response_cost)},
            {"mu_hat", number(c.mu_hat)}};
}

void emit_series(const SimLog& lg, const Scenario& sc, const std::string& dir,
                 const std::optional<NashCertificate>& certificate) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, fmt::format("cannot create '{}': {}", dir, ec.message()));

    const InputLayout layout = InputLayout::build(sc.grid, sc.partition);
    const double base = sc.grid.base_mva;
    const auto nb = static_cast<Index>(sc.grid.n_bus());

    auto open = [&](const std::string& name) {
        std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary);
        if (!f) throw Error(ErrorCode::Io, fmt::format("cannot write '{}/{}'", dir, name));
        return f;
    };
    auto row_prefix = [&](const StepRecord& r) { return std::to_string(r.k) + "," + format_number(r.time); };

    {
        auto f = open("currents.csv");
        f << "k,time";
        for (std::size_t k = 0; k < sc.grid.n_branch(); ++k) f << "," << csv_field(fmt::format("branch_{}_im", k + 1));
        f << "\r\n";
        for (const auto& r : lg.records) {
            f << row_prefix(r);
            for (Index k = nb; k < r.y.size(); ++k) f << "," << format_number(r.y[k]);
            f << "\r\n";
        }
    }
    {
        auto f = open("voltages.csv");
        f << "k,time";
        for (const auto& b : sc.grid.buses) f << "," << csv_field(fmt::format("bus_{}_vm", b.id));
        f << "\r\n";
        for (const auto& r : lg.records) {
            f << row_prefix(r);
            for (Index i = 0; i < nb; ++i) f << "," << format_number(r.y[i]);
            f << "\r\n";
        }
    }
    {
        auto f = open("injections.csv");
        f << "k,time";
        for (auto g : layout.generators) f << fmt::format(",gen_{}_p_mw,gen_{}_q_mvar", g + 1, g + 1);
        f << "\r\n";
        for (const auto& r : lg.records) {
            f << row_prefix(r);
            for (Index j = 0; j < r.u.size(); ++j) f << "," << format_number(r.u[j] * base);
            f << "\r\n";
        }
    }
    {
        auto f = open("costs.csv");
        f << "k,time";
        for (int a = 1; a <= sc.partition.n_areas; ++a) f << fmt::format(",area_{}_cost", a);
        f << ",social_cost,max_violation,residual,relaxed\r\n";
        for (const auto& r : lg.records) {
            f << row_prefix(r);
            for (double c : r.area_cost) f << "," << format_number(c);
            f << "," << format_number(r.social_cost) << "," << format_number(r.max_violation) << ","
              << format_number(r.residual) << "," << (r.relaxed ? 1 : 0) << "\r\n";
        }
    }
    {
        json summary = {
            {"architecture", lg.architecture == Architecture::MultiArea ? "multiarea" : "centralized"},
            {"periods", lg.records.size()},
            {"gammas", vector_json(lg.gammas)},
            {"alpha", number(lg.alpha)},
            {"steady_state_step", lg.steady_state_step ? json(*lg.steady_state_step) : json(nullptr)},
            {"plant_failed", lg.plant_failed},
            {"failure", lg.failure},
            {"effective_config", sc.effective_config},
        };
        if (lg.cocoercivity) {
            summary["mu_hat"] = number(lg.cocoercivity->mu_hat);
            summary["cocoercivity_pairs"] = lg.cocoercivity->informative_pairs;
            summary["cocoercivity_negative_pairs"] = lg.cocoercivity->negative_pairs;
        }
        if (!lg.records.empty()) {
            summary["final_residual"] = number(lg.records.back().residual);
            summary["final_max_violation"] = number(lg.records.back().max_violation);
            summary["final_social_cost"] = number(lg.records.back().social_cost);
        }
        if (certificate) summary["nash_certificate"] = to_json(*certificate);
        auto f = open("summary.json");
        f << summary.dump(2) << "\n";
    }
}

}  // namespace gridloop
