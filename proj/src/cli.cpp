#include "gridloop/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gridloop/error.hpp"
#include "gridloop/log.hpp"
#include "gridloop/sim.hpp"

namespace gridloop {

namespace {

constexpr const char* kSynopsis =
    "gridloop <verb> [--case PATH] [--scenario PATH] [--out DIR] [--override K=V]...\n"
    "verbs: validate, pf, run, game, compare, certify";

struct Options {
    std::string case_path;
    std::string scenario_path;
    std::string out_dir;
    std::vector<std::string> overrides;
    double load_scale = 1.0;
};

std::string num(double v) { return format_number(v); }

void write_file(const std::string& dir, const std::string& name, const std::string& body) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream f(std::filesystem::path(dir) / name, std::ios::binary);
    if (ec || !f) throw Error(ErrorCode::Io, fmt::format("cannot write '{}/{}'", dir, name));
    f << body;
}

ProgressCallback printer(std::ostream& out) {
    return [&out](const StepRecord& r) {
        out << "k=" << r.k << " residual=" << num(r.residual) << " maxviol=" << num(r.max_violation) << "\n";
    };
}

Scenario need_scenario(const Options& o) {
    if (o.scenario_path.empty()) throw Error(ErrorCode::Usage, "--scenario is required");
    return load_scenario(o.scenario_path, o.overrides);
}

int cmd_validate(const Options& o, std::ostream& out) {
    if (o.case_path.empty()) throw Error(ErrorCode::Usage, "a case path is required");
    const GridCase grid = load_case_file(o.case_path);
    out << grid.n_bus() << " buses, " << grid.n_branch() << " branches\n";
    if (!o.out_dir.empty()) write_file(o.out_dir, "case.json", emit_json_case(grid));
    return 0;
}

int cmd_pf(const Options& o, std::ostream& out) {
    if (o.case_path.empty()) throw Error(ErrorCode::Usage, "--case is required");
    const GridCase grid = load_case_file(o.case_path);
    const InputLayout layout = InputLayout::build(grid);
    Disturbance w = Disturbance::from_case(grid);
    w.p_load *= o.load_scale;
    w.q_load *= o.load_scale;
    const auto sol = solve_pf(grid, layout, layout.initial_input(grid), w, {});
    out << "iterations=" << sol.iterations << " max_mismatch=" << num(sol.max_mismatch)
        << " slack_p_mw=" << num(slack_injection(grid, sol.state) * grid.base_mva) << "\n";
    const OutputVector y = compute_outputs(grid, sol.state);
    if (!o.out_dir.empty()) {
        std::ostringstream csv;
        write_outputs_csv(csv, grid, y);
        write_file(o.out_dir, "outputs.csv", csv.str());
    }
    return 0;
}

int cmd_loop(const Options& o, std::ostream& out, Architecture arch) {
    const Scenario sc = need_scenario(o);
    const SimLog lg = run_closed_loop(sc, arch, printer(out));
    if (!o.out_dir.empty()) emit_series(lg, sc, o.out_dir);
    out << "periods=" << lg.records.size() << " steady_state_step="
        << (lg.steady_state_step ? std::to_string(*lg.steady_state_step) : "none") << "\n";
    if (lg.plant_failed) throw Error(ErrorCode::NonConvergence, lg.failure);
    return 0;
}

int cmd_compare(const Options& o, std::ostream& out) {
    const Scenario sc = need_scenario(o);
    const ComparisonReport rep = run_comparison(sc, printer(out));
    if (!o.out_dir.empty()) write_file(o.out_dir, "report.json", to_json(rep).dump(2) + "\n");
    out << "multi_area_cost=" << num(rep.multi_area_curtailment_cost)
        << " centralized_cost=" << num(rep.centralized_curtailment_cost) << " ratio=" << num(rep.cost_ratio)
        << " multi_area_mw=" << num(rep.multi_area_curtailed_mw)
        << " centralized_mw=" << num(rep.centralized_curtailed_mw) << "\n";
    return 0;
}

int cmd_certify(const Options& o, std::ostream& out) {
    Scenario sc = need_scenario(o);
    sc.stop_at_steady_state = true;
    const SimLog lg = run_closed_loop(sc, Architecture::MultiArea, printer(out));
    if (lg.plant_failed) throw Error(ErrorCode::NonConvergence, lg.failure);

    ScenarioModel model = build_model(sc);
    auto ctrls = model.areas;
    for (std::size_t i = 0; i < ctrls.size(); ++i) ctrls[i].gamma = lg.gammas[i];
    const auto& last = lg.records.back();
    GridPlant plant(sc.grid, model.layout, model.disturbance_at(sc, last.time));
    // The last record holds u^k; certify the point the loop settled on.
    const Vector u = last.u;
    NashCertificate cert = certify_nash(ctrls, u, plant);
    if (lg.cocoercivity) cert.mu_hat = lg.cocoercivity->mu_hat;
    if (!o.out_dir.empty()) emit_series(lg, sc, o.out_dir, cert);
    out << "fixed_point_residual=" << num(cert.fixed_point_residual);
    for (std::size_t i = 0; i < cert.best_response_gap.size(); ++i)
        out << " gap_" << i + 1 << "=" << num(cert.best_response_gap[i]);
    out << "\n";
    return 0;
}

}  // namespace

int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Closed-loop feedback optimization for multi-area grids", "gridloop"};
    app.require_subcommand(1);
    Options o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--case", o.case_path, "Grid case (MATPOWER .m or JSON)");
        sub->add_option("--scenario", o.scenario_path, "Scenario JSON");
        sub->add_option("--out", o.out_dir, "Output directory");
        sub->add_option("--override", o.overrides, "Scenario override KEY=VALUE (dotted key)");
    };
    auto* validate = app.add_subcommand("validate", "Parse and check a case");
    add_common(validate);
    validate->add_option("path", o.case_path, "Grid case");
    auto* pf = app.add_subcommand("pf", "Solve one power flow");
    add_common(pf);
    pf->add_option("--load-scale", o.load_scale, "Multiply all loads");
    auto* run = app.add_subcommand("run", "Centralized closed loop");
    add_common(run);
    auto* game = app.add_subcommand("game", "Multi-area closed loop");
    add_common(game);
    auto* compare = app.add_subcommand("compare", "Multi-area vs centralized report");
    add_common(compare);
    auto* certify = app.add_subcommand("certify", "Run the game and certify the Nash point");
    add_common(certify);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: code=UsageError message=\"" << e.what() << "\"\n" << kSynopsis << "\n";
        return 1;
    }

    try {
        if (validate->parsed()) return cmd_validate(o, out);
        if (pf->parsed()) return cmd_pf(o, out);
        if (run->parsed()) return cmd_loop(o, out, Architecture::Centralized);
        if (game->parsed()) return cmd_loop(o, out, Architecture::MultiArea);
        if (compare->parsed()) return cmd_compare(o, out);
        if (certify->parsed()) return cmd_certify(o, out);
    } catch (const Error& e) {
        err << "error: code=" << to_string(e.code()) << " message=\"" << e.what() << "\"\n";
        if (e.code() == ErrorCode::Usage) err << kSynopsis << "\n";
        return e.is_numerical() ? 2 : 1;
    } catch (const std::exception& e) {
        err << "error: code=Internal message=\"" << e.what() << "\"\n";
        return 1;
    }
    return 1;
}

}  // namespace gridloop
