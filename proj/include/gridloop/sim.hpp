#pragma once

// Closed-loop scenario engine: sampled-data interconnection of the grid plant
// with either one centralized controller or one controller per area.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridloop/multiarea.hpp"

namespace gridloop {

/// Piecewise-constant disturbance segment starting at `t`.
struct ScheduleEntry {
    double t = 0.0;
    double load_scale = 1.0;
    double available_scale = 1.0;
};

struct CocoercivitySettings {
    int pairs = 200;
    double radius = 0.05;  // p.u., half-width of the sampling box around initial_u
    std::uint64_t seed = 1;
};

struct ControllerSettings {
    ControllerMode mode = ControllerMode::ProjectedDescent;  // centralized controller
    std::optional<double> alpha;                              // auto: 0.5 * mu_hat of the centralized game
    double beta = 1.0;
    double rho = 1e3;
    std::optional<std::vector<double>> gamma;  // per area; auto: gamma_factor * mu_hat
    double gamma_factor = 0.5;
    double loss_weight = 0.0;
    double current_scale = 1.0;
    int refresh_every_k = 1;
    CocoercivitySettings cocoercivity;
};

struct Scenario {
    GridCase grid;
    AreaPartition partition;
    ControllerSettings controllers;
    double sampling_period = 10.0;
    double horizon = 8040.0;
    std::vector<ScheduleEntry> schedule;
    std::optional<Vector> initial_u;  // default: units at full availability
    bool stop_at_steady_state = false;
    nlohmann::json effective_config;  // the document after overrides, echoed in reports

    std::size_t periods() const;
    void validate() const;
};

/// Parses a scenario document. Relative case paths resolve against `base_dir`.
Scenario parse_scenario(const nlohmann::json& doc, const std::string& base_dir);
Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides = {});

/// Applies `a.b.c=value` overrides onto a JSON document (value parsed as JSON when possible).
void apply_override(nlohmann::json& doc, const std::string& assignment);

enum class Architecture { Centralized, MultiArea };

struct StepRecord {
    long k = 0;
    double time = 0.0;
    Vector u;
    Vector y;
    std::vector<double> area_cost;  // J_i per area
    double social_cost = 0.0;       // centralized J
    double max_violation = 0.0;     // max over rows of C y - d
    double residual = 0.0;          // fixed-point residual |u^{k+1} - u^k|
    bool relaxed = false;
};

struct SimLog {
    Architecture architecture = Architecture::MultiArea;
    std::vector<StepRecord> records;
    std::vector<double> gammas;
    double alpha = 0.0;
    std::optional<CocoercivityEstimate> cocoercivity;
    std::optional<long> steady_state_step;  // first k of 10 consecutive residuals < 1e-6
    bool plant_failed = false;
    std::string failure;
};

using ProgressCallback = std::function<void(const StepRecord&)>;

/// Everything derived from a scenario that the controllers need.
struct ScenarioModel {
    InputLayout layout;
    Disturbance nominal;
    CostModel cost;                       // global, at nominal availability
    std::vector<AreaController> areas;   // gains not yet set
    AreaController central;              // all inputs, all outputs
    Vector initial_u;

    Disturbance disturbance_at(const Scenario& sc, double t) const;
    Vector available_at(const Scenario& sc, double t) const;
};

ScenarioModel build_model(const Scenario& scenario);

SimLog run_closed_loop(const Scenario& scenario, Architecture arch, const ProgressCallback& progress = {});

struct AreaReport {
    int area = 0;
    double curtailed_mw = 0.0;
    double curtailment_cost = 0.0;
    double local_cost = 0.0;
};

struct ComparisonReport {
    std::vector<AreaReport> multi_area;
    std::vector<AreaReport> centralized;
    double multi_area_curtailed_mw = 0.0;
    double centralized_curtailed_mw = 0.0;
    double multi_area_curtailment_cost = 0.0;
    double centralized_curtailment_cost = 0.0;
    double cost_ratio = 0.0;  // multi-area / centralized curtailment cost
    double multi_area_social_cost = 0.0;
    double centralized_social_cost = 0.0;
    bool social_cost_ordering = false;   // centralized <= multi-area within 1e-9 relative
    bool incentive_misalignment = false; // some area is strictly better off at Nash
    bool multi_area_steady = false;
    bool centralized_steady = false;
    nlohmann::json effective_config;
};

ComparisonReport run_comparison(const Scenario& scenario, const ProgressCallback& progress = {});

/// Same report for a static plant: iterates the game and the single-controller
/// problem (central.gamma as step) from u0 until |u+ - u| < tol.
ComparisonReport compare_equilibria(const std::vector<AreaController>& areas, const AreaController& central,
                                    Plant& plant, const Vector& u0, double base_mva = 1.0, int max_iter = 100000,
                                    double tol = 1e-13);

/// Per-area curtailment summary at input u under the scenario's final disturbance.
std::vector<AreaReport> area_reports(const Scenario& scenario, const ScenarioModel& model, const Vector& u,
                                     const Measurement& m, double t);

nlohmann::json to_json(const ComparisonReport& report);
nlohmann::json to_json(const NashCertificate& cert);

/// Writes currents.csv, voltages.csv, injections.csv, costs.csv and summary.json into `dir`.
void emit_series(const SimLog& log, const Scenario& scenario, const std::string& dir,
                 const std::optional<NashCertificate>& certificate = std::nullopt);

/// Quotes a CSV field per RFC 4180 when needed.
std::string csv_field(const std::string& s);

/// Fixed 12 significant digit formatting used in every emitted artifact.
std::string format_number(double v);

}  // namespace gridloop
