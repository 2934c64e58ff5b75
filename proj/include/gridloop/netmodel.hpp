#pragma once

// Grid data model: buses, branches, generators, area partitions, and the
// bus admittance matrix. All electrical quantities are stored in per-unit on
// GridCase::base_mva; conversion happens once, at parse time.

#include <complex>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/SparseCore>

namespace gridloop {

enum class BusKind { Slack, PV, PQ };

std::string_view to_string(BusKind kind);
BusKind bus_kind_from_string(std::string_view s);

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double p_load = 0.0;  // p.u.
    double q_load = 0.0;  // p.u.
    double shunt_g = 0.0;
    double shunt_b = 0.0;
    double v_min = 0.9;
    double v_max = 1.1;
    double base_kv = 0.0;

    bool operator==(const Bus&) const = default;
};

struct Branch {
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b_charging = 0.0;
    double current_limit = 0.0;  // p.u. current; 0 means unlimited
    double tap_ratio = 1.0;
    double phase_shift = 0.0;  // rad
    bool in_service = true;

    bool operator==(const Branch&) const = default;
};

struct Generator {
    int bus = 0;
    double p_set = 0.0;
    double q_set = 0.0;
    double p_min = 0.0;
    double p_max = 0.0;
    double q_min = 0.0;
    double q_max = 0.0;
    double v_set = 1.0;
    bool controllable = false;
    double p_available = 0.0;
    double cost_curtail = 0.0;  // currency / p.u.^2
    double cost_q = 0.0;        // currency / p.u.^2

    bool operator==(const Generator&) const = default;
};

struct GridCase {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;

    bool operator==(const GridCase&) const = default;

    /// Position of a bus id in `buses`; throws UnknownBusReference.
    std::size_t bus_index(int id) const;
    std::size_t slack_index() const;
    std::size_t n_bus() const { return buses.size(); }
    std::size_t n_branch() const { return branches.size(); }
};

/// Checks every GridCase invariant and throws the matching Error.
void validate_case(const GridCase& grid);

GridCase parse_matpower_case(std::string_view text);
GridCase load_case_file(const std::string& path);

std::string emit_json_case(const GridCase& grid);
GridCase parse_json_case(std::string_view text);

using AdmittanceMatrix = Eigen::SparseMatrix<std::complex<double>>;

/// Branch pi-model entries in MATPOWER convention (tap on the from side).
struct BranchAdmittance {
    std::complex<double> yff, yft, ytf, ytt;
};
BranchAdmittance branch_admittance(const Branch& br);

AdmittanceMatrix build_admittance(const GridCase& grid);

struct AreaPartition {
    int n_areas = 1;
    std::map<int, int> bus_area;  // bus id -> area in 1..n_areas

    // Derived by validate_partition.
    std::vector<std::vector<std::size_t>> controllable_by_area;  // generator indices
    std::vector<std::size_t> tie_lines;                          // branch indices

    /// All buses in area 1.
    static AreaPartition single_area(const GridCase& grid);

    int area_of(int bus_id) const;
};

/// Validates the partition, fills its derived fields and returns the tie lines.
std::vector<std::size_t> validate_partition(const GridCase& grid, AreaPartition& partition);

/// Output indices observed by an area: its bus voltages, then the currents of
/// every in-service branch touching it. Tie-line currents appear in both areas.
std::vector<std::size_t> area_output_indices(const GridCase& grid, const AreaPartition& partition,
                                             int area);

}  // namespace gridloop
