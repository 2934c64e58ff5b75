#pragma once

// Multi-area feedback equilibrium seeking. Each area i owns a contiguous
// slice u_i of the input and observes a subset y_i of the outputs; it runs
//
//   u_i+ = proj_{U_i}[u_i - gamma_i F_i(u, y_i)],
//   F_i  = grad_{u_i} J_i + (dh_i/du_i)' grad_{y_i} J_i,
//
// which stacked over all areas is the forward-backward iteration
// u+ = proj_U(u - Gamma F(u)) on the pseudo-gradient F.

#include <cstdint>
#include <functional>
#include <vector>

#include "gridloop/ofo.hpp"

namespace gridloop {

struct AreaController {
    int area = 1;
    double gamma = 1e-3;
    std::size_t offset = 0;  // first index of u_i in u
    std::size_t size = 0;    // dim u_i
    std::vector<std::size_t> outputs;  // global output indices observed by the area
    CostModel cost;                    // restricted to the area's units
    PenaltyModel penalty;              // C acts on the local output vector y_i
    Matrix A;                          // local input set A u_i <= b
    Vector b;

    Vector local_input(const Vector& u) const;
    Vector local_outputs(const Vector& y) const;
    /// Area-i outputs vs area-i inputs block of the global sensitivity.
    Matrix local_block(const Matrix& dy_du) const;
    Eigen::RowVectorXd local_slack_row(const Eigen::RowVectorXd& dslack_du) const;
    /// J_i at the given global signals.
    double local_cost(const Vector& u, const Measurement& m) const;
};

struct GameState {
    Vector u;
    Measurement measurement;  // y^k = h(u^k; w)
    long k = 0;
};

struct Gains {
    Vector diagonal;  // gamma_i repeated over dim u_i

    static Gains from(const std::vector<AreaController>& controllers);
};

struct NashCertificate {
    double fixed_point_residual = 0.0;
    std::vector<double> best_response_gap;  // relative, per area
    std::vector<double> local_cost;         // J_i at the certified point
    std::vector<double> best_response_cost; // J_i after unilateral optimization
    double mu_hat = 0.0;
};

/// F_i from the area's own sensitivity block S_i.
Vector local_gradient(const AreaController& ctrl, const Vector& u, const Measurement& m, const Matrix& s_local,
                      const Eigen::RowVectorXd& slack_local);
/// Convenience overload that extracts S_i from the global sensitivity.
Vector local_gradient(const AreaController& ctrl, const Vector& u, const Measurement& m, const Sensitivity& s);

/// Blockwise projection onto U = U_1 x ... x U_N.
Vector project_product_set(const std::vector<AreaController>& controllers, const Vector& u);

/// Synchronous update of all areas from the same measurement, then plant resolve.
GameState multiarea_step(const std::vector<AreaController>& controllers, const GameState& state, Plant& plant,
                         const Sensitivity& s);

/// col(F_1, ..., F_N) at y = h(u; w).
Vector pseudo_gradient(const std::vector<AreaController>& controllers, const Vector& u, Plant& plant);

using Projector = std::function<Vector(const Vector&)>;

/// proj_U(u - Gamma F).
Vector fb_operator(const Gains& gains, const Vector& u, const Vector& f, const Projector& projector);

struct SamplingRegion {
    Vector lower;
    Vector upper;
};

struct CocoercivityEstimate {
    double mu_hat = 0.0;
    Vector pair_a;  // minimizing pair, for audit
    Vector pair_b;
    int informative_pairs = 0;
    int negative_pairs = 0;
};

CocoercivityEstimate estimate_cocoercivity(const std::vector<AreaController>& controllers, Plant& plant,
                                           int sample_pairs, const SamplingRegion& region, std::uint64_t seed);

/// Same estimator on an explicit operator (used with affine test maps).
CocoercivityEstimate estimate_cocoercivity(const std::function<Vector(const Vector&)>& op, int sample_pairs,
                                           const SamplingRegion& region, std::uint64_t seed);

struct BestResponseOptions {
    double inner_tol = 1e-10;
    int max_iter = 500;
};

NashCertificate certify_nash(const std::vector<AreaController>& controllers, const Vector& u, Plant& plant,
                             const BestResponseOptions& opts = {});

struct StepSizeCheck {
    bool ok = false;
    double margin = 0.0;  // 2 mu_hat - max gamma_i
};

StepSizeCheck check_step_sizes(const Gains& gains, double mu_hat);

// ---------------------------------------------------------------------------
// Construction for grid plants

struct AreaCostSettings {
    double rho = 1e3;
    double loss_weight = 0.0;     // applied to every area
    double current_scale = 1.0;   // multiplies branch current limits
};

/// One controller per area with local box inputs, local outputs, and the
/// rows of the global output limits that touch only those outputs.
std::vector<AreaController> make_area_controllers(const GridCase& grid, const AreaPartition& partition,
                                                  const InputLayout& layout, const CostModel& global_cost,
                                                  const AreaCostSettings& settings, const std::vector<double>& gammas);

}  // namespace gridloop
