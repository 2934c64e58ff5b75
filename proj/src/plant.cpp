#include "gridloop/plant.hpp"

#include "gridloop/error.hpp"

namespace gridloop {

GridPlant::GridPlant(GridCase grid, InputLayout layout, Disturbance w, PFOptions opts)
    : grid_(std::move(grid)), layout_(std::move(layout)), w_(std::move(w)), opts_(opts) {}

void GridPlant::set_disturbance(const Disturbance& w) {
    w_ = w;
    fresh_ = false;
}

void GridPlant::solve_at(const Vector& u) {
    PFOptions o = opts_;
    if (state_) o.flat_start = false;
    const auto sol = solve_pf(grid_, layout_, u, w_, o, state_ ? &*state_ : nullptr);
    state_ = sol.state;
    last_u_ = u;
    fresh_ = true;
    last_iterations_ = sol.iterations;
}

Measurement GridPlant::measure(const Vector& u) {
    if (!fresh_ || last_u_.size() != u.size() || last_u_ != u) solve_at(u);
    return {compute_outputs(grid_, *state_).stacked(), slack_injection(grid_, *state_)};
}

Sensitivity GridPlant::sensitivity(const Vector& u) {
    if (!fresh_ || last_u_.size() != u.size() || last_u_ != u) solve_at(u);
    return gridloop::sensitivity(grid_, layout_, *state_);
}

LinearPlant::LinearPlant(Matrix g, Vector y0, Eigen::RowVectorXd slack_row, double slack0)
    : g_(std::move(g)), y0_(std::move(y0)), slack_row_(std::move(slack_row)), slack0_(slack0) {
    if (slack_row_.size() == 0) slack_row_ = Eigen::RowVectorXd::Zero(g_.cols());
    if (y0_.size() != g_.rows() || slack_row_.size() != g_.cols())
        throw Error(ErrorCode::InvalidConfig, "LinearPlant: inconsistent dimensions");
}

Measurement LinearPlant::measure(const Vector& u) {
    return {g_ * u + y0_, slack_row_.dot(u) + slack0_};
}

Sensitivity LinearPlant::sensitivity(const Vector&) { return {g_, slack_row_}; }

}  // namespace gridloop
