#pragma once

// Plants seen by the controllers: something that maps u to a measurement and
// can report its sensitivity at u.

#include <optional>

#include "gridloop/powerflow.hpp"

namespace gridloop {

struct Measurement {
    Vector y;             // stacked outputs
    double slack_p = 0.0; // slack active injection (loss proxy)
};

class Plant {
public:
    virtual ~Plant() = default;
    virtual std::size_t input_dim() const = 0;
    virtual std::size_t output_dim() const = 0;
    virtual Measurement measure(const Vector& u) = 0;
    virtual Sensitivity sensitivity(const Vector& u) = 0;
};

/// AC grid solved by Newton-Raphson, warm-started from the previous solution.
class GridPlant final : public Plant {
public:
    GridPlant(GridCase grid, InputLayout layout, Disturbance w, PFOptions opts = {});

    std::size_t input_dim() const override { return layout_.dim(); }
    std::size_t output_dim() const override { return grid_.n_bus() + grid_.n_branch(); }
    Measurement measure(const Vector& u) override;
    Sensitivity sensitivity(const Vector& u) override;

    void set_disturbance(const Disturbance& w);
    const Disturbance& disturbance() const { return w_; }
    const GridCase& grid() const { return grid_; }
    const InputLayout& layout() const { return layout_; }
    /// Last solved state; requires a prior measure().
    const VoltageState& state() const { return *state_; }
    int last_iterations() const { return last_iterations_; }

private:
    void solve_at(const Vector& u);

    GridCase grid_;
    InputLayout layout_;
    Disturbance w_;
    PFOptions opts_;
    std::optional<VoltageState> state_;
    Vector last_u_;
    bool fresh_ = false;
    int last_iterations_ = 0;
};

/// y = G u + y0, slack = s'u + s0. Used for closed-form toy games.
class LinearPlant final : public Plant {
public:
    LinearPlant(Matrix g, Vector y0, Eigen::RowVectorXd slack_row = {}, double slack0 = 0.0);

    std::size_t input_dim() const override { return static_cast<std::size_t>(g_.cols()); }
    std::size_t output_dim() const override { return static_cast<std::size_t>(g_.rows()); }
    Measurement measure(const Vector& u) override;
    Sensitivity sensitivity(const Vector& u) override;

private:
    Matrix g_;
    Vector y0_;
    Eigen::RowVectorXd slack_row_;
    double slack0_;
};

}  // namespace gridloop
