#pragma once

// Closed-loop drivers that tie the controllers and the modulator to the
// simulator: one for off-grid voltage regulation, one for grid current
// injection.

#include "scinv/circuit.hpp"
#include "scinv/control.hpp"
#include "scinv/modulation.hpp"
#include "scinv/solver.hpp"

#include <string>
#include <vector>

namespace scinv {

/// Piecewise-constant value with optional linear ramps between steps.
class StepProfile {
public:
    explicit StepProfile(double initial = 0.0, double ramp = 0.0) : initial_(initial), ramp_(ramp) {}
    void add(double t, double value) { steps_.push_back({t, value}); }
    double at(double t) const;

private:
    struct Step { double t; double value; };
    double initial_;
    double ramp_;
    std::vector<Step> steps_;
};

struct TripLimits {
    double i_peak = 60.0;        // A, |iL1|
    double v_cap_low = 0.5;      // per unit of vin
    double v_cap_high = 1.25;
    double f_dev = 5.0;          // Hz, PLL frequency deviation
    double f_dev_delay = 0.1;    // s the deviation must persist before tripping
};

struct TripState {
    bool tripped = false;
    double t = 0.0;
    std::string reason;
    double f_dev_since = -1.0;  // start of the current over-frequency excursion

    void check(const Measurement& m, const CircuitParams& p, const TripLimits& lim, double f_dev);
};

class StandaloneDriver final : public Driver {
public:
    StandaloneDriver(const CircuitParams& p, const ModulationConfig& mod, double dt_ctrl,
                     double v_ref_rms, StepProfile load_ohms, double kp = 0.005, double ki = 0.5,
                     double r_limit = 1.9);

    void control(const Measurement& m) override;
    GateVector gates(double t) override { return trip_.tripped ? GateVector{} : modulator_.gates(t, r_); }
    double load_resistance(double t) const override { return load_.at(t); }
    double reference(double) const override { return modulator_.sampled_reference(); }

    const TripState& trip() const { return trip_; }
    double m_index() const { return loop_.m_index(); }

    TripLimits limits;

private:
    CircuitParams params_;
    Modulator modulator_;
    StandaloneVoltageLoop loop_;
    double v_ref_;
    StepProfile load_;
    double r_limit_;
    double r_ = 0.0;
    TripState trip_;
};

struct GridDriverConfig {
    double v_rms = 230.0;
    double f_grid = 50.0;
    double current_bandwidth_hz = 500.0;
    double pll_bandwidth_hz = 20.0;
    bool compensate_filter_capacitor = true;
    double r_limit = 1.9;  // reference clamp, keeps a recharge interval in each period
    bool level_feedforward = true;  // map voltage commands through measured level voltages
};

class GridDriver final : public Driver {
public:
    GridDriver(const CircuitParams& p, const ModulationConfig& mod, double dt_ctrl,
               const GridDriverConfig& cfg, StepProfile grid_pu, StepProfile i_ref_d,
               StepProfile i_ref_q);

    void control(const Measurement& m) override;
    GateVector gates(double t) override { return trip_.tripped ? GateVector{} : modulator_.gates(t, r_); }
    double grid_voltage(double t) const override;
    double reference(double) const override { return modulator_.sampled_reference(); }

    const TripState& trip() const { return trip_; }
    const PllState& pll() const { return pll_; }

    TripLimits limits;

private:
    CircuitParams params_;
    GridDriverConfig cfg_;
    double dt_;
    Modulator modulator_;
    StepProfile grid_pu_;
    StepProfile i_ref_d_;
    StepProfile i_ref_q_;
    SogiState sogi_v_;
    SogiState sogi_i_;
    PllState pll_;
    PiState pi_d_;
    PiState pi_q_;
    double r_ = 0.0;
    TripState trip_;
};

}  // namespace scinv
