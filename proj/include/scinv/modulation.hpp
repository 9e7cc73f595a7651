#pragma once

// Phase-disposition level-shifted PWM: one triangular carrier, the reference
// decomposed into the band it falls in. Each band alternates between two
// adjacent switching-table rows.

#include "scinv/circuit.hpp"

namespace scinv {

struct ModulationConfig {
    double f_sw = 5000.0;
    double f0 = 50.0;
    double m_index = 0.815;

    void validate() const;
};

struct LevelSelection {
    SwitchingState low;
    SwitchingState high;
    double duty;       // fraction of the carrier period spent in `high`
    bool saturated;    // |r| > 2 was clamped
};

/// Band decomposition of a normalized reference r in [-2, 2].
LevelSelection level_select(double r);

/// Triangular carrier in [0, 1], zero at t = 0 and at every period start.
double carrier(double t, double f_sw);

/// Stateless modulator: carrier comparison at time t, mapped through the table.
GateVector pwm_gates(double t, double r, const ModulationConfig& cfg);
SwitchingState pwm_state(double t, double r, const ModulationConfig& cfg);

/// r = 2 m sin(theta); peak synthesized voltage is m * 2 * vin.
double reference_from_control(double m, double theta);

/// Measured voltage of each nonzero output level, all positive magnitudes.
struct LevelVoltages {
    double pos1 = 0.0;  // source level
    double pos2 = 0.0;  // series cell
    double neg1 = 0.0;  // parallel cell (with C3)
    double neg2 = 0.0;  // series cell

    /// Levels of an ideal converter: vin and 2 vin.
    static LevelVoltages nominal(double vin) { return {vin, 2.0 * vin, vin, 2.0 * vin}; }
    /// Levels implied by the measured capacitor voltages.
    static LevelVoltages measured(double vin, double vC1, double vC2, double vC3);
};

/// Reference r whose band decomposition averages to v_cmd over a carrier
/// period given the actual level voltages. With nominal levels this is
/// v_cmd / vin. The result is limited to [-2, 2]; throws if a level is not
/// positive.
double reference_for_voltage(double v_cmd, const LevelVoltages& levels);

/// Closed-loop modulator used by the simulator. The reference is sampled at
/// every carrier peak and valley, and the half-cycle polarity (which decides
/// ZeroPos vs ZeroNeg and keeps S2/S6 at the fundamental rate) only flips when
/// the reference crosses a small hysteresis band after a minimum dwell.
class Modulator {
public:
    explicit Modulator(ModulationConfig cfg, double hysteresis = 0.02, double min_dwell_cycles = 0.4);

    GateVector gates(double t, double r);
    SwitchingState state(double t, double r);
    double sampled_reference() const { return sampled_; }
    bool negative_half() const { return negative_; }

private:
    ModulationConfig cfg_;
    double hysteresis_;
    double min_dwell_;
    long long sample_index_ = -1;
    double sampled_ = 0.0;
    bool negative_ = false;
    double last_flip_ = -1e9;
};

}  // namespace scinv
