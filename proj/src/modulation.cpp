#include "scinv/modulation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scinv {

void ModulationConfig::validate() const {
    if (!(f_sw > 0.0) || !(f0 > 0.0)) throw std::invalid_argument("f_sw and f0 must be positive");
    if (f_sw / f0 < 20.0) throw std::invalid_argument("f_sw / f0 must be at least 20");
    if (!(m_index > 0.0) || m_index > 1.0) throw std::invalid_argument("m_index must lie in (0, 1]");
}

LevelSelection level_select(double r) {
    bool saturated = false;
    if (r > 2.0) { r = 2.0; saturated = true; }
    if (r < -2.0) { r = -2.0; saturated = true; }
    if (r >= 0.0 && r <= 1.0) return {SwitchingState::ZeroPos, SwitchingState::Pos1, r, saturated};
    if (r > 1.0) return {SwitchingState::Pos1, SwitchingState::Pos2, r - 1.0, saturated};
    if (r >= -1.0) return {SwitchingState::ZeroNeg, SwitchingState::Neg1, -r, saturated};
    return {SwitchingState::Neg1, SwitchingState::Neg2, -r - 1.0, saturated};
}

double carrier(double t, double f_sw) {
    double phase = std::fmod(t * f_sw, 1.0);
    if (phase < 0.0) phase += 1.0;
    return 1.0 - std::abs(2.0 * phase - 1.0);
}

namespace {

SwitchingState compare(const LevelSelection& sel, double c) {
    if (sel.duty >= 1.0) return sel.high;
    if (sel.duty <= 0.0) return sel.low;
    return sel.duty > c ? sel.high : sel.low;
}

}  // namespace

SwitchingState pwm_state(double t, double r, const ModulationConfig& cfg) {
    return compare(level_select(r), carrier(t, cfg.f_sw));
}

GateVector pwm_gates(double t, double r, const ModulationConfig& cfg) {
    return gate_vector_for_state(pwm_state(t, r, cfg));
}

double reference_from_control(double m, double theta) { return 2.0 * m * std::sin(theta); }

LevelVoltages LevelVoltages::measured(double vin, double vC1, double vC2, double vC3) {
    const double cell = 0.5 * (vC1 + vC2);
    // In -V the cell is paralleled with C3, so the level settles at their
    // charge-weighted mean; equal capacitors are assumed here.
    return {vin, vC1 + vC2, (2.0 * cell + vC3) / 3.0, vC1 + vC2};
}

double reference_for_voltage(double v_cmd, const LevelVoltages& levels) {
    const bool pos = v_cmd >= 0.0;
    const double v = std::abs(v_cmd);
    const double l1 = pos ? levels.pos1 : levels.neg1;
    const double l2 = pos ? levels.pos2 : levels.neg2;
    if (!(l1 > 0.0) || !(l2 > 0.0)) throw std::invalid_argument("reference_for_voltage: level voltages must be positive");
    double r;
    if (v <= l1) {
        r = v / l1;
    } else if (l2 > l1) {
        r = 1.0 + std::min((v - l1) / (l2 - l1), 1.0);
    } else {
        r = 2.0;  // the upper level has collapsed below the lower one
    }
    return pos ? r : -r;
}

// -----------------------------------------------------------------------------
// Modulator
// -----------------------------------------------------------------------------

Modulator::Modulator(ModulationConfig cfg, double hysteresis, double min_dwell_cycles)
    : cfg_(cfg), hysteresis_(hysteresis), min_dwell_(min_dwell_cycles / cfg.f0) {
    cfg_.validate();
}

SwitchingState Modulator::state(double t, double r) {
    // Regular sampling at carrier peaks and valleys. The small offset keeps
    // grid-aligned times from landing one sample early through round-off.
    const auto idx = static_cast<long long>(std::floor(2.0 * t * cfg_.f_sw + 1e-6));
    if (idx != sample_index_) {
        sample_index_ = idx;
        sampled_ = std::clamp(r, -2.0, 2.0);
        const bool want_negative = negative_ ? !(sampled_ > hysteresis_) : sampled_ < -hysteresis_;
        if (want_negative != negative_ && t - last_flip_ >= min_dwell_) {
            negative_ = want_negative;
            last_flip_ = t;
        }
    }
    double band_ref = negative_ ? std::min(sampled_, 0.0) : std::max(sampled_, 0.0);
    LevelSelection sel = level_select(band_ref);
    if (negative_ && band_ref == 0.0) {
        sel = {SwitchingState::ZeroNeg, SwitchingState::Neg1, 0.0, false};
    }
    return compare(sel, carrier(t, cfg_.f_sw));
}

GateVector Modulator::gates(double t, double r) { return gate_vector_for_state(state(t, r)); }

}  // namespace scinv
