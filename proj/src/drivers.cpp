#include "scinv/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace scinv {

double StepProfile::at(double t) const {
    double value = initial_;
    for (const auto& s : steps_) {
        if (t < s.t) break;
        if (ramp_ > 0.0 && t < s.t + ramp_) {
            return value + (s.value - value) * (t - s.t) / ramp_;
        }
        value = s.value;
    }
    return value;
}

void TripState::check(const Measurement& m, const CircuitParams& p, const TripLimits& lim, double f_dev) {
    if (tripped) return;
    std::ostringstream os;
    if (std::abs(m.x.iL1) > lim.i_peak) {
        os << "overcurrent |iL1|=" << std::abs(m.x.iL1) << " A";
    } else {
        const double lo = lim.v_cap_low * p.vin;
        const double hi = lim.v_cap_high * p.vin;
        for (double v : {m.x.vC1, m.x.vC2, m.x.vC3}) {
            if (v < lo || v > hi) {
                os << "capacitor voltage " << v << " V outside [" << lo << ", " << hi << "]";
                break;
            }
        }
        if (std::abs(f_dev) > lim.f_dev) {
            if (f_dev_since < 0.0) f_dev_since = m.t;
            if (os.str().empty() && m.t - f_dev_since >= lim.f_dev_delay) {
                os << "loss of synchronisation, frequency deviation " << f_dev << " Hz for "
                   << m.t - f_dev_since << " s";
            }
        } else {
            f_dev_since = -1.0;
        }
    }
    if (!os.str().empty()) {
        tripped = true;
        t = m.t;
        reason = os.str();
    }
}

// -----------------------------------------------------------------------------
// Standalone
// -----------------------------------------------------------------------------

StandaloneDriver::StandaloneDriver(const CircuitParams& p, const ModulationConfig& mod, double dt_ctrl,
                                   double v_ref_rms, StepProfile load_ohms, double kp, double ki,
                                   double r_limit)
    : params_(p),
      modulator_(mod),
      loop_(mod.f0, dt_ctrl, mod.m_index, kp, ki),
      v_ref_(v_ref_rms),
      load_(std::move(load_ohms)),
      r_limit_(r_limit) {}

void StandaloneDriver::control(const Measurement& m) {
    trip_.check(m, params_, limits, 0.0);
    const double mi = standalone_voltage_loop(loop_, m.v_out, v_ref_);
    const double theta = loop_.advance_theta();
    const LevelVoltages levels = LevelVoltages::measured(params_.vin, m.x.vC1, m.x.vC2, m.x.vC3);
    const double v_cmd = 0.5 * reference_from_control(mi, theta) * 2.0 * params_.vin;
    r_ = std::clamp(reference_for_voltage(v_cmd, levels), -r_limit_, r_limit_);
}

// -----------------------------------------------------------------------------
// Grid
// -----------------------------------------------------------------------------

GridDriver::GridDriver(const CircuitParams& p, const ModulationConfig& mod, double dt_ctrl,
                       const GridDriverConfig& cfg, StepProfile grid_pu, StepProfile i_ref_d,
                       StepProfile i_ref_q)
    : params_(p),
      cfg_(cfg),
      dt_(dt_ctrl),
      modulator_(mod),
      grid_pu_(std::move(grid_pu)),
      i_ref_d_(std::move(i_ref_d)),
      i_ref_q_(std::move(i_ref_q)),
      pll_(PllState::tuned(cfg.f_grid, cfg.pll_bandwidth_hz)) {
    const double l_total = p.l1 + p.l2;
    pi_d_ = tuned_current_pi(l_total, cfg.current_bandwidth_hz, 2.0 * p.vin);
    pi_q_ = pi_d_;
    // Start synchronized: v = V sin(wt) has angle -pi/2 at t = 0.
    const double v_peak = std::sqrt(2.0) * cfg.v_rms * grid_pu_.at(0.0);
    pll_.theta = wrap_angle(-0.5 * std::numbers::pi);
    sogi_v_.alpha = 0.0;
    sogi_v_.beta = -v_peak;
}

double GridDriver::grid_voltage(double t) const {
    return std::sqrt(2.0) * cfg_.v_rms * grid_pu_.at(t) * std::sin(kTwoPi * cfg_.f_grid * t);
}

void GridDriver::control(const Measurement& m) {
    trip_.check(m, params_, limits, (pll_.omega - pll_.omega_nominal) / kTwoPi);

    const AlphaBeta v_ab = osg_step(sogi_v_, m.v_grid, pll_.omega, dt_);
    const AlphaBeta i_ab = osg_step(sogi_i_, m.x.iL1, pll_.omega, dt_);
    const double theta = pll_.theta;
    const double omega = pll_.omega;

    const DqFrame v_dq = park(v_ab.alpha, v_ab.beta, theta);
    const DqFrame i_dq = park(i_ab.alpha, i_ab.beta, theta);
    DqFrame i_ref{i_ref_d_.at(m.t), i_ref_q_.at(m.t)};
    if (cfg_.compensate_filter_capacitor) {
        // The filter capacitor draws a leading current; feed it from the
        // inverter side so the grid current follows the reference.
        i_ref.q += omega * params_.cf * v_dq.d;
        i_ref.d -= omega * params_.cf * v_dq.q;
    }

    // Error in the stationary frame. The proportional gain is frame invariant
    // and acts on it directly; the integrators see its synchronous
    // demodulation, which keeps a DC offset in the current out of the dq
    // channels. The OSG estimate only feeds the cross-coupling terms.
    const AlphaBeta ref_ab = inverse_park(i_ref, theta);
    const double e_alpha = ref_ab.alpha - m.x.iL1;
    const DqFrame e_dq = park(2.0 * e_alpha, 0.0, theta);
    PiState int_d = pi_d_, int_q = pi_q_;
    int_d.kp = int_q.kp = 0.0;
    const DqFrame demod{i_ref.d - e_dq.d, i_ref.q - e_dq.q};
    const double l_total = params_.l1 + params_.l2;
    CurrentLoopOutput out = grid_current_loop(demod, i_ref, v_dq, omega, l_total, int_d, int_q, dt_);
    // Replace the cross-coupling computed from the demodulated signal with the
    // OSG current estimate.
    out.v_cmd.d += omega * l_total * (demod.q - i_dq.q);
    out.v_cmd.q -= omega * l_total * (demod.d - i_dq.d);

    const AlphaBeta slow = inverse_park(out.v_cmd, theta);
    const double v_cmd = pi_d_.kp * e_alpha + slow.alpha + (m.v_grid - v_ab.alpha);
    const LevelVoltages levels = cfg_.level_feedforward
                                     ? LevelVoltages::measured(params_.vin, m.x.vC1, m.x.vC2, m.x.vC3)
                                     : LevelVoltages::nominal(params_.vin);
    const double r = reference_for_voltage(v_cmd, levels);
    // Keep part of every carrier period in the lower level of the band so the
    // cell can recharge, and hold the integrators while the command is limited.
    r_ = std::clamp(r, -cfg_.r_limit, cfg_.r_limit);
    if (r_ == r) {
        pi_d_.integ = out.d.integ;
        pi_q_.integ = out.q.integ;
    }

    pll_step(v_ab, pll_, dt_);
}

}  // namespace scinv
