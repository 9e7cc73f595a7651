#include "scinv/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scinv {

std::pair<double, PiState> pi_step(const PiState& s, double err, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("pi_step: dt must be positive");
    PiState next = s;
    const double integ_candidate = s.integ + s.ki * err * dt;
    const double pre = s.kp * err + integ_candidate;
    const bool wind_up = (pre > s.u_max && err > 0.0) || (pre < s.u_min && err < 0.0);
    if (!wind_up) next.integ = integ_candidate;
    const double u = std::clamp(s.kp * err + next.integ, s.u_min, s.u_max);
    return {u, next};
}

DqFrame park(double alpha, double beta, double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return {alpha * c + beta * s, -alpha * s + beta * c};
}

AlphaBeta inverse_park(const DqFrame& dq, double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    return {dq.d * c - dq.q * s, dq.d * s + dq.q * c};
}

double wrap_angle(double theta) {
    theta = std::fmod(theta, kTwoPi);
    if (theta < 0.0) theta += kTwoPi;
    return theta;
}

AlphaBeta osg_step(SogiState& s, double v, double omega, double dt) {
    if (!(omega > 0.0)) throw std::invalid_argument("osg_step: omega must be positive");
    // x' = A x + b v with A = [[-k w, -w], [w, 0]], b = [k w, 0].
    const double kw = s.k * omega;
    const double h = 0.5 * dt;
    // (I - hA) x1 = (I + hA) x0 + h b (v0 + v1)
    const double m00 = 1.0 + h * kw, m01 = h * omega;
    const double m10 = -h * omega, m11 = 1.0;
    const double r0 = (1.0 - h * kw) * s.alpha - h * omega * s.beta + h * kw * (s.v_prev + v);
    const double r1 = h * omega * s.alpha + s.beta;
    const double det = m00 * m11 - m01 * m10;
    s.alpha = (r0 * m11 - m01 * r1) / det;
    s.beta = (m00 * r1 - m10 * r0) / det;
    s.v_prev = v;
    return {s.alpha, s.beta};
}

PllState PllState::tuned(double f_nominal, double bandwidth_hz, double zeta) {
    PllState s;
    s.omega_nominal = kTwoPi * f_nominal;
    s.omega = s.omega_nominal;
    const double wn = kTwoPi * bandwidth_hz;
    s.loop.kp = 2.0 * zeta * wn;
    s.loop.ki = wn * wn;
    s.loop.u_min = -0.2 * s.omega_nominal;
    s.loop.u_max = 0.2 * s.omega_nominal;
    return s;
}

PllOutput pll_step(const AlphaBeta& v, PllState& s, double dt) {
    const double amp = std::hypot(v.alpha, v.beta);
    if (amp > 1e-9) {
        const double q = park(v.alpha, v.beta, s.theta).q / amp;
        const auto [u, next] = pi_step(s.loop, q, dt);
        s.loop = next;
        s.omega = s.omega_nominal + u;
    }
    s.theta = wrap_angle(s.theta + s.omega * dt);
    return {s.theta, s.omega};
}

CurrentLoopOutput grid_current_loop(const DqFrame& i_meas, const DqFrame& i_ref,
                                    const DqFrame& v_grid, double omega, double l_total,
                                    const PiState& s_d, const PiState& s_q, double dt) {
    const auto [ud, nd] = pi_step(s_d, i_ref.d - i_meas.d, dt);
    const auto [uq, nq] = pi_step(s_q, i_ref.q - i_meas.q, dt);
    CurrentLoopOutput out;
    out.v_cmd.d = ud - omega * l_total * i_meas.q + v_grid.d;
    out.v_cmd.q = uq + omega * l_total * i_meas.d + v_grid.q;
    out.d = nd;
    out.q = nq;
    return out;
}

PiState tuned_current_pi(double l_total, double bandwidth_hz, double v_limit) {
    PiState s;
    const double wc = kTwoPi * bandwidth_hz;
    s.kp = wc * l_total;
    s.ki = s.kp * wc / 10.0;
    s.u_min = -v_limit;
    s.u_max = v_limit;
    return s;
}

// -----------------------------------------------------------------------------
// Standalone loop
// -----------------------------------------------------------------------------

StandaloneVoltageLoop::StandaloneVoltageLoop(double f0, double dt, double m_initial, double kp,
                                             double ki, double m_min, double m_max)
    : f0_(f0), dt_(dt), m_(m_initial) {
    if (!(f0 > 0.0) || !(dt > 0.0)) throw std::invalid_argument("f0 and dt must be positive");
    pi_.kp = kp;
    pi_.ki = ki;
    pi_.integ = m_initial;
    pi_.u_min = m_min;
    pi_.u_max = m_max;
    const auto n = static_cast<std::size_t>(std::llround(0.5 / (f0 * dt)));
    window_.assign(std::max<std::size_t>(n, 1), 0.0);
}

double StandaloneVoltageLoop::rms() const {
    if (filled_ == 0) return 0.0;
    return std::sqrt(std::max(sum_sq_, 0.0) / static_cast<double>(filled_));
}

double StandaloneVoltageLoop::advance_theta() {
    theta_ = wrap_angle(theta_ + kTwoPi * f0_ * dt_);
    return theta_;
}

double StandaloneVoltageLoop::step(double v_meas, double v_ref_rms) {
    if (!(v_ref_rms > 0.0)) throw std::invalid_argument("v_ref_rms must be positive");
    const double sq = v_meas * v_meas;
    sum_sq_ += sq - window_[head_];
    window_[head_] = sq;
    head_ = (head_ + 1) % window_.size();
    filled_ = std::min(filled_ + 1, window_.size());
    // Periodic re-summation bounds floating-point drift of the running sum.
    if (++since_resum_ >= 16 * window_.size()) {
        sum_sq_ = 0.0;
        for (double w : window_) sum_sq_ += w;
        since_resum_ = 0;
    }
    if (filled_ < window_.size()) return m_;  // wait for one full half cycle
    const auto [u, next] = pi_step(pi_, v_ref_rms - rms(), dt_);
    pi_ = next;
    m_ = u;
    return m_;
}

double standalone_voltage_loop(StandaloneVoltageLoop& loop, double v_meas, double v_ref_rms) {
    return loop.step(v_meas, v_ref_rms);
}

}  // namespace scinv
