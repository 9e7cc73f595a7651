#pragma once

// Standalone RMS voltage loop and grid-connected dq current loop.
// Everything here runs at the controller rate and is a deterministic function
// of (state, inputs, dt).

#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

namespace scinv {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// PI with clamped output and conditional-integration anti-windup.
struct PiState {
    double kp = 0.0;
    double ki = 0.0;
    double integ = 0.0;
    double u_min = -1e300;
    double u_max = 1e300;
};

/// Returns the clamped output and the updated state. The integral is frozen
/// when the unclamped output is beyond a limit in the direction of err.
std::pair<double, PiState> pi_step(const PiState& s, double err, double dt);

struct DqFrame {
    double d = 0.0;
    double q = 0.0;
};

struct AlphaBeta {
    double alpha = 0.0;
    double beta = 0.0;
};

DqFrame park(double alpha, double beta, double theta);
AlphaBeta inverse_park(const DqFrame& dq, double theta);

/// Second-order generalized integrator, discretized with the trapezoidal rule.
struct SogiState {
    double k = 1.4142135623730951;
    double alpha = 0.0;
    double beta = 0.0;
    double v_prev = 0.0;
};

/// Advances the orthogonal signal generator by dt. In sinusoidal steady state
/// at omega, alpha tracks v and beta lags it by 90 degrees.
AlphaBeta osg_step(SogiState& s, double v, double omega, double dt);

/// Synchronous-reference-frame PLL acting on the amplitude-normalized q axis.
struct PllState {
    double theta = 0.0;
    double omega = kTwoPi * 50.0;
    double omega_nominal = kTwoPi * 50.0;
    PiState loop{};

    /// Loop tuned for a second-order response with the given bandwidth [Hz].
    static PllState tuned(double f_nominal, double bandwidth_hz = 20.0, double zeta = 0.7071);
};

struct PllOutput {
    double theta;
    double omega;
};

PllOutput pll_step(const AlphaBeta& v_grid, PllState& s, double dt);

double wrap_angle(double theta);

struct CurrentLoopOutput {
    DqFrame v_cmd;
    PiState d;
    PiState q;
};

/// dq current regulation with cross-coupling decoupling and grid feedforward:
///   v_d = PI_d(i_ref_d - i_d) - omega l i_q + v_grid_d
///   v_q = PI_q(i_ref_q - i_q) + omega l i_d + v_grid_q
CurrentLoopOutput grid_current_loop(const DqFrame& i_meas, const DqFrame& i_ref,
                                    const DqFrame& v_grid, double omega, double l_total,
                                    const PiState& s_d, const PiState& s_q, double dt);

/// Current PI tuned so the open loop crosses over at `bandwidth_hz` with the
/// PI zero a decade below.
PiState tuned_current_pi(double l_total, double bandwidth_hz, double v_limit);

/// Off-grid voltage regulator: sliding half-cycle RMS of the measured output
/// voltage against an RMS reference, PI output is the modulation index.
class StandaloneVoltageLoop {
public:
    StandaloneVoltageLoop(double f0, double dt, double m_initial, double kp = 0.005,
                          double ki = 0.5, double m_min = 0.05, double m_max = 1.0);

    /// Feeds one sample; returns the updated modulation index.
    double step(double v_meas, double v_ref_rms);

    double m_index() const { return m_; }
    double rms() const;
    double theta() const { return theta_; }
    /// Oscillator angle advanced once per call.
    double advance_theta();
    const PiState& pi() const { return pi_; }

private:
    double f0_;
    double dt_;
    PiState pi_;
    std::vector<double> window_;
    std::size_t head_ = 0;
    std::size_t filled_ = 0;
    double sum_sq_ = 0.0;
    double m_;
    double theta_ = 0.0;
    std::size_t since_resum_ = 0;
};

/// Free-function form of one voltage-loop update.
double standalone_voltage_loop(StandaloneVoltageLoop& loop, double v_meas, double v_ref_rms);

}  // namespace scinv
