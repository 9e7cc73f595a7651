#pragma once

// Fixed-step integration of the active configuration's linear ODE, with D1
// bias resolution, control-rate callbacks, waveform logging and an energy
// audit.

#include "scinv/circuit.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace scinv {

enum class Integrator { Trapezoidal, BackwardEuler };

struct SimConfig {
    double dt_sim = 1e-6;
    double dt_ctrl = 20e-6;
    double t_end = 0.1;
    Integrator integrator = Integrator::Trapezoidal;
    double envelope_period = 0.02;  // blocking-voltage envelope window (one fundamental)

    /// Samples per control period; throws unless dt_sim divides dt_ctrl.
    std::size_t control_ratio() const;
    std::size_t step_count() const;
    void validate() const;
};

/// One-step solution of dx/dt = A x + B u with u interpolated linearly from
/// u0 (start) to u1 (end). Throws std::runtime_error if the implicit matrix is
/// singular.
Vec6 step(const LinearOde& ode, const Vec6& x, double dt, const Vec3& u0, const Vec3& u1,
          Integrator integrator = Integrator::Trapezoidal);

inline Vec6 step(const LinearOde& ode, const Vec6& x, double dt) {
    return step(ode, x, dt, Vec3::Zero(), Vec3::Zero());
}

struct BlockingEnvelope {
    double t_start = 0.0;
    std::array<double, kDeviceCount> min{};
    std::array<double, kDeviceCount> max{};
};

/// Uniformly sampled log. Sample n is at t = n * dt; derived channels of
/// sample n are evaluated with the configuration active over [t_n, t_n+1).
/// Cumulative energies e_* are integrated at step midpoints, so they balance
/// the stored energy exactly under the trapezoidal rule.
struct WaveformRecord {
    double dt = 0.0;
    double envelope_period = 0.02;
    std::vector<std::uint8_t> config;   // Configuration::code()
    std::vector<std::uint16_t> gates;
    std::array<std::vector<double>, 6> x;  // indexed by StateIndex
    std::vector<double> v_raw;
    std::vector<double> v_out;      // load / grid terminal voltage
    std::vector<double> i_out;      // load current, or grid current iL2
    std::vector<double> v_grid;
    std::vector<double> reference;  // modulation reference seen by the driver
    std::vector<double> i_d1;
    std::vector<double> i_cell_parallel;
    std::vector<double> p_src;
    std::vector<double> p_load;
    std::vector<double> e_src;
    std::vector<double> e_load;
    std::vector<double> e_diss;
    std::vector<double> e_diode;
    std::vector<BlockingEnvelope> envelopes;

    std::size_t size() const { return config.size(); }
    bool empty() const { return config.empty(); }
    double time(std::size_t n) const { return static_cast<double>(n) * dt; }
    std::size_t index_at(double t) const;
    StateVector state(std::size_t n) const;
    Configuration configuration(std::size_t n) const;
    std::span<const double> channel(StateIndex i) const { return x[static_cast<std::size_t>(i)]; }

    /// Copy of samples [first, last] inclusive, energies rebased to zero.
    WaveformRecord slice(std::size_t first, std::size_t last) const;
};

Configuration configuration_from_code(std::uint8_t code);

/// Snapshot handed to the driver at each control instant.
struct Measurement {
    double t = 0.0;
    StateVector x;
    double v_out = 0.0;
    double v_grid = 0.0;
};

/// Supplies gates and external inputs; receives measurements at dt_ctrl.
class Driver {
public:
    virtual ~Driver() = default;
    virtual void control(const Measurement& /*m*/) {}
    virtual GateVector gates(double t) = 0;
    virtual double grid_voltage(double /*t*/) const { return 0.0; }
    virtual double load_resistance(double /*t*/) const { return 0.0; }
    virtual double reference(double /*t*/) const { return 0.0; }
};

/// Open-loop driver holding a fixed gate vector.
class ConstantGates final : public Driver {
public:
    explicit ConstantGates(GateVector g, double r_load = 0.0) : g_(g), r_load_(r_load) {}
    GateVector gates(double) override { return g_; }
    double load_resistance(double) const override { return r_load_; }

private:
    GateVector g_;
    double r_load_;
};

struct SimulationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Runs [0, t_end] and returns t_end/dt_sim + 1 samples.
/// For a Load terminal, the driver's load_resistance() overrides term.r_load
/// whenever it returns a positive value.
WaveformRecord simulate(Driver& driver, const CircuitParams& params, const SimConfig& cfg,
                        const TerminalCondition& term, const StateVector& x0);

/// |E_src - E_load - E_diss - dE_stored| / E_src over samples [first, last].
/// nullopt when the window is empty or no source energy flowed.
std::optional<double> energy_audit(const WaveformRecord& rec, const CircuitParams& params,
                                   std::size_t first, std::size_t last);
std::optional<double> energy_audit(const WaveformRecord& rec, const CircuitParams& params);

}  // namespace scinv
