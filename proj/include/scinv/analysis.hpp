#pragma once

// Post-processing: harmonics, power, efficiency, capacitor ripple and sizing,
// device stress classes.

#include "scinv/circuit.hpp"
#include "scinv/solver.hpp"

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace scinv {

struct AnalysisError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// -----------------------------------------------------------------------------
// Harmonics
// -----------------------------------------------------------------------------

struct HarmonicSpectrum {
    double f0 = 0.0;
    double dc = 0.0;
    std::vector<double> amplitude;  // peak amplitude, index = harmonic order (0 unused)
    std::vector<double> phase;      // radians, sine reference

    double fundamental() const { return amplitude.size() > 1 ? amplitude[1] : 0.0; }
    /// RMS implied by DC and all harmonics up to the computed order.
    double rms() const;
};

/// Single-bin DFT at every harmonic up to n_max. The window must hold an
/// integer number of fundamental periods and fs >= 2 n_max f0.
HarmonicSpectrum harmonic_spectrum(std::span<const double> x, double fs, double f0, int n_max = 50);

/// sqrt(sum_{n=2..n_max} V_n^2) / V_1.
double thd(std::span<const double> x, double fs, double f0, int n_max = 50);

double rms(std::span<const double> x);

// -----------------------------------------------------------------------------
// Power
// -----------------------------------------------------------------------------

struct PowerMetrics {
    double p = 0.0;
    double q = 0.0;                 // lagging positive
    double s = 0.0;
    std::optional<double> pf;       // nullopt when S = 0
    double phase_shift_deg = 0.0;   // fundamental voltage angle minus current angle
};

PowerMetrics power_metrics(std::span<const double> v, std::span<const double> i, double fs, double f0);

// -----------------------------------------------------------------------------
// Efficiency
// -----------------------------------------------------------------------------

struct EfficiencyBreakdown {
    double eta = 0.0;
    double e_source = 0.0;
    double e_load = 0.0;
    double e_conduction = 0.0;
    double e_diode = 0.0;
    double e_switching = 0.0;
    double d_stored = 0.0;
};

/// Gate transitions per device over samples [first, last].
std::array<int, kGatedSwitchCount> transition_counts(const WaveformRecord& rec, std::size_t first,
                                                     std::size_t last);

/// Hard-switching energy: each transition costs 0.5 * V_block * |i_L1| * t_sw,
/// with V_block taken on the device's off side of the transition.
double switching_energy(const WaveformRecord& rec, const CircuitParams& p, std::size_t first,
                        std::size_t last);

/// eta = (E_load - E_switching) / E_source. Conduction and diode losses are
/// already inside the simulated circuit.
EfficiencyBreakdown efficiency(const WaveformRecord& rec, const CircuitParams& p, std::size_t first,
                               std::size_t last);

// -----------------------------------------------------------------------------
// Capacitor design and ripple
// -----------------------------------------------------------------------------

struct SizingInputs {
    double p_out = 0.0;
    double v_dc = 0.0;
    double m_index = 0.0;
    double f_sw = 0.0;
    double delta_v = 0.0;

    void validate() const;
};

struct SizingResult {
    double capacitance = 0.0;  // F
    double i_out = 0.0;        // A
    double delta_q = 0.0;      // C per switching period
};

SizingResult capacitor_sizing(const SizingInputs& s);

struct PeriodRipple {
    double series_term = 0.0;         // (1/C) * integral of series-mode stack current
    double parallel_term = 0.0;       // (1/C) * integral of parallel-mode charging current / 2
    double half_sum_term = 0.0;         // (1/C) * (integral i_o/2 - integral i_pump/2)
    double predicted_excursion = 0.0; // per-capacitor convention: series_term
    double measured_excursion = 0.0;  // max - min of vC1 over the window
    double measured_net = 0.0;        // vC1(end) - vC1(start)
    double series_current_integral = 0.0;
    double parallel_current_integral = 0.0;
};

/// Discretized voltage-fluctuation balance over one carrier period.
PeriodRipple delta_v_per_period(const WaveformRecord& rec, const CircuitParams& p, std::size_t first,
                                std::size_t last);

struct CapacitorStats {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

struct RippleBalance {
    std::array<CapacitorStats, 3> caps{};
    double max_imbalance = 0.0;  // max |vC1 - vC2|
};

RippleBalance ripple_and_balance(const WaveformRecord& rec, std::size_t first, std::size_t last);

// -----------------------------------------------------------------------------
// Device stress
// -----------------------------------------------------------------------------

struct DeviceStress {
    SwitchId device;
    double min = 0.0;
    double max = 0.0;
    double span = 0.0;        // max - min
    double class_limit = 0.0; // 0.5, 1.0 or 1.5 Vdc
    bool exceeds = false;     // span > 1.1 * class_limit
};

struct StressSummary {
    double v_dc = 0.0;  // 2 * vin
    std::array<DeviceStress, kDeviceCount> devices{};
    bool any_flagged = false;

    const DeviceStress& operator[](SwitchId id) const { return devices[static_cast<std::size_t>(id)]; }
};

/// Class of each device in multiples of Vdc = 2 vin.
double stress_class(SwitchId id);

StressSummary stress_summary(const WaveformRecord& rec, const CircuitParams& p, double t_from, double t_to);

}  // namespace scinv
