#include "scinv/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

namespace scinv {

// -----------------------------------------------------------------------------
// Harmonics
// -----------------------------------------------------------------------------

double HarmonicSpectrum::rms() const {
    double sum = dc * dc;
    for (std::size_t n = 1; n < amplitude.size(); ++n) sum += 0.5 * amplitude[n] * amplitude[n];
    return std::sqrt(sum);
}

double rms(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double sum = 0.0;
    for (double v : x) sum += v * v;
    return std::sqrt(sum / static_cast<double>(x.size()));
}

HarmonicSpectrum harmonic_spectrum(std::span<const double> x, double fs, double f0, int n_max) {
    if (x.empty()) throw AnalysisError("harmonic_spectrum: empty window");
    if (!(fs > 0.0) || !(f0 > 0.0) || n_max < 1) throw AnalysisError("harmonic_spectrum: bad fs/f0/n_max");
    if (fs < 2.0 * n_max * f0) throw AnalysisError("harmonic_spectrum: sample rate below 2 n_max f0");
    const auto n_samples = static_cast<double>(x.size());
    const double periods = n_samples * f0 / fs;
    if (periods < 0.5 || std::abs(periods - std::round(periods)) > 1e-6 * std::max(1.0, periods)) {
        throw AnalysisError("harmonic_spectrum: window is not an integer number of fundamental periods");
    }

    HarmonicSpectrum h;
    h.f0 = f0;
    h.amplitude.assign(static_cast<std::size_t>(n_max) + 1, 0.0);
    h.phase.assign(static_cast<std::size_t>(n_max) + 1, 0.0);
    double sum = 0.0;
    for (double v : x) sum += v;
    h.dc = sum / n_samples;

    constexpr std::size_t kRenorm = 4096;
    for (int n = 1; n <= n_max; ++n) {
        const double dphi = 2.0 * std::numbers::pi * n * f0 / fs;
        const std::complex<double> w = std::polar(1.0, dphi);
        std::complex<double> z(1.0, 0.0);
        double acc_cos = 0.0, acc_sin = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            if (k % kRenorm == 0) z = std::polar(1.0, dphi * static_cast<double>(k));
            acc_cos += x[k] * z.real();
            acc_sin += x[k] * z.imag();
            z *= w;
        }
        const double a = 2.0 * acc_cos / n_samples;  // cos coefficient
        const double b = 2.0 * acc_sin / n_samples;  // sin coefficient
        h.amplitude[static_cast<std::size_t>(n)] = std::hypot(a, b);
        h.phase[static_cast<std::size_t>(n)] = std::atan2(a, b);
    }
    return h;
}

double thd(std::span<const double> x, double fs, double f0, int n_max) {
    const HarmonicSpectrum h = harmonic_spectrum(x, fs, f0, n_max);
    // A fundamental at round-off level of the window RMS counts as absent.
    if (!(h.fundamental() > 1e-12 * rms(x))) throw AnalysisError("thd: zero fundamental");
    double sum = 0.0;
    for (std::size_t n = 2; n < h.amplitude.size(); ++n) sum += h.amplitude[n] * h.amplitude[n];
    return std::sqrt(sum) / h.fundamental();
}

// -----------------------------------------------------------------------------
// Power
// -----------------------------------------------------------------------------

PowerMetrics power_metrics(std::span<const double> v, std::span<const double> i, double fs, double f0) {
    if (v.size() != i.size() || v.empty()) throw AnalysisError("power_metrics: mismatched or empty windows");
    const HarmonicSpectrum hv = harmonic_spectrum(v, fs, f0, 1);
    const HarmonicSpectrum hi = harmonic_spectrum(i, fs, f0, 1);
    PowerMetrics m;
    double p = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) p += v[k] * i[k];
    m.p = p / static_cast<double>(v.size());
    m.s = rms(v) * rms(i);
    double shift = hv.phase[1] - hi.phase[1];
    shift = std::remainder(shift, 2.0 * std::numbers::pi);
    m.phase_shift_deg = shift * 180.0 / std::numbers::pi;
    const double q_mag = std::sqrt(std::max(m.s * m.s - m.p * m.p, 0.0));
    m.q = shift >= 0.0 ? q_mag : -q_mag;
    if (m.s > 0.0) m.pf = m.p / m.s;
    return m;
}

// -----------------------------------------------------------------------------
// Efficiency
// -----------------------------------------------------------------------------

std::array<int, kGatedSwitchCount> transition_counts(const WaveformRecord& rec, std::size_t first,
                                                     std::size_t last) {
    std::array<int, kGatedSwitchCount> counts{};
    if (rec.empty()) return counts;
    last = std::min(last, rec.size() - 1);
    for (std::size_t n = first + 1; n <= last; ++n) {
        const unsigned diff = static_cast<unsigned>(rec.gates[n] ^ rec.gates[n - 1]);
        for (std::size_t k = 0; k < kGatedSwitchCount; ++k) {
            if ((diff >> k) & 1u) ++counts[k];
        }
    }
    return counts;
}

double switching_energy(const WaveformRecord& rec, const CircuitParams& p, std::size_t first,
                        std::size_t last) {
    if (rec.empty()) return 0.0;
    last = std::min(last, rec.size() - 1);
    double e = 0.0;
    for (std::size_t n = first + 1; n <= last; ++n) {
        const unsigned diff = static_cast<unsigned>(rec.gates[n] ^ rec.gates[n - 1]);
        if (diff == 0) continue;
        const StateVector xs = rec.state(n);
        const auto before = blocking_voltages(rec.configuration(n - 1), xs, p);
        const auto after = blocking_voltages(rec.configuration(n), xs, p);
        const double current = std::abs(xs.iL1);
        for (std::size_t k = 0; k < kGatedSwitchCount; ++k) {
            if (!((diff >> k) & 1u)) continue;
            const bool on_after = (rec.gates[n] >> k) & 1u;
            const double v_block = std::abs(on_after ? before[k] : after[k]);
            e += 0.5 * v_block * current * p.t_sw;
        }
    }
    return e;
}

EfficiencyBreakdown efficiency(const WaveformRecord& rec, const CircuitParams& p, std::size_t first,
                               std::size_t last) {
    EfficiencyBreakdown b;
    if (rec.empty() || last <= first) return b;
    last = std::min(last, rec.size() - 1);
    b.e_source = rec.e_src[last] - rec.e_src[first];
    b.e_load = rec.e_load[last] - rec.e_load[first];
    b.e_conduction = rec.e_diss[last] - rec.e_diss[first];
    b.e_diode = rec.e_diode[last] - rec.e_diode[first];
    b.e_switching = switching_energy(rec, p, first, last);
    b.d_stored = stored_energy(rec.state(last), p) - stored_energy(rec.state(first), p);
    if (b.e_source > 0.0) b.eta = (b.e_load - b.e_switching) / b.e_source;
    return b;
}

// -----------------------------------------------------------------------------
// Capacitors
// -----------------------------------------------------------------------------

void SizingInputs::validate() const {
    if (!(p_out > 0.0) || !(v_dc > 0.0) || !(m_index > 0.0) || !(f_sw > 0.0) || !(delta_v > 0.0)) {
        throw AnalysisError("capacitor_sizing: all inputs must be positive");
    }
    if (!(delta_v < v_dc)) throw AnalysisError("capacitor_sizing: delta_v must be below v_dc");
}

SizingResult capacitor_sizing(const SizingInputs& s) {
    s.validate();
    SizingResult r;
    r.i_out = s.p_out / s.v_dc;
    r.delta_q = r.i_out * s.m_index / s.f_sw;
    r.capacitance = s.p_out * s.m_index / (s.v_dc * s.f_sw * s.delta_v);
    return r;
}

PeriodRipple delta_v_per_period(const WaveformRecord& rec, const CircuitParams& p, std::size_t first,
                                std::size_t last) {
    PeriodRipple r;
    if (rec.empty() || last <= first) return r;
    last = std::min(last, rec.size() - 1);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t n = first; n <= last; ++n) {
        lo = std::min(lo, rec.x[kVC1][n]);
        hi = std::max(hi, rec.x[kVC1][n]);
        if (n == last) break;
        const auto cfg = rec.configuration(n);
        const double i1 = rec.x[kIL1][n];
        if (cfg.state == SwitchingState::Pos2) r.series_current_integral += i1 * rec.dt;
        if (cfg.state == SwitchingState::Neg2) r.series_current_integral -= i1 * rec.dt;
        if (cfg.state == SwitchingState::Pos1 || cfg.state == SwitchingState::Neg1) {
            r.parallel_current_integral += rec.i_cell_parallel[n] * rec.dt;
        }
    }
    r.series_term = r.series_current_integral / p.c1;
    r.parallel_term = 0.5 * r.parallel_current_integral / p.c1;
    r.half_sum_term = (0.5 * r.series_current_integral - 0.5 * r.parallel_current_integral) / p.c1;
    r.predicted_excursion = r.series_term;
    r.measured_excursion = hi - lo;
    r.measured_net = rec.x[kVC1][last] - rec.x[kVC1][first];
    return r;
}

RippleBalance ripple_and_balance(const WaveformRecord& rec, std::size_t first, std::size_t last) {
    RippleBalance b;
    if (rec.empty() || last < first) return b;
    last = std::min(last, rec.size() - 1);
    for (std::size_t c = 0; c < 3; ++c) {
        auto& s = b.caps[c];
        s.min = std::numeric_limits<double>::infinity();
        s.max = -s.min;
        double sum = 0.0;
        for (std::size_t n = first; n <= last; ++n) {
            const double v = rec.x[c][n];
            s.min = std::min(s.min, v);
            s.max = std::max(s.max, v);
            sum += v;
        }
        s.mean = sum / static_cast<double>(last - first + 1);
    }
    for (std::size_t n = first; n <= last; ++n) {
        b.max_imbalance = std::max(b.max_imbalance, std::abs(rec.x[kVC1][n] - rec.x[kVC2][n]));
    }
    return b;
}

// -----------------------------------------------------------------------------
// Stress
// -----------------------------------------------------------------------------

double stress_class(SwitchId id) {
    switch (id) {
        case SwitchId::S3:
        case SwitchId::S3p:
        case SwitchId::S4:
        case SwitchId::S8:
        case SwitchId::S9:
        case SwitchId::D1: return 0.5;
        case SwitchId::S1:
        case SwitchId::S2:
        case SwitchId::S6:
        case SwitchId::S7: return 1.0;
        case SwitchId::S5: return 1.5;
    }
    return 1.0;
}

StressSummary stress_summary(const WaveformRecord& rec, const CircuitParams& p, double t_from, double t_to) {
    StressSummary out;
    out.v_dc = 2.0 * p.vin;
    std::array<double, kDeviceCount> lo;
    std::array<double, kDeviceCount> hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    const double eps = 0.5 * rec.dt;
    bool any = false;
    for (const auto& env : rec.envelopes) {
        if (env.t_start < t_from - eps || env.t_start + rec.envelope_period > t_to + eps) continue;
        any = true;
        for (std::size_t k = 0; k < kDeviceCount; ++k) {
            lo[k] = std::min(lo[k], env.min[k]);
            hi[k] = std::max(hi[k], env.max[k]);
        }
    }
    if (!any) throw AnalysisError("stress_summary: window holds no complete envelope cycle");
    for (std::size_t k = 0; k < kDeviceCount; ++k) {
        auto& d = out.devices[k];
        d.device = kAllDevices[k];
        d.min = lo[k];
        d.max = hi[k];
        d.span = hi[k] - lo[k];
        d.class_limit = stress_class(d.device) * out.v_dc;
        d.exceeds = d.span > 1.1 * d.class_limit;
        out.any_flagged = out.any_flagged || d.exceeds;
    }
    return out;
}

}  // namespace scinv
