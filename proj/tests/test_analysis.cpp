#include "scinv/analysis.hpp"
#include "scinv/drivers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

using namespace scinv;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

/// `cycles` fundamental periods of f(phase) sampled at cycle midpoints.
std::vector<double> sampled(int per_cycle, int cycles, auto f) {
    std::vector<double> x(static_cast<std::size_t>(per_cycle * cycles));
    for (std::size_t k = 0; k < x.size(); ++k) {
        x[k] = f(2.0 * kPi * (static_cast<double>(k) + 0.5) / per_cycle);
    }
    return x;
}

double square(double ph) { return std::sin(ph) >= 0.0 ? 1.0 : -1.0; }

}  // namespace

// -----------------------------------------------------------------------------
// Harmonics
// -----------------------------------------------------------------------------

TEST_CASE("a pure sine has no distortion", "[analysis][oracle]") {
    const auto x = sampled(400, 3, [](double ph) { return 325.0 * std::sin(ph); });
    CHECK(thd(x, 20000.0, 50.0) < 1e-9);
    const auto h = harmonic_spectrum(x, 20000.0, 50.0);
    CHECK(h.fundamental() == Approx(325.0));
    CHECK(h.phase[1] == Approx(kPi / 400.0).margin(1e-9));  // half-sample offset
    CHECK(rms(x) == Approx(325.0 / std::numbers::sqrt2));
}

TEST_CASE("square-wave THD", "[analysis][oracle]") {
    const auto x = sampled(10000, 1, square);
    // Odd harmonics 3..49 of 4/(pi n).
    CHECK(thd(x, 500000.0, 50.0, 50) == Approx(0.4730).margin(5e-4));
    // All harmonics: sqrt(pi^2 / 8 - 1).
    CHECK(thd(x, 500000.0, 50.0, 2000) == Approx(std::sqrt(kPi * kPi / 8.0 - 1.0)).margin(1e-3));
}

TEST_CASE("THD is scale invariant and finds injected harmonics", "[analysis][property]") {
    for (double a3 : {0.0, 0.01, 0.05, 0.2}) {
        auto f = [a3](double ph) { return std::sin(ph) + a3 * std::sin(3.0 * ph + 0.4) + 0.5 * a3 * std::sin(7.0 * ph); };
        const auto x = sampled(200, 2, f);
        std::vector<double> y = x;
        for (double& v : y) v *= 230.0;
        const double expected = a3 * std::sqrt(1.25);
        CHECK(thd(x, 10000.0, 50.0) == Approx(expected).margin(1e-9));
        CHECK(thd(y, 10000.0, 50.0) == Approx(thd(x, 10000.0, 50.0)).margin(1e-12));
    }
}

TEST_CASE("Parseval: harmonic RMS matches time-domain RMS", "[analysis][property]") {
    auto f = [](double ph) { return 0.3 + std::sin(ph) + 0.2 * std::cos(5.0 * ph) + 0.05 * std::sin(11.0 * ph); };
    const auto x = sampled(1000, 2, f);
    const auto h = harmonic_spectrum(x, 50000.0, 50.0);
    CHECK(h.dc == Approx(0.3));
    CHECK(h.rms() == Approx(rms(x)).epsilon(1e-3));
}

TEST_CASE("harmonic analysis rejects unusable windows", "[analysis]") {
    const auto x = sampled(400, 1, [](double ph) { return std::sin(ph); });
    const std::vector<double> partial(x.begin(), x.begin() + 300);
    CHECK_THROWS_AS(thd(partial, 20000.0, 50.0), AnalysisError);
    CHECK_THROWS_AS(thd(std::vector<double>{}, 20000.0, 50.0), AnalysisError);
    CHECK_THROWS_AS(thd(x, 20000.0, 50.0, 300), AnalysisError);  // above Nyquist
    CHECK_THROWS_AS(thd(std::vector<double>(400, 1.0), 20000.0, 50.0), AnalysisError);  // no fundamental
}

// -----------------------------------------------------------------------------
// Power
// -----------------------------------------------------------------------------

TEST_CASE("power metrics for in-phase, shifted and quadrature current", "[analysis][oracle]") {
    const double fs = 20000.0, f0 = 50.0;
    const auto v = sampled(400, 1, [](double ph) { return 325.0 * std::sin(ph); });

    auto i = sampled(400, 1, [](double ph) { return 15.0 * std::sin(ph); });
    auto pm = power_metrics(v, i, fs, f0);
    CHECK(pm.p == Approx(0.5 * 325.0 * 15.0));
    REQUIRE(pm.pf.has_value());
    CHECK(*pm.pf == Approx(1.0));
    CHECK(pm.phase_shift_deg == Approx(0.0).margin(1e-9));

    const double phi = 16.7 * kPi / 180.0;
    i = sampled(400, 1, [phi](double ph) { return 15.0 * std::sin(ph + phi); });  // leading
    pm = power_metrics(v, i, fs, f0);
    CHECK(*pm.pf == Approx(0.9578).margin(1e-4));
    CHECK(pm.phase_shift_deg == Approx(-16.7));
    CHECK(pm.q < 0.0);
    CHECK(pm.s == Approx(std::hypot(pm.p, pm.q)));

    i = sampled(400, 1, [](double ph) { return 15.0 * std::cos(ph); });
    pm = power_metrics(v, i, fs, f0);
    CHECK(pm.p == Approx(0.0).margin(1e-9));
    CHECK(*pm.pf == Approx(0.0).margin(1e-12));

    pm = power_metrics(v, std::vector<double>(400, 0.0), fs, f0);
    CHECK_FALSE(pm.pf.has_value());
    CHECK_THROWS_AS(power_metrics(v, std::vector<double>(10, 0.0), fs, f0), AnalysisError);
}

// -----------------------------------------------------------------------------
// Capacitor sizing
// -----------------------------------------------------------------------------

TEST_CASE("capacitor sizing examples", "[analysis][oracle]") {
    const SizingInputs base{7000.0, 200.0, 1.0, 5000.0, 20.0};
    const auto r = capacitor_sizing(base);
    CHECK(r.capacitance * 1e6 == Approx(350.0));
    CHECK(r.i_out == Approx(35.0));
    CHECK(r.delta_q == Approx(7e-3));
    SizingInputs m = base;
    m.m_index = 0.77;
    CHECK(capacitor_sizing(m).capacitance * 1e6 == Approx(269.5));
}

TEST_CASE("capacitor sizing scales as expected", "[analysis][property]") {
    const SizingInputs base{4400.0, 400.0, 0.815, 5000.0, 10.0};
    const double c0 = capacitor_sizing(base).capacitance;
    SizingInputs s = base;
    s.delta_v *= 2.0;
    CHECK(capacitor_sizing(s).capacitance == Approx(0.5 * c0));
    s = base;
    s.p_out *= 3.0;
    CHECK(capacitor_sizing(s).capacitance == Approx(3.0 * c0));
    s = base;
    s.f_sw *= 2.0;
    CHECK(capacitor_sizing(s).capacitance < c0);
    s = base;
    s.v_dc *= 1.5;
    CHECK(capacitor_sizing(s).capacitance < c0);
}

TEST_CASE("capacitor sizing validates its inputs", "[analysis]") {
    CHECK_THROWS_AS(capacitor_sizing({0.0, 200.0, 1.0, 5000.0, 20.0}), AnalysisError);
    CHECK_THROWS_AS(capacitor_sizing({7000.0, 200.0, -1.0, 5000.0, 20.0}), AnalysisError);
    CHECK_THROWS_AS(capacitor_sizing({7000.0, 200.0, 1.0, 5000.0, 0.0}), AnalysisError);
    CHECK_THROWS_AS(capacitor_sizing({7000.0, 200.0, 1.0, 5000.0, 250.0}), AnalysisError);
}

// -----------------------------------------------------------------------------
// Records: efficiency, ripple, stress
// -----------------------------------------------------------------------------

namespace {

/// Hand-built record with constant Pos1 gating and no losses.
WaveformRecord lossless_record(std::size_t n) {
    const CircuitParams p;
    WaveformRecord rec;
    rec.dt = 1e-6;
    const auto code = Configuration{SwitchingState::Pos1}.code();
    const auto gates = gate_vector_for_state(SwitchingState::Pos1).bits();
    const StateVector x = StateVector::initial(p);
    for (std::size_t k = 0; k < n; ++k) {
        rec.config.push_back(code);
        rec.gates.push_back(gates);
        const Vec6 v = x.to_vec();
        for (int c = 0; c < 6; ++c) rec.x[static_cast<std::size_t>(c)].push_back(v(c));
        const double e = 100.0 * static_cast<double>(k) * rec.dt;
        rec.e_src.push_back(e);
        rec.e_load.push_back(e);
        rec.e_diss.push_back(0.0);
        rec.e_diode.push_back(0.0);
    }
    return rec;
}

}  // namespace

TEST_CASE("a lossless record has unit efficiency", "[analysis][oracle]") {
    const CircuitParams p;
    const WaveformRecord rec = lossless_record(1000);
    const auto b = efficiency(rec, p, 0, 999);
    CHECK(b.eta == Approx(1.0));
    CHECK(b.e_switching == 0.0);
    CHECK(b.d_stored == 0.0);
    CHECK(efficiency(rec, p, 10, 10).eta == 0.0);
    const auto counts = transition_counts(rec, 0, 999);
    for (int c : counts) CHECK(c == 0);
}

TEST_CASE("closed-loop efficiency is bounded and the ledger closes", "[analysis][property]") {
    const CircuitParams p;
    const ModulationConfig mod;
    SimConfig sc;
    sc.t_end = 0.06;
    StandaloneDriver drv(p, mod, sc.dt_ctrl, 230.0, StepProfile(24.0));
    const WaveformRecord rec = simulate(drv, p, sc, TerminalCondition::load(24.0), StateVector::initial(p));
    const std::size_t a = rec.index_at(0.04), b = rec.size() - 1;
    const auto e = efficiency(rec, p, a, b);
    CHECK(e.eta > 0.0);
    CHECK(e.eta < 1.0);
    CHECK(e.e_switching > 0.0);
    // Source energy = load + resistive + diode + change in storage.
    CHECK(e.e_load + e.e_conduction + e.e_diode + e.d_stored == Approx(e.e_source).epsilon(1e-6));

    const auto counts = transition_counts(rec, a, b);
    CHECK(counts[static_cast<std::size_t>(SwitchId::S2)] <= 2);
    CHECK(counts[static_cast<std::size_t>(SwitchId::S6)] <= 2);

    const auto rb = ripple_and_balance(rec, a, b);
    for (const auto& c : rb.caps) {
        CHECK(c.min <= c.mean);
        CHECK(c.mean <= c.max);
    }
    CHECK(rb.max_imbalance >= 0.0);

    const std::size_t per = static_cast<std::size_t>(std::lround(1.0 / (mod.f_sw * rec.dt)));
    const auto dv = delta_v_per_period(rec, p, b - per, b);
    CHECK(dv.measured_excursion >= std::abs(dv.measured_net));
    CHECK(dv.predicted_excursion == dv.series_term);
    CHECK(delta_v_per_period(rec, p, b, b).measured_excursion == 0.0);

    const auto st = stress_summary(rec, p, 0.04, 0.06);
    CHECK(st.v_dc == 400.0);
    CHECK(st[SwitchId::S5].class_limit == Approx(600.0));
    for (const auto& d : st.devices) {
        CHECK(d.span == Approx(d.max - d.min));
        CHECK(d.min <= d.max);
    }
    CHECK_THROWS_AS(stress_summary(rec, p, 0.059, 0.06), AnalysisError);
}

TEST_CASE("device stress classes", "[analysis][oracle]") {
    CHECK(stress_class(SwitchId::S5) == 1.5);
    for (SwitchId id : {SwitchId::S1, SwitchId::S2, SwitchId::S6, SwitchId::S7}) CHECK(stress_class(id) == 1.0);
    for (SwitchId id : {SwitchId::S3, SwitchId::S3p, SwitchId::S4, SwitchId::S8, SwitchId::S9, SwitchId::D1}) {
        CHECK(stress_class(id) == 0.5);
    }
}
