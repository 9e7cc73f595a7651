#include "scinv/circuit.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace scinv;
using Catch::Approx;

namespace {

// Switching table, frozen row by row: S1 S2 S3 S3' S4 S5 S6 S7 S8 S9.
struct TableRow {
    SwitchingState state;
    std::array<int, 10> gates;
};

constexpr TableRow kTable[] = {
    {SwitchingState::Pos1, {1, 1, 1, 1, 0, 1, 0, 0, 0, 0}},
    {SwitchingState::Pos2, {1, 1, 0, 0, 1, 1, 0, 0, 0, 0}},
    {SwitchingState::ZeroPos, {0, 1, 1, 1, 0, 0, 0, 0, 0, 0}},
    {SwitchingState::ZeroNeg, {0, 0, 1, 1, 0, 0, 1, 0, 0, 0}},
    {SwitchingState::Neg1, {0, 0, 1, 1, 0, 0, 1, 1, 0, 1}},
    {SwitchingState::Neg2, {0, 0, 0, 0, 1, 0, 1, 1, 1, 0}},
};

constexpr SwitchId kGated[] = {SwitchId::S1, SwitchId::S2, SwitchId::S3, SwitchId::S3p, SwitchId::S4,
                               SwitchId::S5, SwitchId::S6, SwitchId::S7, SwitchId::S8, SwitchId::S9};

StateVector sv(double v1, double v2, double v3, double i1 = 0, double i2 = 0, double vf = 0) {
    return {v1, v2, v3, i1, i2, vf};
}

/// d/dt of stored energy with all inputs zero: x' M A x, M = diag(C, L).
double energy_rate(const LinearOde& ode, const CircuitParams& p, const Vec6& x) {
    Vec6 m;
    m << p.c1, p.c2, p.c3, p.l1, p.l2, p.cf;
    const Vec6 dx = ode.a * x;
    return (m.array() * x.array() * dx.array()).sum();
}

}  // namespace

// -----------------------------------------------------------------------------
// Switching table
// -----------------------------------------------------------------------------

TEST_CASE("gate vectors reproduce every switching-table row", "[circuit][table]") {
    for (const auto& row : kTable) {
        CAPTURE(to_string(row.state));
        const GateVector g = gate_vector_for_state(row.state);
        for (std::size_t k = 0; k < 10; ++k) {
            CAPTURE(to_string(kGated[k]));
            CHECK(g[kGated[k]] == (row.gates[k] == 1));
        }
        CHECK(g.satisfies_invariants());
        CHECK(state_for_gates(g) == row.state);
    }
}

TEST_CASE("named table rows", "[circuit][table]") {
    auto on = [](SwitchingState s) {
        std::vector<std::string> out;
        const GateVector g = gate_vector_for_state(s);
        for (SwitchId id : kGated) {
            if (g[id]) out.emplace_back(to_string(id));
        }
        return out;
    };
    CHECK(on(SwitchingState::Pos2) == std::vector<std::string>{"S1", "S2", "S4", "S5"});
    CHECK(on(SwitchingState::ZeroPos) == std::vector<std::string>{"S2", "S3", "S3p"});
    CHECK(on(SwitchingState::Neg1) == std::vector<std::string>{"S3", "S3p", "S6", "S7", "S9"});
}

TEST_CASE("device inventory", "[circuit]") {
    CHECK(kGatedSwitchCount == 10);
    CHECK(kDeviceCount == 11);
    CHECK(kAllDevices.back() == SwitchId::D1);
}

TEST_CASE("gate vector invariants and inverse lookup", "[circuit][table]") {
    CHECK_FALSE(state_for_gates(GateVector{}).has_value());

    GateVector split;
    split.set(SwitchId::S3, true);
    CHECK_FALSE(split.satisfies_invariants());

    GateVector shoot;
    shoot.set(SwitchId::S3, true);
    shoot.set(SwitchId::S3p, true);
    shoot.set(SwitchId::S4, true);
    CHECK_FALSE(shoot.satisfies_invariants());

    GateVector pump;
    pump.set(SwitchId::S8, true);
    pump.set(SwitchId::S9, true);
    CHECK_FALSE(pump.satisfies_invariants());

    GateVector stray = gate_vector_for_state(SwitchingState::Pos1);
    stray.set(SwitchId::S7, true);
    CHECK_THROWS_AS(state_for_gates(stray), std::invalid_argument);

    // Every one of the 1024 vectors either maps to a row, is all-off, or is rejected.
    int rows = 0;
    for (unsigned bits = 0; bits < 1024; ++bits) {
        const GateVector g = GateVector::from_bits(static_cast<std::uint16_t>(bits));
        try {
            if (state_for_gates(g)) ++rows;
        } catch (const std::invalid_argument&) {
        }
    }
    CHECK(rows == 6);
}

// -----------------------------------------------------------------------------
// Parameters
// -----------------------------------------------------------------------------

TEST_CASE("default parameters and validation", "[circuit]") {
    CircuitParams p;
    CHECK(p.vin == 200.0);
    CHECK(p.c1 == 270e-6);
    CHECK(p.c2 == p.c1);
    CHECK(p.c3 == 270e-6);
    CHECK(p.l1 == 10e-3);
    CHECK(p.l2 == 10e-3);
    CHECK(p.cf == 8e-6);
    CHECK_NOTHROW(p.validate());

    for (double CircuitParams::*f : {&CircuitParams::vin, &CircuitParams::c1, &CircuitParams::c3, &CircuitParams::l2,
                                     &CircuitParams::r_on, &CircuitParams::r_src, &CircuitParams::t_sw}) {
        CircuitParams bad;
        bad.*f = 0.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad.*f = -1.0;
        CHECK_THROWS_AS(assemble_state_ode(SwitchingState::Pos1, bad, TerminalCondition::grid()), std::invalid_argument);
    }

    const StateVector x0 = StateVector::initial(p);
    CHECK(x0.vC1 == 200.0);
    CHECK(x0.vC2 == 200.0);
    CHECK(x0.vC3 == 200.0);
    CHECK(x0.iL1 == 0.0);
    CHECK(x0.iL2 == 0.0);
    CHECK(x0.vCf == 0.0);
}

// -----------------------------------------------------------------------------
// State equations
// -----------------------------------------------------------------------------

TEST_CASE("zero states isolate the cell from the output current", "[circuit][ode]") {
    const CircuitParams p;
    for (auto st : {SwitchingState::ZeroPos, SwitchingState::ZeroNeg}) {
        for (const auto& term : {TerminalCondition::grid(), TerminalCondition::load(12.0)}) {
            const LinearOde ode = assemble_state_ode(st, p, term);
            CHECK(ode.a(kVC1, kIL1) == 0.0);
            CHECK(ode.a(kVC2, kIL1) == 0.0);
        }
    }
}

TEST_CASE("series state carries the output current through both capacitors", "[circuit][ode]") {
    CircuitParams p;
    p.c2 = 330e-6;  // distinct so the rows are distinguishable
    const LinearOde ode = assemble_state_ode(SwitchingState::Pos2, p, TerminalCondition::grid());
    CHECK(ode.a(kVC1, kIL1) == Approx(-1.0 / p.c1).epsilon(1e-9));
    CHECK(ode.a(kVC2, kIL1) == Approx(-1.0 / p.c2).epsilon(1e-9));
    // No source coupling in the series state.
    CHECK(ode.b_in(kVC1, kUVin) == 0.0);
    CHECK(ode.b_in(kVC2, kUVin) == 0.0);

    const LinearOde neg = assemble_state_ode(SwitchingState::Neg2, p, TerminalCondition::grid());
    CHECK(neg.a(kVC1, kIL1) == Approx(1.0 / p.c1).epsilon(1e-9));
    CHECK(neg.a(kVC2, kIL1) == Approx(1.0 / p.c2).epsilon(1e-9));
}

TEST_CASE("ODE matrices are finite in every configuration", "[circuit][ode]") {
    const CircuitParams p;
    for (auto st : kAllStates) {
        for (bool d1 : {false, true}) {
            if (d1 && !pump_window(Configuration{st})) continue;
            const LinearOde ode = assemble_state_ode(st, p, TerminalCondition::grid(), d1);
            CHECK(ode.a.allFinite());
            CHECK(ode.b_in.allFinite());
        }
    }
}

TEST_CASE("passivity: stored energy never grows with sources zeroed", "[circuit][property]") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> v(-300.0, 300.0), i(-40.0, 40.0);
    CircuitParams p;
    for (auto st : kAllStates) {
        for (const auto& term : {TerminalCondition::grid(), TerminalCondition::load(12.0)}) {
            for (bool d1 : {false, true}) {
                if (d1 && !pump_window(Configuration{st})) continue;
                const StateCircuit sc = assemble_state_circuit(Configuration{st}, p, term, d1);
                for (int k = 0; k < 200; ++k) {
                    Vec6 x;
                    x << v(rng), v(rng), v(rng), i(rng), i(rng), v(rng);
                    INFO(to_string(st) << " d1=" << d1);
                    CHECK(energy_rate(sc.ode, p, x) <= 1e-9 * x.squaredNorm());
                }
            }
        }
    }
    // Idle freewheel as well.
    const StateCircuit idle = assemble_state_circuit(Configuration::idle(), p, TerminalCondition::grid(), false);
    Vec6 x;
    x << 190, 200, 180, 12, -3, 50;
    CHECK(energy_rate(idle.ode, p, x) <= 0.0);
}

TEST_CASE("source and grid return share one node in every configuration", "[circuit][property]") {
    const CircuitParams p;
    std::vector<Configuration> cfgs = {Configuration::idle()};
    for (auto st : kAllStates) cfgs.push_back(Configuration{st});
    for (const auto& cfg : cfgs) {
        for (bool d1 : {false, true}) {
            if (d1 && !pump_window(cfg)) continue;
            const Netlist n = build_netlist(cfg, p, TerminalCondition::grid(), d1);
            bool saw_vin = false, saw_grid = false;
            for (const auto& s : n.sources) {
                if (s.kind != VoltageElem::Kind::Input) continue;
                if (s.index == kUVin) {
                    saw_vin = true;
                    CHECK(s.minus == Node::N);
                }
                if (s.index == kUGrid) {
                    saw_grid = true;
                    CHECK(s.minus == Node::N);
                }
            }
            CHECK(saw_vin);
            CHECK(saw_grid);
        }
    }
}

// -----------------------------------------------------------------------------
// Output levels, diode and blocking voltages
// -----------------------------------------------------------------------------

TEST_CASE("raw output levels", "[circuit]") {
    const StateVector x = sv(200, 200, 200);
    CHECK(raw_output_voltage(SwitchingState::Pos2, x) == 400.0);
    CHECK(raw_output_voltage(SwitchingState::ZeroNeg, sv(123, 77, 5)) == 0.0);
    CHECK(raw_output_voltage(SwitchingState::ZeroPos, sv(123, 77, 5)) == 0.0);
    CHECK(raw_output_voltage(SwitchingState::Neg1, x) == -200.0);
    CHECK(raw_output_voltage(SwitchingState::Pos1, sv(198, 202, 0)) == 200.0);
    CHECK(raw_output_voltage(SwitchingState::Neg2, sv(190, 195, 0)) == -385.0);
}

TEST_CASE("charge-pump diode bias", "[circuit]") {
    const CircuitParams p;
    const Configuration neg2{SwitchingState::Neg2};
    CHECK(d1_conducting(neg2, sv(200, 200, 190), p));
    CHECK_FALSE(d1_conducting(neg2, sv(200, 200, 200), p));
    CHECK_FALSE(d1_conducting(neg2, sv(200, 200, 199.5), p));  // below the forward drop
    for (auto st : {SwitchingState::Pos1, SwitchingState::Pos2, SwitchingState::ZeroPos, SwitchingState::Neg1}) {
        CHECK_FALSE(d1_conducting(Configuration{st}, sv(200, 200, 100), p));
    }
    CHECK_FALSE(d1_conducting(Configuration::idle(), sv(200, 200, 100), p));
    // ZeroNeg charges C3 through S8's reverse diode although S8 is not gated.
    CHECK(pump_window(Configuration{SwitchingState::ZeroNeg}));
    CHECK(d1_conducting(Configuration{SwitchingState::ZeroNeg}, sv(200, 200, 190), p));
}

TEST_CASE("blocking voltages of nominal states", "[circuit][stress]") {
    const CircuitParams p;
    const StateVector x = sv(200, 200, 200);
    for (auto st : kAllStates) {
        const auto vb = blocking_voltages(st, x, p);
        const GateVector g = gate_vector_for_state(st);
        for (std::size_t k = 0; k < kGatedSwitchCount; ++k) {
            INFO(to_string(st) << " " << to_string(kAllDevices[k]));
            if (g[kAllDevices[k]]) CHECK(vb[k] == 0.0);
            const SwitchId id = kAllDevices[k];
            const bool half = id == SwitchId::S3 || id == SwitchId::S3p || id == SwitchId::S4 ||
                              id == SwitchId::S8 || id == SwitchId::S9;
            CHECK(std::abs(vb[k]) <= (half ? 200.0 : 400.0) + 1e-9);
        }
    }
    // S5 sees both polarities: +vin and -(vC1 + vC2).
    double s5_min = 1e9, s5_max = -1e9;
    for (auto st : kAllStates) {
        const double v = blocking_voltages(st, x, p)[static_cast<std::size_t>(SwitchId::S5)];
        s5_min = std::min(s5_min, v);
        s5_max = std::max(s5_max, v);
    }
    CHECK(s5_max == Approx(200.0));
    CHECK(s5_min == Approx(-400.0));
}

TEST_CASE("on-state blocking voltage is the conduction drop", "[circuit][stress]") {
    const CircuitParams p;
    std::array<double, kDeviceCount> currents{};
    currents.fill(10.0);
    const auto vb = blocking_voltages(Configuration{SwitchingState::Pos2}, sv(200, 200, 200), p, &currents);
    CHECK(vb[static_cast<std::size_t>(SwitchId::S1)] == Approx(p.r_on * 10.0));
    CHECK(vb[static_cast<std::size_t>(SwitchId::S4)] == Approx(p.r_on * 10.0));
}

TEST_CASE("stored energy", "[circuit]") {
    CircuitParams p;
    const double e = stored_energy(sv(200, 100, 0, 2, 0, 10), p);
    CHECK(e == Approx(0.5 * p.c1 * 40000 + 0.5 * p.c2 * 10000 + 0.5 * p.l1 * 4 + 0.5 * p.cf * 100));
}
