#include "scinv/circuit.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace scinv {

std::string_view to_string(SwitchId id) {
    switch (id) {
        case SwitchId::S1: return "S1";
        case SwitchId::S2: return "S2";
        case SwitchId::S3: return "S3";
        case SwitchId::S3p: return "S3p";
        case SwitchId::S4: return "S4";
        case SwitchId::S5: return "S5";
        case SwitchId::S6: return "S6";
        case SwitchId::S7: return "S7";
        case SwitchId::S8: return "S8";
        case SwitchId::S9: return "S9";
        case SwitchId::D1: return "D1";
    }
    return "?";
}

std::string_view to_string(SwitchingState s) {
    switch (s) {
        case SwitchingState::Pos1: return "Pos1";
        case SwitchingState::Pos2: return "Pos2";
        case SwitchingState::ZeroPos: return "ZeroPos";
        case SwitchingState::ZeroNeg: return "ZeroNeg";
        case SwitchingState::Neg1: return "Neg1";
        case SwitchingState::Neg2: return "Neg2";
    }
    return "?";
}

// -----------------------------------------------------------------------------
// GateVector
// -----------------------------------------------------------------------------

unsigned GateVector::index(SwitchId id) {
    if (id == SwitchId::D1) {
        throw std::invalid_argument("D1 is not a gated device");
    }
    return static_cast<unsigned>(id);
}

void GateVector::set(SwitchId id, bool on) {
    const auto mask = static_cast<std::uint16_t>(1u << index(id));
    bits_ = on ? static_cast<std::uint16_t>(bits_ | mask)
               : static_cast<std::uint16_t>(bits_ & ~mask);
}

GateVector GateVector::from_bits(std::uint16_t bits) {
    GateVector g;
    g.bits_ = static_cast<std::uint16_t>(bits & 0x3FFu);
    return g;
}

bool GateVector::satisfies_invariants() const {
    const GateVector& g = *this;
    return g[SwitchId::S3] == g[SwitchId::S3p] &&
           !(g[SwitchId::S3] && g[SwitchId::S4]) &&
           !(g[SwitchId::S8] && g[SwitchId::S9]);
}

namespace {

GateVector make_gates(std::initializer_list<SwitchId> on) {
    GateVector g;
    for (auto id : on) g.set(id, true);
    return g;
}

}  // namespace

GateVector gate_vector_for_state(SwitchingState state) {
    using S = SwitchId;
    switch (state) {
        case SwitchingState::Pos1: return make_gates({S::S1, S::S2, S::S3, S::S3p, S::S5});
        case SwitchingState::Pos2: return make_gates({S::S1, S::S2, S::S4, S::S5});
        case SwitchingState::ZeroPos: return make_gates({S::S2, S::S3, S::S3p});
        case SwitchingState::ZeroNeg: return make_gates({S::S3, S::S3p, S::S6});
        case SwitchingState::Neg1: return make_gates({S::S3, S::S3p, S::S6, S::S7, S::S9});
        case SwitchingState::Neg2: return make_gates({S::S4, S::S6, S::S7, S::S8});
    }
    return {};
}

std::optional<SwitchingState> state_for_gates(const GateVector& gates) {
    if (gates.bits() == 0) return std::nullopt;
    for (auto s : kAllStates) {
        if (gate_vector_for_state(s) == gates) return s;
    }
    throw std::invalid_argument("gate vector 0x" + std::to_string(gates.bits()) +
                                " matches no switching-table row");
}

// -----------------------------------------------------------------------------
// Parameters / state
// -----------------------------------------------------------------------------

void CircuitParams::validate() const {
    const std::pair<const char*, double> fields[] = {
        {"vin", vin}, {"c1", c1},       {"c2", c2},       {"c3", c3},
        {"l1", l1},   {"l2", l2},       {"cf", cf},       {"r_on", r_on},
        {"r_src", r_src}, {"v_d", v_d}, {"r_load", r_load}, {"t_sw", t_sw}};
    for (const auto& [name, value] : fields) {
        if (!(value > 0.0) || !std::isfinite(value)) {
            throw std::invalid_argument(std::string("circuit parameter '") + name +
                                        "' must be positive and finite, got " +
                                        std::to_string(value));
        }
    }
}

Vec6 StateVector::to_vec() const {
    Vec6 v;
    v << vC1, vC2, vC3, iL1, iL2, vCf;
    return v;
}

StateVector StateVector::from_vec(const Vec6& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

StateVector StateVector::initial(const CircuitParams& p) {
    return {p.vin, p.vin, p.vin, 0.0, 0.0, 0.0};
}

double stored_energy(const StateVector& x, const CircuitParams& p) {
    return 0.5 * (p.c1 * x.vC1 * x.vC1 + p.c2 * x.vC2 * x.vC2 + p.c3 * x.vC3 * x.vC3 +
                  p.l1 * x.iL1 * x.iL1 + p.l2 * x.iL2 * x.iL2 + p.cf * x.vCf * x.vCf);
}

// -----------------------------------------------------------------------------
// Netlists
// -----------------------------------------------------------------------------

Netlist build_netlist(const Configuration& cfg, const CircuitParams& p,
                      const TerminalCondition& term, bool d1_on) {
    using S = SwitchId;
    using VK = VoltageElem::Kind;
    Netlist n;
    const double r = p.r_on;

    auto sw = [&](Node a, Node b, SwitchId id) {
        n.resistors.push_back({a, b, r, Carrier::Switch, id});
    };
    auto cap = [&](Node plus, Node minus, int idx) {
        n.sources.push_back({plus, minus, VK::State, idx});
    };

    // PV source and its loop resistance; the negative terminal is node N.
    n.sources.push_back({Node::P0, Node::N, VK::Input, kUVin});
    n.resistors.push_back({Node::P0, Node::P, p.r_src, Carrier::SourceLoop});

    // LCL filter and terminal, common to every configuration.
    n.inductors.push_back({Node::O, Node::F, kIL1});
    cap(Node::F, Node::N, kVCf);
    if (term.kind == TerminalCondition::Kind::Grid) {
        n.inductors.push_back({Node::F, Node::G, kIL2});
        n.sources.push_back({Node::G, Node::N, VK::Input, kUGrid});
    } else {
        // Off-grid the load sits on the filter capacitor (L1-Cf filter). The
        // grid-side inductor is parked across neutral and keeps zero current.
        n.inductors.push_back({Node::N, Node::N, kIL2});
        n.resistors.push_back({Node::F, Node::N, term.r_load, Carrier::Load});
    }

    if (cfg.is_idle()) {
        n.resistors.push_back({Node::O, Node::N, 2.0 * r, Carrier::BodyDiode});
        return n;
    }

    switch (*cfg.state) {
        case SwitchingState::Pos1:
            // Source charges the paralleled cell while it feeds the output.
            sw(Node::P, Node::T, S::S1);
            cap(Node::M1, Node::N, kVC1);
            cap(Node::M2, Node::N, kVC2);
            sw(Node::T, Node::M1, S::S3);
            sw(Node::T, Node::M2, S::S3p);
            sw(Node::T, Node::X, S::S2);
            sw(Node::X, Node::O, S::S5);
            break;
        case SwitchingState::Pos2:
            // Series stack, source disconnected.
            cap(Node::T, Node::M1, kVC1);
            sw(Node::M1, Node::M2, S::S4);
            cap(Node::M2, Node::B, kVC2);
            sw(Node::B, Node::N, S::S1);
            sw(Node::T, Node::X, S::S2);
            sw(Node::X, Node::O, S::S5);
            break;
        case SwitchingState::ZeroPos:
        case SwitchingState::ZeroNeg:
            // Output freewheels to neutral; S3/S3' keep the cell paralleled.
            cap(Node::M1, Node::N, kVC1);
            cap(Node::M2, Node::N, kVC2);
            sw(Node::M1, Node::T, S::S3);
            sw(Node::M2, Node::T, S::S3p);
            sw(Node::O, Node::N,
               *cfg.state == SwitchingState::ZeroPos ? S::S2 : S::S6);
            if (d1_on && *cfg.state == SwitchingState::ZeroNeg) {
                // C3 recharges from the source while the output freewheels;
                // S8 is gated off here, so the branch runs through its diode.
                n.sources.push_back({Node::P, Node::K, VK::Input, kUDiode});
                sw(Node::K, Node::Q, S::S8);
                cap(Node::Q, Node::N, kVC3);
            }
            break;
        case SwitchingState::Neg1:
            // Reversed parallel cell; C3 paralleled onto it through S9.
            sw(Node::N, Node::U, S::S6);
            cap(Node::U, Node::M1, kVC1);
            cap(Node::U, Node::M2, kVC2);
            sw(Node::M1, Node::T, S::S3);
            sw(Node::M2, Node::T, S::S3p);
            sw(Node::T, Node::O, S::S7);
            cap(Node::Q, Node::T, kVC3);
            sw(Node::Q, Node::U, S::S9);
            break;
        case SwitchingState::Neg2:
            // Reversed series stack; C3 charges from the source via D1, S8.
            sw(Node::N, Node::U, S::S6);
            cap(Node::U, Node::M1, kVC1);
            sw(Node::M1, Node::M2, S::S4);
            cap(Node::M2, Node::T, kVC2);
            sw(Node::T, Node::O, S::S7);
            if (d1_on) {
                n.sources.push_back({Node::P, Node::K, VK::Input, kUDiode});
                sw(Node::K, Node::Q, S::S8);
                cap(Node::Q, Node::N, kVC3);
            }
            break;
    }
    return n;
}

// -----------------------------------------------------------------------------
// Elimination
// -----------------------------------------------------------------------------

namespace {

constexpr int kNodeCount = static_cast<int>(Node::Count);

struct Elimination {
    // Row of the solution vector for each node (-1 for N or unused).
    std::array<int, kNodeCount> node_row{};
    int size = 0;
    Eigen::MatrixXd solution;  // size x 9, one column per z component

    Row9 node_voltage(Node n) const {
        const int row = node_row[static_cast<int>(n)];
        if (row < 0) return Row9::Zero();
        return solution.row(row);
    }
};

Elimination eliminate(const Netlist& net) {
    Elimination e;
    e.node_row.fill(-1);
    auto touch = [&](Node n) {
        if (n == Node::N) return;
        auto& row = e.node_row[static_cast<int>(n)];
        if (row < 0) row = e.size++;
    };
    for (const auto& r : net.resistors) { touch(r.a); touch(r.b); }
    for (const auto& v : net.sources) { touch(v.plus); touch(v.minus); }
    for (const auto& l : net.inductors) { touch(l.from); touch(l.to); }

    const int n_nodes = e.size;
    const int n_src = static_cast<int>(net.sources.size());
    const int dim = n_nodes + n_src;
    e.size = dim;

    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(dim, 9);
    auto row_of = [&](Node n) { return e.node_row[static_cast<int>(n)]; };

    for (const auto& r : net.resistors) {
        const double g = 1.0 / r.r;
        const int a = row_of(r.a);
        const int b = row_of(r.b);
        if (a >= 0) m(a, a) += g;
        if (b >= 0) m(b, b) += g;
        if (a >= 0 && b >= 0) {
            m(a, b) -= g;
            m(b, a) -= g;
        }
    }
    for (int k = 0; k < n_src; ++k) {
        const auto& v = net.sources[static_cast<std::size_t>(k)];
        const int col = n_nodes + k;
        const int a = row_of(v.plus);
        const int b = row_of(v.minus);
        // Branch current enters the plus terminal.
        if (a >= 0) { m(a, col) += 1.0; m(col, a) += 1.0; }
        if (b >= 0) { m(b, col) -= 1.0; m(col, b) -= 1.0; }
        const int zi = v.kind == VoltageElem::Kind::State ? v.index : 6 + v.index;
        rhs(col, zi) = 1.0;
    }
    for (const auto& l : net.inductors) {
        const int a = row_of(l.from);
        const int b = row_of(l.to);
        if (a >= 0) rhs(a, l.state_index) -= 1.0;
        if (b >= 0) rhs(b, l.state_index) += 1.0;
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (!lu.isInvertible()) {
        throw std::runtime_error("equivalent circuit is singular (floating node or zero-resistance loop)");
    }
    e.solution = lu.solve(rhs);
    if (!e.solution.allFinite()) {
        throw std::runtime_error("equivalent circuit produced non-finite solution");
    }
    return e;
}

Mat9 outer_sym(const Row9& a, const Row9& b, double scale) {
    Mat9 q = scale * (a.transpose() * b);
    return 0.5 * (q + q.transpose());
}

Row9 unit(int i) {
    Row9 r = Row9::Zero();
    r[i] = 1.0;
    return r;
}

}  // namespace

StateCircuit assemble_state_circuit(const Configuration& cfg, const CircuitParams& p,
                                    const TerminalCondition& term, bool d1_on) {
    p.validate();
    if (term.kind == TerminalCondition::Kind::Load && !(term.r_load > 0.0)) {
        throw std::invalid_argument("load resistance must be positive");
    }
    const bool pump = d1_on && pump_window(cfg);
    const Netlist net = build_netlist(cfg, p, term, pump);
    const Elimination e = eliminate(net);
    const int n_nodes = e.size - static_cast<int>(net.sources.size());

    StateCircuit sc;
    Eigen::Matrix<double, 6, 9> f = Eigen::Matrix<double, 6, 9>::Zero();
    const double cap_value[6] = {p.c1, p.c2, p.c3, 0.0, 0.0, p.cf};

    for (std::size_t k = 0; k < net.sources.size(); ++k) {
        const auto& v = net.sources[k];
        const Row9 current = e.solution.row(n_nodes + static_cast<int>(k));
        if (v.kind == VoltageElem::Kind::State) {
            f.row(v.index) = current / cap_value[v.index];
            continue;
        }
        switch (v.index) {
            case kUVin: sc.p_source = outer_sym(unit(6 + kUVin), -current, 1.0); break;
            case kUGrid: sc.p_load = outer_sym(unit(6 + kUGrid), current, 1.0); break;
            case kUDiode:
                sc.i_diode = current;
                sc.p_diode = outer_sym(unit(6 + kUDiode), current, 1.0);
                break;
            default: break;
        }
    }
    for (const auto& l : net.inductors) {
        const double ind = l.state_index == kIL1 ? p.l1 : p.l2;
        f.row(l.state_index) = (e.node_voltage(l.from) - e.node_voltage(l.to)) / ind;
    }
    for (const auto& r : net.resistors) {
        const Row9 vd = e.node_voltage(r.a) - e.node_voltage(r.b);
        const Mat9 q = outer_sym(vd, vd, 1.0 / r.r);
        if (r.carrier == Carrier::Load) {
            sc.p_load += q;
        } else {
            sc.p_dissipated += q;
        }
        if (r.carrier == Carrier::Switch) {
            sc.device_current[static_cast<std::size_t>(r.device)] = vd / r.r;
        }
    }
    if (cfg.state == SwitchingState::Pos1) {
        sc.i_cell_parallel = sc.device_current[static_cast<std::size_t>(SwitchId::S1)];
    } else if (cfg.state == SwitchingState::Neg1) {
        sc.i_cell_parallel = sc.device_current[static_cast<std::size_t>(SwitchId::S9)];
    }
    if (pump) {
        sc.device_current[static_cast<std::size_t>(SwitchId::D1)] = sc.i_diode;
    }

    sc.ode.a = f.leftCols<6>();
    sc.ode.b_in = f.rightCols<3>();
    sc.v_raw = e.node_voltage(Node::O);
    sc.v_term = e.node_voltage(term.kind == TerminalCondition::Kind::Grid ? Node::G : Node::F);
    if (!sc.ode.a.allFinite() || !sc.ode.b_in.allFinite()) {
        throw std::runtime_error("non-finite ODE coefficients");
    }
    return sc;
}

LinearOde assemble_state_ode(SwitchingState state, const CircuitParams& p,
                             const TerminalCondition& term, bool d1_on) {
    return assemble_state_circuit(Configuration{state}, p, term, d1_on).ode;
}

// -----------------------------------------------------------------------------
// Levels and stress
// -----------------------------------------------------------------------------

double raw_output_voltage(SwitchingState state, const StateVector& x) {
    const double cell = 0.5 * (x.vC1 + x.vC2);
    const double stack = x.vC1 + x.vC2;
    switch (state) {
        case SwitchingState::Pos1: return cell;
        case SwitchingState::Pos2: return stack;
        case SwitchingState::ZeroPos:
        case SwitchingState::ZeroNeg: return 0.0;
        case SwitchingState::Neg1: return -cell;
        case SwitchingState::Neg2: return -stack;
    }
    return 0.0;
}

std::array<double, kDeviceCount> blocking_voltages(
    const Configuration& cfg, const StateVector& x, const CircuitParams& p,
    const std::array<double, kDeviceCount>* on_currents) {
    using S = SwitchId;
    std::array<double, kDeviceCount> v{};
    auto set = [&](S id, double value) { v[static_cast<std::size_t>(id)] = value; };

    const double vin = p.vin;
    const double cell = 0.5 * (x.vC1 + x.vC2);
    const double stack = x.vC1 + x.vC2;

    if (cfg.is_idle()) {
        // Everything open; the floating cell splits the rails.
        set(S::S1, vin);
        set(S::S2, cell);
        set(S::S3, 0.0);
        set(S::S3p, 0.0);
        set(S::S4, cell);
        set(S::S5, vin);
        set(S::S6, cell);
        set(S::S7, cell);
        set(S::S8, x.vC3);
        set(S::S9, cell - x.vC3);
        return v;
    }

    const SwitchingState st = *cfg.state;
    const GateVector gates = gate_vector_for_state(st);
    switch (st) {
        case SwitchingState::Pos1:
            set(S::S4, cell);
            set(S::S6, cell);
            set(S::S7, cell);
            set(S::S8, x.vC3);
            set(S::S9, cell - x.vC3);
            break;
        case SwitchingState::Pos2:
            set(S::S3, x.vC1);
            set(S::S3p, x.vC2);
            set(S::S6, stack);
            set(S::S7, stack);
            set(S::S8, x.vC3);
            set(S::S9, stack - x.vC3);
            break;
        case SwitchingState::ZeroPos:
            set(S::S1, vin);
            set(S::S4, cell);
            set(S::S5, vin);
            set(S::S6, cell);
            set(S::S7, cell);
            set(S::S8, x.vC3);
            set(S::S9, cell - x.vC3);
            break;
        case SwitchingState::ZeroNeg:
            set(S::S1, vin);
            set(S::S2, cell);
            set(S::S4, cell);
            set(S::S5, -cell);
            set(S::S7, cell);
            set(S::S8, x.vC3);
            set(S::S9, cell - x.vC3);
            break;
        case SwitchingState::Neg1:
            set(S::S1, vin + cell);
            set(S::S2, cell);
            set(S::S4, cell);
            set(S::S5, -cell);
            set(S::S8, x.vC3);
            break;
        case SwitchingState::Neg2:
            set(S::S1, stack);
            set(S::S2, stack);
            set(S::S3, x.vC1);
            set(S::S3p, x.vC2);
            set(S::S5, -stack);
            set(S::S9, x.vC3);
            break;
    }

    for (std::size_t k = 0; k < kGatedSwitchCount; ++k) {
        const auto id = static_cast<S>(k);
        if (gates[id]) {
            v[k] = on_currents ? p.r_on * (*on_currents)[k] : 0.0;
        }
    }
    // D1: forward drop while pumping, reverse bias while the branch waits.
    if (pump_window(cfg)) {
        const double bias = vin - x.vC3;
        set(S::D1, bias > p.v_d ? p.v_d : bias);
        // In ZeroNeg S8 is gated off; it conducts through its diode whenever D1 does.
        if (st == SwitchingState::ZeroNeg && bias > p.v_d) {
            const double i = on_currents ? (*on_currents)[static_cast<std::size_t>(S::S8)] : 0.0;
            set(S::S8, p.r_on * i);
        }
    }
    return v;
}

bool pump_window(const Configuration& cfg) {
    return cfg.state == SwitchingState::Neg2 || cfg.state == SwitchingState::ZeroNeg;
}

bool d1_conducting(const Configuration& cfg, const StateVector& x, const CircuitParams& p) {
    return pump_window(cfg) && (p.vin - x.vC3) > p.v_d;
}

}  // namespace scinv
