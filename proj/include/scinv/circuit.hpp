#pragma once

// =============================================================================
// Per-switching-state equivalent circuits of the five-level common-ground
// switched-capacitor inverter.
//
// Each switching state owns a small resistive netlist in which capacitors are
// voltage branches and inductors are current branches. Eliminating the
// resistive network yields a linear ODE  dx/dt = A x + B u  over the six
// dynamic states, plus linear read-outs (node voltages, branch currents) and
// quadratic power forms used by the energy audit.
// =============================================================================

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace scinv {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec3 = Eigen::Matrix<double, 3, 1>;
using Mat63 = Eigen::Matrix<double, 6, 3>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Row9 = Eigen::Matrix<double, 1, 9>;
using Mat9 = Eigen::Matrix<double, 9, 9>;

// -----------------------------------------------------------------------------
// Devices and states
// -----------------------------------------------------------------------------

/// The ten gated switches followed by the charge-pump diode.
enum class SwitchId : std::uint8_t { S1, S2, S3, S3p, S4, S5, S6, S7, S8, S9, D1 };

inline constexpr std::size_t kGatedSwitchCount = 10;
inline constexpr std::size_t kDeviceCount = 11;

inline constexpr std::array<SwitchId, kDeviceCount> kAllDevices = {
    SwitchId::S1, SwitchId::S2, SwitchId::S3, SwitchId::S3p, SwitchId::S4, SwitchId::S5,
    SwitchId::S6, SwitchId::S7, SwitchId::S8, SwitchId::S9, SwitchId::D1};

std::string_view to_string(SwitchId id);

/// One row of the switching table. Pos1/Neg1 hold C1 and C2 in parallel,
/// Pos2/Neg2 in series.
enum class SwitchingState : std::uint8_t { Pos1, Pos2, ZeroPos, ZeroNeg, Neg1, Neg2 };

inline constexpr std::array<SwitchingState, 6> kAllStates = {
    SwitchingState::Pos1, SwitchingState::Pos2, SwitchingState::ZeroPos,
    SwitchingState::ZeroNeg, SwitchingState::Neg1, SwitchingState::Neg2};

std::string_view to_string(SwitchingState s);

/// Circuit configuration actually integrated: a table row, or Idle when every
/// gate is off (output freewheels through body diodes, cell floats).
struct Configuration {
    std::optional<SwitchingState> state;

    static Configuration idle() { return {}; }
    bool is_idle() const { return !state.has_value(); }
    std::uint8_t code() const { return state ? static_cast<std::uint8_t>(*state) : 6; }
    bool operator==(const Configuration&) const = default;
};

/// Gate command for the ten gated switches. Index with gate_index(SwitchId).
class GateVector {
public:
    GateVector() = default;

    bool operator[](SwitchId id) const { return (bits_ >> index(id)) & 1u; }
    void set(SwitchId id, bool on);

    std::uint16_t bits() const { return bits_; }
    static GateVector from_bits(std::uint16_t bits);

    /// S3 == S3', not (S3 and S4), not (S8 and S9).
    bool satisfies_invariants() const;

    bool operator==(const GateVector&) const = default;

private:
    static unsigned index(SwitchId id);
    std::uint16_t bits_ = 0;
};

/// Exact switching-table row for a state.
GateVector gate_vector_for_state(SwitchingState state);

/// Inverse lookup. Returns nullopt for the all-off vector and throws
/// std::invalid_argument for a vector that matches no table row.
std::optional<SwitchingState> state_for_gates(const GateVector& gates);

// -----------------------------------------------------------------------------
// Parameters and states
// -----------------------------------------------------------------------------

struct CircuitParams {
    double vin = 200.0;      // V
    double c1 = 270e-6;      // F
    double c2 = 270e-6;      // F
    double c3 = 270e-6;      // F, charge pump
    double l1 = 10e-3;       // H
    double l2 = 10e-3;       // H
    double cf = 8e-6;        // F
    double r_on = 10e-3;     // ohm
    double r_src = 50e-3;    // ohm
    double v_d = 0.7;        // V
    double r_load = 12.0;    // ohm, standalone only
    double t_sw = 150e-9;    // s, combined rise + fall time

    /// Throws std::invalid_argument naming the first non-positive field.
    void validate() const;
};

/// Dynamic state. Index order matches the ODE: vC1, vC2, vC3, iL1, iL2, vCf.
struct StateVector {
    double vC1 = 0.0;
    double vC2 = 0.0;
    double vC3 = 0.0;
    double iL1 = 0.0;
    double iL2 = 0.0;
    double vCf = 0.0;

    Vec6 to_vec() const;
    static StateVector from_vec(const Vec6& v);

    /// Balanced start: capacitors at vin, inductors and filter discharged.
    static StateVector initial(const CircuitParams& p);
};

enum StateIndex : int { kVC1 = 0, kVC2, kVC3, kIL1, kIL2, kVCf };
/// Input vector u = [vin, v_grid, v_d].
enum InputIndex : int { kUVin = 0, kUGrid, kUDiode };

/// Output terminal: an ideal grid voltage source behind L2, or (off-grid) a
/// resistive load across the filter capacitor with L2 carrying no current.
struct TerminalCondition {
    enum class Kind { Load, Grid };
    Kind kind = Kind::Load;
    double r_load = 12.0;

    static TerminalCondition load(double r) { return {Kind::Load, r}; }
    static TerminalCondition grid() { return {Kind::Grid, 0.0}; }
};

struct LinearOde {
    Mat6 a = Mat6::Zero();
    Mat63 b_in = Mat63::Zero();   // forcing = b_in * u

    Vec6 derivative(const Vec6& x, const Vec3& u) const { return a * x + b_in * u; }
};

// -----------------------------------------------------------------------------
// Equivalent netlist
// -----------------------------------------------------------------------------

enum class Node : std::uint8_t { N, P0, P, T, X, B, M1, M2, U, O, F, G, K, Q, Count };

enum class Carrier : std::uint8_t { SourceLoop, Switch, BodyDiode, Load };

struct ResistorElem {
    Node a;
    Node b;
    double r;
    Carrier carrier;
    SwitchId device = SwitchId::S1;   // meaningful when carrier == Switch
};

/// Voltage branch: plus - minus = value, where value is a state (capacitor) or
/// an input (source, grid, diode drop).
struct VoltageElem {
    Node plus;
    Node minus;
    enum class Kind { State, Input } kind;
    int index;
};

/// Inductor current leaving `from`, entering `to`.
struct CurrentElem {
    Node from;
    Node to;
    int state_index;
};

struct Netlist {
    std::vector<ResistorElem> resistors;
    std::vector<VoltageElem> sources;
    std::vector<CurrentElem> inductors;
};

/// Equivalent netlist for a configuration. The PV negative terminal and the
/// grid (or load) return are both the single reference node N.
Netlist build_netlist(const Configuration& cfg, const CircuitParams& p,
                      const TerminalCondition& term, bool d1_on);

/// Everything linear about one configuration, as maps of z = [x; u].
struct StateCircuit {
    LinearOde ode;
    Row9 v_raw = Row9::Zero();        // pre-filter node O
    Row9 v_term = Row9::Zero();       // grid node, or Cf voltage off-grid
    Row9 i_diode = Row9::Zero();      // D1 forward current
    Row9 i_cell_parallel = Row9::Zero(); // charging current into the paralleled cell
    std::array<Row9, kDeviceCount> device_current{};  // zero rows for open devices
    Mat9 p_source = Mat9::Zero();     // quadratic forms: P = z' Q z
    Mat9 p_load = Mat9::Zero();
    Mat9 p_dissipated = Mat9::Zero(); // resistors (switches, source loop, body diodes)
    Mat9 p_diode = Mat9::Zero();

    static Vec9 stack(const Vec6& x, const Vec3& u) {
        Vec9 z;
        z << x, u;
        return z;
    }
};

/// Builds and eliminates the configuration's netlist.
/// Throws std::invalid_argument on invalid params, std::runtime_error when the
/// resistive network is singular.
StateCircuit assemble_state_circuit(const Configuration& cfg, const CircuitParams& p,
                                    const TerminalCondition& term, bool d1_on);

/// ODE of one table state. The D1/S8 branch is inserted only when d1_on.
LinearOde assemble_state_ode(SwitchingState state, const CircuitParams& p,
                             const TerminalCondition& term, bool d1_on = false);

/// Ideal level: 0, +/- mean(vC1, vC2), or +/- (vC1 + vC2).
double raw_output_voltage(SwitchingState state, const StateVector& x);

/// Blocking voltage of every device. OFF devices use the state's linear
/// combination of {vin, vC1, vC2, vC3}; ON devices report r_on * i_device when
/// currents are supplied, 0 otherwise.
std::array<double, kDeviceCount> blocking_voltages(
    const Configuration& cfg, const StateVector& x, const CircuitParams& p,
    const std::array<double, kDeviceCount>* on_currents = nullptr);

inline std::array<double, kDeviceCount> blocking_voltages(SwitchingState state,
                                                          const StateVector& x,
                                                          const CircuitParams& p) {
    return blocking_voltages(Configuration{state}, x, p);
}

/// States whose equivalent circuit holds the D1/S8 charging branch for C3:
/// Neg2 (S8 gated) and ZeroNeg (branch conducts with S8 gated off).
bool pump_window(const Configuration& cfg);

/// True iff cfg is a pump window and D1 is forward biased beyond v_d.
bool d1_conducting(const Configuration& cfg, const StateVector& x, const CircuitParams& p);

/// Energy held in capacitors and inductors.
double stored_energy(const StateVector& x, const CircuitParams& p);

}  // namespace scinv
