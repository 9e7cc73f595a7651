#include "scinv/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace scinv {

// -----------------------------------------------------------------------------
// SimConfig
// -----------------------------------------------------------------------------

std::size_t SimConfig::control_ratio() const {
    const double ratio = dt_ctrl / dt_sim;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio) {
        throw std::invalid_argument("dt_sim must divide dt_ctrl");
    }
    return static_cast<std::size_t>(rounded);
}

std::size_t SimConfig::step_count() const {
    return static_cast<std::size_t>(std::llround(t_end / dt_sim));
}

void SimConfig::validate() const {
    if (!(dt_sim > 0.0) || !(dt_ctrl > 0.0) || !(t_end >= 0.0) || !(envelope_period > 0.0)) {
        throw std::invalid_argument("dt_sim, dt_ctrl, envelope_period must be positive and t_end non-negative");
    }
    (void)control_ratio();
}

// -----------------------------------------------------------------------------
// Integration
// -----------------------------------------------------------------------------

namespace {

struct StepOperator {
    Mat6 propagate;  // applied to x_n
    Mat63 forcing;   // applied to (u_n + u_n+1) (trapezoidal) or u_n+1 (BE)
};

StepOperator make_operator(const LinearOde& ode, double dt, Integrator integ) {
    const Mat6 id = Mat6::Identity();
    StepOperator op;
    if (integ == Integrator::Trapezoidal) {
        const Mat6 lhs = id - 0.5 * dt * ode.a;
        Eigen::FullPivLU<Mat6> lu(lhs);
        if (!lu.isInvertible()) throw SimulationError("singular trapezoidal matrix (zero-resistance loop?)");
        op.propagate = lu.solve(id + 0.5 * dt * ode.a);
        op.forcing = lu.solve(0.5 * dt * ode.b_in);
    } else {
        const Mat6 lhs = id - dt * ode.a;
        Eigen::FullPivLU<Mat6> lu(lhs);
        if (!lu.isInvertible()) throw SimulationError("singular backward-Euler matrix (zero-resistance loop?)");
        op.propagate = lu.solve(id);
        op.forcing = lu.solve(dt * ode.b_in);
    }
    if (!op.propagate.allFinite() || !op.forcing.allFinite()) {
        throw SimulationError("non-finite step operator");
    }
    return op;
}

Vec6 apply(const StepOperator& op, const Vec6& x, const Vec3& u0, const Vec3& u1, Integrator integ) {
    if (integ == Integrator::Trapezoidal) return op.propagate * x + op.forcing * (u0 + u1);
    return op.propagate * x + op.forcing * u1;
}

}  // namespace

Vec6 step(const LinearOde& ode, const Vec6& x, double dt, const Vec3& u0, const Vec3& u1,
          Integrator integrator) {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (!ode.a.allFinite() || !ode.b_in.allFinite()) throw std::invalid_argument("non-finite ODE");
    return apply(make_operator(ode, dt, integrator), x, u0, u1, integrator);
}

// -----------------------------------------------------------------------------
// WaveformRecord
// -----------------------------------------------------------------------------

Configuration configuration_from_code(std::uint8_t code) {
    if (code >= 6) return Configuration::idle();
    return Configuration{static_cast<SwitchingState>(code)};
}

std::size_t WaveformRecord::index_at(double t) const {
    if (empty()) return 0;
    const auto n = static_cast<long long>(std::llround(t / dt));
    return static_cast<std::size_t>(std::clamp<long long>(n, 0, static_cast<long long>(size()) - 1));
}

StateVector WaveformRecord::state(std::size_t n) const {
    return {x[0][n], x[1][n], x[2][n], x[3][n], x[4][n], x[5][n]};
}

Configuration WaveformRecord::configuration(std::size_t n) const {
    return configuration_from_code(config[n]);
}

WaveformRecord WaveformRecord::slice(std::size_t first, std::size_t last) const {
    WaveformRecord out;
    out.dt = dt;
    out.envelope_period = envelope_period;
    if (empty() || first > last || first >= size()) return out;
    last = std::min(last, size() - 1);
    auto cut = [&](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        return V(v.begin() + static_cast<std::ptrdiff_t>(first),
                 v.begin() + static_cast<std::ptrdiff_t>(last + 1));
    };
    out.config = cut(config);
    out.gates = cut(gates);
    for (std::size_t k = 0; k < 6; ++k) out.x[k] = cut(x[k]);
    out.v_raw = cut(v_raw);
    out.v_out = cut(v_out);
    out.v_grid = cut(v_grid);
    out.reference = cut(reference);
    out.i_d1 = cut(i_d1);
    out.i_out = cut(i_out);
    out.i_cell_parallel = cut(i_cell_parallel);
    out.p_src = cut(p_src);
    out.p_load = cut(p_load);
    auto rebase = [&](const std::vector<double>& v) {
        std::vector<double> r = cut(v);
        const double base = r.front();
        for (auto& value : r) value -= base;
        return r;
    };
    out.e_src = rebase(e_src);
    out.e_load = rebase(e_load);
    out.e_diss = rebase(e_diss);
    out.e_diode = rebase(e_diode);
    const double t0 = time(first);
    const double t1 = time(last);
    for (const auto& env : envelopes) {
        if (env.t_start >= t0 - 0.5 * dt && env.t_start <= t1) out.envelopes.push_back(env);
    }
    return out;
}

// -----------------------------------------------------------------------------
// simulate
// -----------------------------------------------------------------------------

namespace {

struct CachedConfig {
    bool ready = false;
    StateCircuit circuit;
    StepOperator op;
    bool damped_ready = false;
    StepOperator damped;  // backward-Euler operator for diode turn-off steps
};

class ConfigCache {
public:
    ConfigCache(const CircuitParams& p, const SimConfig& cfg, TerminalCondition term)
        : params_(p), cfg_(cfg), term_(term) {}

    void set_load(double r) {
        if (term_.kind != TerminalCondition::Kind::Load || r <= 0.0 || r == term_.r_load) return;
        term_.r_load = r;
        for (auto& c : entries_) c.ready = c.damped_ready = false;
    }

    double r_load() const { return term_.r_load; }

    const CachedConfig& get(const Configuration& c, bool d1) {
        const bool pump = d1 && pump_window(c);
        auto& e = entries_[c.code() * 2u + (pump ? 1u : 0u)];
        if (!e.ready) {
            e.circuit = assemble_state_circuit(c, params_, term_, pump);
            e.op = make_operator(e.circuit.ode, cfg_.dt_sim, cfg_.integrator);
            e.ready = true;
        }
        return e;
    }

    const StepOperator& damped(const Configuration& c, bool d1) {
        auto& e = const_cast<CachedConfig&>(get(c, d1));
        if (!e.damped_ready) {
            e.damped = make_operator(e.circuit.ode, cfg_.dt_sim, Integrator::BackwardEuler);
            e.damped_ready = true;
        }
        return e.damped;
    }

private:
    CircuitParams params_;
    SimConfig cfg_;
    TerminalCondition term_;
    std::array<CachedConfig, 14> entries_{};
};

double quad(const Mat9& q, const Vec9& z) { return z.dot(q * z); }

}  // namespace

WaveformRecord simulate(Driver& driver, const CircuitParams& params, const SimConfig& cfg,
                        const TerminalCondition& term, const StateVector& x0) {
    params.validate();
    cfg.validate();
    const std::size_t steps = cfg.step_count();
    const std::size_t ratio = cfg.control_ratio();
    const double dt = cfg.dt_sim;
    const bool grid = term.kind == TerminalCondition::Kind::Grid;

    WaveformRecord rec;
    rec.dt = dt;
    rec.envelope_period = cfg.envelope_period;
    const std::size_t n_samples = steps + 1;
    rec.config.reserve(n_samples);
    rec.gates.reserve(n_samples);
    for (auto& ch : rec.x) ch.reserve(n_samples);
    for (auto* v : {&rec.v_raw, &rec.v_out, &rec.i_out, &rec.v_grid, &rec.reference, &rec.i_d1,
                    &rec.i_cell_parallel, &rec.p_src, &rec.p_load, &rec.e_src, &rec.e_load,
                    &rec.e_diss, &rec.e_diode}) {
        v->reserve(n_samples);
    }

    ConfigCache cache(params, cfg, term);
    Vec6 x = x0.to_vec();
    double e_src = 0.0, e_load = 0.0, e_diss = 0.0, e_diode = 0.0;

    BlockingEnvelope env;
    std::size_t env_index = 0;
    bool env_open = false;
    auto track_envelope = [&](double t, const Configuration& c, const StateVector& xs,
                              const StateCircuit& sc, const Vec9& z) {
        const auto idx = static_cast<std::size_t>(std::floor(t / cfg.envelope_period + 1e-9));
        if (!env_open || idx != env_index) {
            if (env_open) rec.envelopes.push_back(env);
            env_open = true;
            env_index = idx;
            env.t_start = static_cast<double>(idx) * cfg.envelope_period;
            env.min.fill(std::numeric_limits<double>::infinity());
            env.max.fill(-std::numeric_limits<double>::infinity());
        }
        std::array<double, kDeviceCount> currents{};
        for (std::size_t k = 0; k < kDeviceCount; ++k) currents[k] = sc.device_current[k].dot(z);
        const auto v = blocking_voltages(c, xs, params, &currents);
        for (std::size_t k = 0; k < kDeviceCount; ++k) {
            env.min[k] = std::min(env.min[k], v[k]);
            env.max[k] = std::max(env.max[k], v[k]);
        }
    };

    auto log_sample = [&](double t, const Configuration& c, GateVector g, const StateCircuit& sc,
                          const Vec9& z, double vgrid) {
        rec.config.push_back(c.code());
        rec.gates.push_back(g.bits());
        for (std::size_t k = 0; k < 6; ++k) rec.x[k].push_back(x[static_cast<int>(k)]);
        rec.v_raw.push_back(sc.v_raw.dot(z));
        const double v_term = sc.v_term.dot(z);
        rec.v_out.push_back(v_term);
        rec.i_out.push_back(grid ? x[kIL2] : v_term / cache.r_load());
        rec.v_grid.push_back(vgrid);
        rec.reference.push_back(driver.reference(t));
        rec.i_d1.push_back(sc.i_diode.dot(z));
        rec.i_cell_parallel.push_back(sc.i_cell_parallel.dot(z));
        rec.p_src.push_back(quad(sc.p_source, z));
        rec.p_load.push_back(quad(sc.p_load, z));
        rec.e_src.push_back(e_src);
        rec.e_load.push_back(e_load);
        rec.e_diss.push_back(e_diss);
        rec.e_diode.push_back(e_diode);
        track_envelope(t, c, StateVector::from_vec(x), sc, z);
    };

    auto inputs = [&](double t) {
        Vec3 u;
        u << params.vin, grid ? driver.grid_voltage(t) : 0.0, params.v_d;
        return u;
    };

    Configuration last_cfg = Configuration::idle();
    GateVector last_gates;
    bool last_d1 = false;

    for (std::size_t n = 0; n < steps; ++n) {
        const double t = static_cast<double>(n) * dt;
        const double t1 = static_cast<double>(n + 1) * dt;
        if (!grid) cache.set_load(driver.load_resistance(t));
        const Vec3 u0 = inputs(t);

        if (n % ratio == 0) {
            const auto& cur = cache.get(last_cfg, last_d1);
            const Vec9 z = StateCircuit::stack(x, u0);
            driver.control({t, StateVector::from_vec(x), cur.circuit.v_term.dot(z), u0[kUGrid]});
        }

        const GateVector g = driver.gates(t);
        Configuration c;
        try {
            c = Configuration{state_for_gates(g)};
        } catch (const std::invalid_argument& e) {
            std::ostringstream os;
            os << "t=" << t << ": " << e.what();
            throw SimulationError(os.str());
        }
        const Vec3 u1 = inputs(t1);

        // D1 bias resolution: assume, solve, check, flip.
        bool d1 = d1_conducting(c, StateVector::from_vec(x), params);
        const CachedConfig* active = nullptr;
        Vec6 x_next;
        bool resolved = false;
        // When D1 should turn off inside the step, a very stiff pump branch makes
        // the trapezoidal step ring through zero current and neither bias
        // assumption is consistent. That step is retaken with backward Euler.
        for (Integrator integ : {cfg.integrator, Integrator::BackwardEuler}) {
            for (int pass = 0; pass < 8 && !resolved; ++pass) {
                active = &cache.get(c, d1);
                const StepOperator& op = integ == cfg.integrator ? active->op : cache.damped(c, d1);
                x_next = apply(op, x, u0, u1, integ);
                if (!pump_window(c)) {
                    resolved = true;
                } else if (d1) {
                    const double i_start = active->circuit.i_diode.dot(StateCircuit::stack(x, u0));
                    const double i_end = active->circuit.i_diode.dot(StateCircuit::stack(x_next, u1));
                    resolved = i_start >= -1e-9 && i_end >= -1e-9;
                } else {
                    resolved = params.vin - x_next[kVC3] <= params.v_d + 1e-9;
                }
                if (!resolved) d1 = !d1;
            }
            if (resolved || integ == Integrator::BackwardEuler) break;
        }
        if (!resolved) {
            std::ostringstream os;
            os << "D1 bias iteration did not converge at t=" << t;
            throw SimulationError(os.str());
        }

        const Vec9 z0 = StateCircuit::stack(x, u0);
        log_sample(t, c, g, active->circuit, z0, u0[kUGrid]);

        const Vec9 zm = 0.5 * (z0 + StateCircuit::stack(x_next, u1));
        e_src += dt * quad(active->circuit.p_source, zm);
        e_load += dt * quad(active->circuit.p_load, zm);
        e_diss += dt * quad(active->circuit.p_dissipated, zm);
        e_diode += dt * quad(active->circuit.p_diode, zm);

        if (!x_next.allFinite()) {
            std::ostringstream os;
            os << "state became non-finite at t=" << t1;
            throw SimulationError(os.str());
        }
        x = x_next;
        last_cfg = c;
        last_gates = g;
        last_d1 = d1;
    }

    // Final sample, evaluated with the last configuration.
    const double t_last = static_cast<double>(steps) * dt;
    if (!grid) cache.set_load(driver.load_resistance(t_last));
    const Vec3 u_last = inputs(t_last);
    const auto& fin = cache.get(last_cfg, last_d1);
    log_sample(t_last, last_cfg, last_gates, fin.circuit, StateCircuit::stack(x, u_last),
               u_last[kUGrid]);
    if (env_open) rec.envelopes.push_back(env);
    return rec;
}

// -----------------------------------------------------------------------------
// Energy audit
// -----------------------------------------------------------------------------

std::optional<double> energy_audit(const WaveformRecord& rec, const CircuitParams& params,
                                   std::size_t first, std::size_t last) {
    if (rec.empty() || first >= rec.size() || last <= first) return std::nullopt;
    last = std::min(last, rec.size() - 1);
    const double e_src = rec.e_src[last] - rec.e_src[first];
    if (!(std::abs(e_src) > 0.0)) return std::nullopt;
    const double e_load = rec.e_load[last] - rec.e_load[first];
    const double e_diss = (rec.e_diss[last] - rec.e_diss[first]) +
                          (rec.e_diode[last] - rec.e_diode[first]);
    const double d_stored = stored_energy(rec.state(last), params) - stored_energy(rec.state(first), params);
    return std::abs(e_src - e_load - e_diss - d_stored) / std::abs(e_src);
}

std::optional<double> energy_audit(const WaveformRecord& rec, const CircuitParams& params) {
    if (rec.empty()) return std::nullopt;
    return energy_audit(rec, params, 0, rec.size() - 1);
}

}  // namespace scinv
