#include "scinv/scenario.hpp"

#include "scinv/analysis.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <cstring>

namespace scinv {

using nlohmann::json;

namespace {

// -----------------------------------------------------------------------------
// Reading
// -----------------------------------------------------------------------------

/// Walks one JSON object, rejecting unknown keys and mistyped values.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ScenarioError(path_, "expected an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void number(const std::string& key, double& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_number()) throw ScenarioError(at(key), "expected a number");
        out = v.get<double>();
        if (!std::isfinite(out)) throw ScenarioError(at(key), "must be finite");
    }

    void number(const std::string& key, std::optional<double>& out) {
        if (!has(key)) return;
        double v = 0.0;
        number(key, v);
        out = v;
    }

    void boolean(const std::string& key, bool& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_boolean()) throw ScenarioError(at(key), "expected true or false");
        out = v.get<bool>();
    }

    void text(const std::string& key, std::string& out) {
        if (!has(key)) return;
        const json& v = raw(key);
        if (!v.is_string()) throw ScenarioError(at(key), "expected a string");
        out = v.get<std::string>();
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ScenarioError(at(it.key()), "unknown field");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::string line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k < std::min(byte, text.size()); ++k) {
        if (text[k] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

double load_from_power(double v_rms, double p, const std::string& where) {
    if (!(p > 0.0)) throw ScenarioError(where, "load power must be positive");
    return v_rms * v_rms / p;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError(origin + " " + line_column(text, e.byte == 0 ? 0 : e.byte - 1),
                            "syntax error");
    }

    Scenario s;
    Fields top(root, "");
    top.text("name", s.name);
    top.text("description", s.description);
    std::string mode = "standalone";
    top.text("mode", mode);
    if (mode == "standalone") {
        s.mode = Mode::Standalone;
    } else if (mode == "grid") {
        s.mode = Mode::Grid;
    } else {
        throw ScenarioError("mode", "must be \"standalone\" or \"grid\"");
    }
    if (!top.has("duration_s")) throw ScenarioError("duration_s", "required field missing");
    top.number("duration_s", s.duration);

    if (top.has("circuit")) {
        Fields f(top.raw("circuit"), "circuit");
        auto& c = s.circuit;
        f.number("vin", c.vin);
        f.number("c1", c.c1);
        f.number("c2", c.c2);
        f.number("c3", c.c3);
        f.number("l1", c.l1);
        f.number("l2", c.l2);
        f.number("cf", c.cf);
        f.number("r_on", c.r_on);
        f.number("r_src", c.r_src);
        f.number("v_d", c.v_d);
        f.number("t_sw", c.t_sw);
        f.finish();
    }
    if (top.has("sim")) {
        Fields f(top.raw("sim"), "sim");
        f.number("dt_sim", s.sim.dt_sim);
        f.number("dt_ctrl", s.sim.dt_ctrl);
        f.number("envelope_period", s.sim.envelope_period);
        std::string integ = "trapezoidal";
        f.text("integrator", integ);
        if (integ == "trapezoidal") {
            s.sim.integrator = Integrator::Trapezoidal;
        } else if (integ == "backward_euler") {
            s.sim.integrator = Integrator::BackwardEuler;
        } else {
            throw ScenarioError("sim.integrator", "must be \"trapezoidal\" or \"backward_euler\"");
        }
        f.finish();
    }
    if (top.has("modulation")) {
        Fields f(top.raw("modulation"), "modulation");
        f.number("f_sw", s.modulation.f_sw);
        f.number("f0", s.modulation.f0);
        f.number("m_index", s.modulation.m_index);
        f.finish();
    }
    if (top.has("control")) {
        Fields f(top.raw("control"), "control");
        f.number("v_ref_rms", s.v_ref_rms);
        f.number("kp_v", s.kp_v);
        f.number("ki_v", s.ki_v);
        f.number("r_limit", s.r_limit);
        f.number("current_bandwidth_hz", s.grid.current_bandwidth_hz);
        f.number("pll_bandwidth_hz", s.grid.pll_bandwidth_hz);
        f.boolean("compensate_filter_capacitor", s.grid.compensate_filter_capacitor);
        f.boolean("level_feedforward", s.grid.level_feedforward);
        f.finish();
    }
    s.grid.r_limit = s.r_limit;
    if (top.has("grid")) {
        Fields f(top.raw("grid"), "grid");
        f.number("v_rms", s.grid.v_rms);
        f.number("f", s.grid.f_grid);
        f.number("pu", s.grid_pu);
        f.number("ramp_s", s.grid_ramp);
        f.finish();
    }
    if (top.has("load")) {
        Fields f(top.raw("load"), "load");
        std::optional<double> p, r;
        f.number("p_load_w", p);
        f.number("r_load", r);
        f.finish();
        if (p && r) throw ScenarioError("load", "give either p_load_w or r_load, not both");
        if (p) s.circuit.r_load = load_from_power(s.v_ref_rms, *p, "load.p_load_w");
        if (r) s.circuit.r_load = *r;
    }
    if (top.has("i_ref")) {
        Fields f(top.raw("i_ref"), "i_ref");
        f.number("d", s.i_ref_d);
        f.number("q", s.i_ref_q);
        f.finish();
    }
    if (top.has("trip")) {
        Fields f(top.raw("trip"), "trip");
        f.number("i_peak", s.trip.i_peak);
        f.number("v_cap_low", s.trip.v_cap_low);
        f.number("v_cap_high", s.trip.v_cap_high);
        f.number("f_dev", s.trip.f_dev);
        f.number("f_dev_delay", s.trip.f_dev_delay);
        f.finish();
    }
    s.initial = StateVector::initial(s.circuit);
    if (top.has("initial")) {
        Fields f(top.raw("initial"), "initial");
        f.number("vC1", s.initial.vC1);
        f.number("vC2", s.initial.vC2);
        f.number("vC3", s.initial.vC3);
        f.number("iL1", s.initial.iL1);
        f.number("iL2", s.initial.iL2);
        f.number("vCf", s.initial.vCf);
        f.finish();
    }
    if (top.has("events")) {
        const json& list = top.raw("events");
        if (!list.is_array()) throw ScenarioError("events", "expected an array");
        for (std::size_t k = 0; k < list.size(); ++k) {
            const std::string path = "events[" + std::to_string(k) + "]";
            Fields f(list[k], path);
            ScenarioEvent e;
            if (!f.has("t")) throw ScenarioError(path + ".t", "required field missing");
            f.number("t", e.t);
            f.number("p_load_w", e.p_load_w);
            f.number("r_load", e.r_load);
            f.number("i_ref_d", e.i_ref_d);
            f.number("i_ref_q", e.i_ref_q);
            f.number("grid_pu", e.grid_pu);
            f.finish();
            if (e.p_load_w && e.r_load) throw ScenarioError(path, "give either p_load_w or r_load, not both");
            if (e.p_load_w) e.r_load = load_from_power(s.v_ref_rms, *e.p_load_w, path + ".p_load_w");
            s.events.push_back(e);
        }
    }
    if (top.has("metrics")) {
        const json& list = top.raw("metrics");
        if (!list.is_array()) throw ScenarioError("metrics", "expected an array");
        for (std::size_t k = 0; k < list.size(); ++k) {
            const std::string path = "metrics[" + std::to_string(k) + "]";
            Fields f(list[k], path);
            MetricSpec m;
            f.text("name", m.name);
            f.number("from", m.from);
            f.number("to", m.to);
            f.number("min", m.min);
            f.number("max", m.max);
            f.text("note", m.note);
            f.finish();
            s.metrics.push_back(m);
        }
    }
    top.finish();
    s.validate();
    return s;
}

Scenario load_scenario_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError(path.string(), "cannot open scenario file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path.string());
}

void Scenario::validate() const {
    if (name.empty()) throw ScenarioError("name", "must not be empty");
    try {
        circuit.validate();
    } catch (const std::invalid_argument& e) {
        throw ScenarioError("circuit", e.what());
    }
    try {
        modulation.validate();
    } catch (const std::invalid_argument& e) {
        throw ScenarioError("modulation", e.what());
    }
    if (!(duration > 0.0)) throw ScenarioError("duration_s", "must be positive");
    if (duration < 10.0 / modulation.f0 - 1e-12) {
        throw ScenarioError("duration_s", "must cover at least 10 fundamental cycles");
    }
    SimConfig sc = sim;
    sc.t_end = duration;
    try {
        sc.validate();
        (void)sc.control_ratio();
    } catch (const std::invalid_argument& e) {
        throw ScenarioError("sim", e.what());
    }
    if (!(v_ref_rms > 0.0)) throw ScenarioError("control.v_ref_rms", "must be positive");
    if (!(r_limit > 1.0 && r_limit <= 2.0)) throw ScenarioError("control.r_limit", "must lie in (1, 2]");
    if (!(kp_v >= 0.0) || !(ki_v >= 0.0)) throw ScenarioError("control", "voltage-loop gains must be non-negative");
    if (!(grid.current_bandwidth_hz > 0.0)) throw ScenarioError("control.current_bandwidth_hz", "must be positive");
    if (!(grid.pll_bandwidth_hz > 0.0)) throw ScenarioError("control.pll_bandwidth_hz", "must be positive");
    if (!(grid.v_rms > 0.0)) throw ScenarioError("grid.v_rms", "must be positive");
    if (!(grid.f_grid > 0.0)) throw ScenarioError("grid.f", "must be positive");
    if (!(grid_pu >= 0.0 && grid_pu <= 1.2)) throw ScenarioError("grid.pu", "must lie in [0, 1.2]");
    if (!(grid_ramp >= 0.0)) throw ScenarioError("grid.ramp_s", "must be non-negative");
    if (!(circuit.r_load > 0.0)) throw ScenarioError("load", "load resistance must be positive");

    double t_prev = 0.0;
    for (std::size_t k = 0; k < events.size(); ++k) {
        const auto& e = events[k];
        const std::string path = "events[" + std::to_string(k) + "]";
        if (!(e.t >= 0.0 && e.t <= duration)) throw ScenarioError(path + ".t", "outside [0, duration_s]");
        if (e.t < t_prev) throw ScenarioError(path + ".t", "events must be time-ordered");
        t_prev = e.t;
        if (e.r_load && !(*e.r_load > 0.0)) throw ScenarioError(path + ".r_load", "must be positive");
        if (e.grid_pu && !(*e.grid_pu >= 0.0 && *e.grid_pu <= 1.2)) {
            throw ScenarioError(path + ".grid_pu", "must lie in [0, 1.2]");
        }
        if (mode == Mode::Standalone && (e.i_ref_d || e.i_ref_q || e.grid_pu)) {
            throw ScenarioError(path, "current references and grid amplitude apply to grid mode only");
        }
        if (mode == Mode::Grid && e.r_load) throw ScenarioError(path, "load changes apply to standalone mode only");
    }
    const auto known = metric_names();
    for (std::size_t k = 0; k < metrics.size(); ++k) {
        const auto& m = metrics[k];
        const std::string path = "metrics[" + std::to_string(k) + "]";
        if (std::find(known.begin(), known.end(), m.name) == known.end()) {
            throw ScenarioError(path + ".name", "unknown metric \"" + m.name + "\"");
        }
        const double from = m.from.value_or(duration - 1.0 / modulation.f0);
        const double to = m.to.value_or(duration);
        if (!(from >= 0.0 && to <= duration + 1e-12 && from < to)) {
            throw ScenarioError(path, "window must satisfy 0 <= from < to <= duration_s");
        }
        if (m.min && m.max && *m.min > *m.max) throw ScenarioError(path, "min exceeds max");
    }
}

// -----------------------------------------------------------------------------
// Canonical form and digest
// -----------------------------------------------------------------------------

namespace {

json to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["description"] = s.description;
    j["mode"] = s.mode == Mode::Grid ? "grid" : "standalone";
    j["duration_s"] = s.duration;
    const auto& c = s.circuit;
    j["circuit"] = {{"vin", c.vin}, {"c1", c.c1}, {"c2", c.c2}, {"c3", c.c3}, {"l1", c.l1},
                    {"l2", c.l2},   {"cf", c.cf}, {"r_on", c.r_on}, {"r_src", c.r_src},
                    {"v_d", c.v_d}, {"t_sw", c.t_sw}};
    j["sim"] = {{"dt_sim", s.sim.dt_sim},
                {"dt_ctrl", s.sim.dt_ctrl},
                {"envelope_period", s.sim.envelope_period},
                {"integrator", s.sim.integrator == Integrator::Trapezoidal ? "trapezoidal" : "backward_euler"}};
    j["modulation"] = {{"f_sw", s.modulation.f_sw}, {"f0", s.modulation.f0}, {"m_index", s.modulation.m_index}};
    j["control"] = {{"v_ref_rms", s.v_ref_rms},
                    {"kp_v", s.kp_v},
                    {"ki_v", s.ki_v},
                    {"r_limit", s.r_limit},
                    {"current_bandwidth_hz", s.grid.current_bandwidth_hz},
                    {"pll_bandwidth_hz", s.grid.pll_bandwidth_hz},
                    {"compensate_filter_capacitor", s.grid.compensate_filter_capacitor},
                    {"level_feedforward", s.grid.level_feedforward}};
    j["grid"] = {{"v_rms", s.grid.v_rms}, {"f", s.grid.f_grid}, {"pu", s.grid_pu}, {"ramp_s", s.grid_ramp}};
    j["load"] = {{"r_load", c.r_load}};
    j["i_ref"] = {{"d", s.i_ref_d}, {"q", s.i_ref_q}};
    j["trip"] = {{"i_peak", s.trip.i_peak},
                 {"v_cap_low", s.trip.v_cap_low},
                 {"v_cap_high", s.trip.v_cap_high},
                 {"f_dev", s.trip.f_dev},
                 {"f_dev_delay", s.trip.f_dev_delay}};
    const auto& x = s.initial;
    j["initial"] = {{"vC1", x.vC1}, {"vC2", x.vC2}, {"vC3", x.vC3}, {"iL1", x.iL1}, {"iL2", x.iL2}, {"vCf", x.vCf}};
    j["events"] = json::array();
    for (const auto& e : s.events) {
        json ev{{"t", e.t}};
        if (e.r_load) ev["r_load"] = *e.r_load;
        if (e.i_ref_d) ev["i_ref_d"] = *e.i_ref_d;
        if (e.i_ref_q) ev["i_ref_q"] = *e.i_ref_q;
        if (e.grid_pu) ev["grid_pu"] = *e.grid_pu;
        j["events"].push_back(ev);
    }
    j["metrics"] = json::array();
    for (const auto& m : s.metrics) {
        json mj{{"name", m.name}, {"note", m.note}};
        if (m.from) mj["from"] = *m.from;
        if (m.to) mj["to"] = *m.to;
        if (m.min) mj["min"] = *m.min;
        if (m.max) mj["max"] = *m.max;
        j["metrics"].push_back(mj);
    }
    return j;
}

}  // namespace

std::string canonical_json(const Scenario& s) { return to_json(s).dump(); }

std::string scenario_digest(const Scenario& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : canonical_json(s)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

Scenario resolve_scenario(const std::string& preset_or_path) {
    if (is_preset(preset_or_path)) return preset(preset_or_path);
    return load_scenario_file(preset_or_path);
}

// -----------------------------------------------------------------------------
// Metrics
// -----------------------------------------------------------------------------

std::vector<std::string> metric_names() {
    return {"v_rms",          "v_rms_error",     "v_thd",          "i_rms",
            "i_thd",          "i_fund_peak",     "p_out",          "q_out",
            "pf",             "phase_shift_deg", "efficiency",     "energy_residual",
            "vc_min",         "vc_max",          "vc3_min",        "vc_imbalance",
            "s2_transitions", "s6_transitions",  "max_transitions_other",
            "level_fidelity", "stress_flags",    "s5_min",         "s5_max",
            "v_rms_cycle_max_dev", "v_rms_cycle_overshoot", "i_overshoot", "trip"};
}

namespace {

std::span<const double> window(const std::vector<double>& v, std::size_t first, std::size_t last) {
    return {v.data() + first, last - first};
}

double fundamental_period(const Scenario& s) {
    return 1.0 / (s.mode == Mode::Grid ? s.grid.f_grid : s.modulation.f0);
}

/// RMS of each whole fundamental cycle starting at `first`.
std::vector<double> cycle_rms(const std::vector<double>& v, std::size_t first, std::size_t last, std::size_t cycle) {
    std::vector<double> out;
    for (std::size_t a = first; a + cycle <= last; a += cycle) out.push_back(rms(window(v, a, a + cycle)));
    if (out.empty()) throw std::invalid_argument("metric window shorter than one fundamental cycle");
    return out;
}

}  // namespace

double evaluate_metric(const std::string& name, const WaveformRecord& rec, const Scenario& s, double from,
                       double to) {
    if (rec.empty()) throw std::invalid_argument("empty record");
    const std::size_t first = rec.index_at(from);
    const std::size_t last = rec.index_at(to);
    if (last <= first) throw std::invalid_argument("metric window holds no samples");
    const double fs = 1.0 / rec.dt;
    const double f0 = 1.0 / fundamental_period(s);
    const auto& p = s.circuit;

    const auto cycle = static_cast<std::size_t>(std::llround(fundamental_period(s) / rec.dt));

    if (name == "v_rms") return rms(window(rec.v_out, first, last));
    if (name == "v_rms_cycle_max_dev" || name == "v_rms_cycle_overshoot") {
        double dev = 0.0, over = -1e300;
        for (double r : cycle_rms(rec.v_out, first, last, cycle)) {
            dev = std::max(dev, std::abs(r - s.v_ref_rms) / s.v_ref_rms);
            over = std::max(over, (r - s.v_ref_rms) / s.v_ref_rms);
        }
        return name == "v_rms_cycle_max_dev" ? dev : over;
    }
    if (name == "i_overshoot") {
        // Peak current over the window relative to the fundamental amplitude of
        // its final cycle.
        if (last - first < cycle) throw std::invalid_argument("metric window shorter than one fundamental cycle");
        const double settled = harmonic_spectrum(window(rec.i_out, last - cycle, last), fs, f0, 1).fundamental();
        if (!(settled > 0.0)) throw std::invalid_argument("zero settled current");
        double peak = 0.0;
        for (std::size_t n = first; n < last; ++n) peak = std::max(peak, std::abs(rec.i_out[n]));
        return peak / settled - 1.0;
    }
    if (name == "v_rms_error") return (rms(window(rec.v_out, first, last)) - s.v_ref_rms) / s.v_ref_rms;
    if (name == "v_thd") return thd(window(rec.v_out, first, last), fs, f0);
    if (name == "i_rms") return rms(window(rec.i_out, first, last));
    if (name == "i_thd") return thd(window(rec.i_out, first, last), fs, f0);
    if (name == "i_fund_peak") return harmonic_spectrum(window(rec.i_out, first, last), fs, f0, 1).fundamental();
    if (name == "p_out") return (rec.e_load[last] - rec.e_load[first]) / (to - from);
    if (name == "q_out" || name == "pf" || name == "phase_shift_deg") {
        const auto pm = power_metrics(window(rec.v_out, first, last), window(rec.i_out, first, last), fs, f0);
        if (name == "q_out") return pm.q;
        if (name == "pf") {
            if (!pm.pf) throw std::invalid_argument("power factor undefined at zero apparent power");
            return *pm.pf;
        }
        return pm.phase_shift_deg;
    }
    if (name == "efficiency") return efficiency(rec, p, first, last).eta;
    if (name == "energy_residual") {
        const auto r = energy_audit(rec, p, first, last);
        if (!r) throw std::invalid_argument("no source energy in window");
        return *r;
    }
    if (name == "vc_min" || name == "vc_max" || name == "vc3_min" || name == "vc_imbalance") {
        const auto rb = ripple_and_balance(rec, first, last);
        if (name == "vc_min") return std::min({rb.caps[0].min, rb.caps[1].min, rb.caps[2].min});
        if (name == "vc_max") return std::max({rb.caps[0].max, rb.caps[1].max, rb.caps[2].max});
        if (name == "vc3_min") return rb.caps[2].min;
        return rb.max_imbalance;
    }
    if (name == "s2_transitions" || name == "s6_transitions" || name == "max_transitions_other") {
        // Worst fundamental cycle inside the window.
        int worst = 0;
        for (std::size_t a = first; a + cycle <= last; a += cycle) {
            const auto tc = transition_counts(rec, a, a + cycle);
            if (name == "s2_transitions") {
                worst = std::max(worst, tc[static_cast<std::size_t>(SwitchId::S2)]);
            } else if (name == "s6_transitions") {
                worst = std::max(worst, tc[static_cast<std::size_t>(SwitchId::S6)]);
            } else {
                for (std::size_t k = 0; k < kGatedSwitchCount; ++k) {
                    if (k == static_cast<std::size_t>(SwitchId::S2) || k == static_cast<std::size_t>(SwitchId::S6)) continue;
                    worst = std::max(worst, tc[k]);
                }
            }
        }
        return worst;
    }
    if (name == "level_fidelity") {
        // Fraction of samples whose pre-filter voltage lies within 5% of the
        // nearest ideal level (5% of vin around zero).
        const double levels[] = {-2.0 * p.vin, -p.vin, 0.0, p.vin, 2.0 * p.vin};
        std::size_t inside = 0;
        for (std::size_t n = first; n < last; ++n) {
            const double v = rec.v_raw[n];
            double best = 1e300, target = 0.0;
            for (double l : levels) {
                if (std::abs(v - l) < best) {
                    best = std::abs(v - l);
                    target = l;
                }
            }
            const double tol = 0.05 * std::max(std::abs(target), p.vin);
            if (best <= tol) ++inside;
        }
        return static_cast<double>(inside) / static_cast<double>(last - first);
    }
    if (name == "stress_flags" || name == "s5_min" || name == "s5_max") {
        const auto st = stress_summary(rec, p, from, to);
        if (name == "s5_min") return st[SwitchId::S5].min;
        if (name == "s5_max") return st[SwitchId::S5].max;
        int flags = 0;
        for (const auto& d : st.devices) flags += d.exceeds ? 1 : 0;
        return flags;
    }
    throw std::invalid_argument("unknown metric \"" + name + "\"");
}

// -----------------------------------------------------------------------------
// Execution
// -----------------------------------------------------------------------------

const char* const kVersion = "scinv 0.1.0";

bool Report::passed() const {
    return std::all_of(metrics.begin(), metrics.end(), [](const MetricResult& m) { return m.pass; });
}

std::vector<std::string> Report::failures() const {
    std::vector<std::string> out;
    for (const auto& m : metrics) {
        if (!m.pass) out.push_back(m.name);
    }
    return out;
}

namespace {

std::vector<std::string> assumptions(const Scenario& s) {
    std::ostringstream trip;
    trip << "Trip: |iL1| > " << s.trip.i_peak << " A, any capacitor outside [" << s.trip.v_cap_low << ", "
         << s.trip.v_cap_high << "] x vin, or PLL frequency deviation > " << s.trip.f_dev
         << " Hz sustained for " << s.trip.f_dev_delay << " s; gating stops after a trip.";
    std::ostringstream sw;
    sw << "Switching loss: 0.5 x V_block x |iL1| x t_sw per gate transition, t_sw = " << s.circuit.t_sw << " s.";
    std::vector<std::string> a = {
        "Currents and current references are peak amplitudes; voltages named *_rms are RMS.",
        "Ripple prediction uses the per-capacitor series-discharge convention (full output current through "
        "each series capacitor); the literal halved form is reported alongside.",
        "ZeroNeg recharges C3 from the source through D1 with S8 gated off (reverse-diode path).",
        sw.str(),
        trip.str(),
    };
    if (s.mode == Mode::Standalone) {
        a.push_back("Off-grid load sits across the filter capacitor (L1-Cf filter); L2 carries no current.");
        a.push_back("Load events given in watts are converted at the reference voltage: R = V_ref^2 / P.");
    } else {
        std::ostringstream ramp;
        ramp << "Grid-voltage amplitude changes ramp linearly over " << s.grid_ramp << " s.";
        a.push_back(ramp.str());
        a.push_back("The current loop regulates the inverter-side current with the filter-capacitor current "
                    "added to the reference, so the grid current follows the set point.");
    }
    return a;
}

}  // namespace

RunResult run_scenario(const Scenario& s) {
    s.validate();
    SimConfig sc = s.sim;
    sc.t_end = s.duration;

    RunResult out;
    TripState trip;
    if (s.mode == Mode::Standalone) {
        StepProfile load(s.circuit.r_load);
        for (const auto& e : s.events) {
            if (e.r_load) load.add(e.t, *e.r_load);
        }
        StandaloneDriver drv(s.circuit, s.modulation, sc.dt_ctrl, s.v_ref_rms, load, s.kp_v, s.ki_v, s.r_limit);
        drv.limits = s.trip;
        out.record = simulate(drv, s.circuit, sc, TerminalCondition::load(s.circuit.r_load), s.initial);
        trip = drv.trip();
    } else {
        StepProfile pu(s.grid_pu, s.grid_ramp);
        StepProfile id(s.i_ref_d);
        StepProfile iq(s.i_ref_q);
        for (const auto& e : s.events) {
            if (e.grid_pu) pu.add(e.t, *e.grid_pu);
            if (e.i_ref_d) id.add(e.t, *e.i_ref_d);
            if (e.i_ref_q) iq.add(e.t, *e.i_ref_q);
        }
        GridDriverConfig gc = s.grid;
        gc.r_limit = s.r_limit;
        GridDriver drv(s.circuit, s.modulation, sc.dt_ctrl, gc, pu, id, iq);
        drv.limits = s.trip;
        out.record = simulate(drv, s.circuit, sc, TerminalCondition{TerminalCondition::Kind::Grid, 0.0}, s.initial);
        trip = drv.trip();
    }

    Report& r = out.report;
    r.scenario = s.name;
    r.version = kVersion;
    r.digest = scenario_digest(s);
    r.mode = s.mode == Mode::Grid ? "grid" : "standalone";
    r.duration = s.duration;
    r.dt_sim = sc.dt_sim;
    r.samples = out.record.size();
    r.tripped = trip.tripped;
    r.trip_time = trip.t;
    r.trip_reason = trip.reason;
    r.assumptions = assumptions(s);

    const double period = fundamental_period(s);
    for (const auto& m : s.metrics) {
        MetricResult mr;
        mr.name = m.name;
        mr.min = m.min;
        mr.max = m.max;
        mr.note = m.note;
        mr.from = m.from.value_or(s.duration - period);
        mr.to = m.to.value_or(s.duration);
        try {
            if (m.name == "trip") {
                mr.value = trip.tripped ? 1.0 : 0.0;
            } else {
                mr.value = evaluate_metric(m.name, out.record, s, mr.from, mr.to);
            }
        } catch (const std::exception& e) {
            mr.error = e.what();
        }
        mr.pass = mr.value.has_value() && (!mr.min || *mr.value >= *mr.min) && (!mr.max || *mr.value <= *mr.max);
        r.metrics.push_back(mr);
    }
    return out;
}

std::vector<RunResult> run_batch(const std::vector<Scenario>& scenarios, unsigned workers) {
    std::vector<RunResult> results(scenarios.size());
    workers = std::max(1u, workers);
    std::size_t next = 0;
    while (next < scenarios.size()) {
        std::vector<std::future<RunResult>> wave;
        const std::size_t begin = next;
        for (unsigned w = 0; w < workers && next < scenarios.size(); ++w, ++next) {
            wave.push_back(std::async(std::launch::async, [&scenarios, next] { return run_scenario(scenarios[next]); }));
        }
        for (std::size_t k = 0; k < wave.size(); ++k) results[begin + k] = wave[k].get();
    }
    return results;
}

// -----------------------------------------------------------------------------
// CSV
// -----------------------------------------------------------------------------

namespace {

const char* const kGateColumns[kGatedSwitchCount] = {"s1_gate", "s2_gate", "s3_gate", "s3p_gate", "s4_gate",
                                                     "s5_gate", "s6_gate", "s7_gate", "s8_gate",  "s9_gate"};
const char* const kDeviceNames[kDeviceCount] = {"S1", "S2", "S3", "S3p", "S4", "S5",
                                                "S6", "S7", "S8", "S9",  "D1"};

void put(std::string& line, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    line.append(buf, res.ptr);
}

std::string_view state_label(const Configuration& c) {
    if (c.is_idle()) return "Idle";
    return to_string(*c.state);
}

}  // namespace

std::string csv_header() {
    std::string h = "time_s,state";
    for (const char* g : kGateColumns) (h += ',') += g;
    h += ",vC1_V,vC2_V,vC3_V,iL1_A,iL2_A,vCf_V,v_raw_V,v_out_V,v_grid_V,p_src_W,p_load_W";
    for (const char* d : kDeviceNames) ((h += ",vblock_") += d) += "_V";
    return h;
}

void emit_csv(const WaveformRecord& rec, const CircuitParams& p, std::ostream& out) {
    out << csv_header() << '\n';
    std::string line;
    for (std::size_t n = 0; n < rec.size(); ++n) {
        line.clear();
        put(line, rec.time(n));
        const Configuration c = rec.configuration(n);
        (line += ',') += state_label(c);
        for (std::size_t k = 0; k < kGatedSwitchCount; ++k) {
            line += ',';
            line += ((rec.gates[n] >> k) & 1u) ? '1' : '0';
        }
        for (std::size_t k = 0; k < 6; ++k) {
            line += ',';
            put(line, rec.x[k][n]);
        }
        for (const auto* ch : {&rec.v_raw, &rec.v_out, &rec.v_grid, &rec.p_src, &rec.p_load}) {
            line += ',';
            put(line, (*ch)[n]);
        }
        const auto vb = blocking_voltages(c, rec.state(n), p);
        for (double v : vb) {
            line += ',';
            put(line, v);
        }
        line += '\n';
        out << line;
    }
}

void emit_csv(const WaveformRecord& rec, const CircuitParams& p, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing: " + std::strerror(errno));
    emit_csv(rec, p, out);
    out.flush();
    if (!out) throw std::runtime_error("write to " + path.string() + " failed: " + std::strerror(errno));
}

// -----------------------------------------------------------------------------
// Reports
// -----------------------------------------------------------------------------

namespace {

json report_json(const Report& r) {
    json j;
    j["scenario"] = r.scenario;
    j["version"] = r.version;
    j["digest"] = r.digest;
    j["mode"] = r.mode;
    j["duration_s"] = r.duration;
    j["dt_sim"] = r.dt_sim;
    j["samples"] = r.samples;
    j["trip"] = {{"tripped", r.tripped}, {"t", r.trip_time}, {"reason", r.trip_reason}};
    j["passed"] = r.passed();
    j["metrics"] = json::array();
    for (const auto& m : r.metrics) {
        json mj{{"name", m.name}, {"pass", m.pass}, {"from", m.from}, {"to", m.to}, {"note", m.note}};
        mj["value"] = m.value ? json(*m.value) : json(nullptr);
        mj["min"] = m.min ? json(*m.min) : json(nullptr);
        mj["max"] = m.max ? json(*m.max) : json(nullptr);
        if (!m.error.empty()) mj["error"] = m.error;
        j["metrics"].push_back(mj);
    }
    j["assumptions"] = r.assumptions;
    return j;
}

std::string bound_text(const MetricResult& m) {
    std::ostringstream os;
    os << std::setprecision(6);
    if (m.min && m.max) {
        os << "[" << *m.min << ", " << *m.max << "]";
    } else if (m.min) {
        os << ">= " << *m.min;
    } else if (m.max) {
        os << "<= " << *m.max;
    } else {
        os << "(report only)";
    }
    return os.str();
}

}  // namespace

void emit_report(const Report& r, ReportFormat format, std::ostream& out) {
    if (format == ReportFormat::Json) {
        out << report_json(r).dump(2) << '\n';
        return;
    }
    out << "scenario  " << r.scenario << "  (" << r.mode << ", " << r.duration << " s, dt " << r.dt_sim << " s)\n";
    out << "version   " << r.version << "\n";
    out << "digest    " << r.digest << "\n";
    out << "trip      " << (r.tripped ? "TRIPPED at t=" + std::to_string(r.trip_time) + " s: " + r.trip_reason : "none")
        << "\n\n";
    out << std::left << std::setw(24) << "metric" << std::setw(16) << "value" << std::setw(22) << "bound"
        << std::setw(18) << "window [s]" << "result\n";
    for (const auto& m : r.metrics) {
        std::ostringstream val, win;
        val << std::setprecision(6);
        if (m.value) {
            val << *m.value;
        } else {
            val << "n/a";
        }
        win << std::setprecision(4) << m.from << "-" << m.to;
        out << std::left << std::setw(24) << m.name << std::setw(16) << val.str() << std::setw(22) << bound_text(m)
            << std::setw(18) << win.str() << (m.pass ? "PASS" : "FAIL");
        if (!m.error.empty()) out << "  (" << m.error << ")";
        out << "\n";
        if (!m.note.empty()) out << "    " << m.note << "\n";
    }
    out << "\nassumptions:\n";
    for (const auto& a : r.assumptions) out << "  - " << a << "\n";
    out << "\noverall: " << (r.passed() ? "PASS" : "FAIL") << "\n";
}

void emit_report(const Report& r, ReportFormat format, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing: " + std::strerror(errno));
    emit_report(r, format, out);
    if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

}  // namespace scinv
