#include "scinv/acceptance.hpp"

#include "scinv/analysis.hpp"
#include "scinv/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <streambuf>
#include <thread>

namespace scinv {

namespace {

// -----------------------------------------------------------------------------
// Check bookkeeping
// -----------------------------------------------------------------------------

class Criterion {
public:
    Criterion(int id, std::string title) { r_.id = id; r_.title = std::move(title); r_.pass = true; }

    void check(const std::string& name, double value, const char* op, double bound, bool ok) {
        std::ostringstream os;
        os << std::setprecision(6) << name << ": " << value << " " << op << " " << bound << " -> "
           << (ok ? "ok" : "FAIL");
        add(os.str(), ok);
    }
    void at_most(const std::string& name, double v, double bound) { check(name, v, "<=", bound, v <= bound); }
    void below(const std::string& name, double v, double bound) { check(name, v, "<", bound, v < bound); }
    void at_least(const std::string& name, double v, double bound) { check(name, v, ">=", bound, v >= bound); }
    void within(const std::string& name, double v, double target, double tol) {
        std::ostringstream b;
        b << target << " +/- " << tol;
        std::ostringstream os;
        const bool ok = std::abs(v - target) <= tol;
        os << std::setprecision(6) << name << ": " << v << " in " << b.str() << " -> " << (ok ? "ok" : "FAIL");
        add(os.str(), ok);
    }
    void flag(const std::string& text, bool ok) { add(text + " -> " + (ok ? "ok" : "FAIL"), ok); }
    /// Records an evaluation error as a failed check.
    void error(const std::string& name, const std::exception& e) { add(name + ": " + e.what() + " -> FAIL", false); }

    CriterionResult result() const { return r_; }

private:
    void add(std::string line, bool ok) {
        r_.checks.push_back(std::move(line));
        r_.pass = r_.pass && ok;
    }
    CriterionResult r_;
};

double metric(const RunResult& run, const Scenario& s, const std::string& name, double from, double to) {
    return evaluate_metric(name, run.record, s, from, to);
}

double period_of(const Scenario& s) { return 1.0 / (s.mode == Mode::Grid ? s.grid.f_grid : s.modulation.f0); }

/// Streams bytes into an FNV-1a hash so multi-megabyte CSV output can be
/// compared without holding it in memory.
class HashBuf : public std::streambuf {
public:
    std::uint64_t value() const { return h_; }

protected:
    int_type overflow(int_type ch) override {
        if (ch != traits_type::eof()) mix(static_cast<unsigned char>(ch));
        return ch;
    }
    std::streamsize xsputn(const char* s, std::streamsize n) override {
        for (std::streamsize k = 0; k < n; ++k) mix(static_cast<unsigned char>(s[k]));
        return n;
    }

private:
    void mix(unsigned char c) {
        h_ ^= c;
        h_ *= 1099511628211ull;
    }
    std::uint64_t h_ = 1469598103934665603ull;
};

std::uint64_t csv_hash(const RunResult& run, const CircuitParams& p) {
    HashBuf buf;
    std::ostream os(&buf);
    emit_csv(run.record, p, os);
    return buf.value();
}

std::string report_text(const Report& r) {
    std::ostringstream os;
    emit_report(r, ReportFormat::Json, os);
    return os.str();
}

/// Tolerance floor for the step-size study: 0.5% of the metric's natural
/// scale, so near-zero quantities are not judged on relative change alone.
double metric_scale(const std::string& name, const CircuitParams& p) {
    static const std::map<std::string, int> kind = {
        {"v_rms", 1},          {"vc_min", 1},        {"vc_max", 1},       {"vc3_min", 1},
        {"vc_imbalance", 1},   {"s5_min", 1},        {"s5_max", 1},       {"v_thd", 2},
        {"i_thd", 2},          {"v_rms_error", 2},   {"pf", 2},           {"efficiency", 2},
        {"level_fidelity", 2}, {"v_rms_cycle_max_dev", 2}, {"v_rms_cycle_overshoot", 2},
        {"i_overshoot", 2}};
    const auto it = kind.find(name);
    if (it == kind.end()) return 0.0;
    return it->second == 1 ? p.vin : 1.0;
}

// -----------------------------------------------------------------------------
// Criteria
// -----------------------------------------------------------------------------

struct Runs {
    std::map<std::string, Scenario> scenario;
    std::map<std::string, RunResult> run;
    std::map<std::string, RunResult> half;  // same presets at dt_sim / 2
    Scenario nominal;
    RunResult nom;
    double nominal_wall_s = 0.0;
    std::vector<std::pair<double, double>> r_on_sweep;  // (r_on, eta)
};

constexpr double kSteadyFrom = 0.2;

CriterionResult five_level(const Runs& R) {
    Criterion c(1, "five-level synthesis");
    const auto& s = R.nominal;
    const auto& rec = R.nom.record;
    const double t_end = s.duration;
    try {
        c.at_least("fraction of steady samples within 5% of a level", metric(R.nom, s, "level_fidelity", kSteadyFrom, t_end),
                   1.0);
        // Every one of the five bands occupied.
        const double v = s.circuit.vin;
        const double levels[] = {-2 * v, -v, 0.0, v, 2 * v};
        std::array<bool, 5> seen{};
        for (std::size_t n = rec.index_at(kSteadyFrom); n < rec.index_at(t_end); ++n) {
            for (std::size_t k = 0; k < 5; ++k) {
                const double tol = 0.05 * std::max(std::abs(levels[k]), v);
                if (std::abs(rec.v_raw[n] - levels[k]) <= tol) seen[k] = true;
            }
        }
        c.flag("all five bands occupied", std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));

        const auto cycle = static_cast<std::size_t>(std::llround(period_of(s) / rec.dt));
        int worst_missing = 0;
        for (std::size_t a = rec.index_at(kSteadyFrom); a + cycle <= rec.index_at(t_end); a += cycle) {
            std::array<bool, 6> st{};
            for (std::size_t n = a; n < a + cycle; ++n) {
                const auto cfg = rec.configuration(n);
                if (cfg.state) st[static_cast<std::size_t>(*cfg.state)] = true;
            }
            worst_missing = std::max(worst_missing, static_cast<int>(std::count(st.begin(), st.end(), false)));
        }
        c.at_most("states missing from the worst cycle", worst_missing, 0);
        c.below("wall time for 1 simulated second [s]", R.nominal_wall_s, 30.0);
    } catch (const std::exception& e) {
        c.error("evaluation", e);
    }
    return c.result();
}

CriterionResult standalone_quality(const Runs& R) {
    Criterion c(2, "standalone quality 230 V / 4.4 kW");
    const auto& s = R.scenario.at("STANDALONE_STEADY");
    const auto& run = R.run.at("STANDALONE_STEADY");
    const double T = period_of(s);
    try {
        c.at_most("filtered-voltage THD", metric(run, s, "v_thd", s.duration - T, s.duration), 0.035);
        c.within("RMS error", metric(run, s, "v_rms_error", s.duration - T, s.duration), 0.0, 0.01);
        c.flag("no trip", !run.report.tripped);
    } catch (const std::exception& e) {
        c.error("evaluation", e);
    }
    return c.result();
}

/// Cycle RMS of the chosen metric for consecutive cycles in [from, to).
std::vector<double> per_cycle(const RunResult& run, const Scenario& s, const std::string& name, double from,
                              double to) {
    const double T = period_of(s);
    std::vector<double> out;
    for (double a = from; a + T <= to + 1e-9; a += T) out.push_back(metric(run, s, name, a, a + T));
    return out;
}

CriterionResult load_step(const Runs& R) {
    Criterion c(3, "load step 3.3 -> 1.1 kW");
    const auto& s = R.scenario.at("LOAD_STEP");
    const auto& run = R.run.at("LOAD_STEP");
    try {
        const double t_step = s.events.at(0).t;
        const auto rms = per_cycle(run, s, "v_rms", t_step, s.duration);
        // First cycle after which every cycle stays inside the band.
        std::size_t reentry = rms.size();
        for (std::size_t k = rms.size(); k-- > 0;) {
            if (std::abs(rms[k] - s.v_ref_rms) / s.v_ref_rms > 0.01) break;
            reentry = k;
        }
        c.at_most("cycles until RMS stays within 1%", static_cast<double>(reentry), 5.0);
        double over = 0.0;
        for (double r : rms) over = std::max(over, (r - s.v_ref_rms) / s.v_ref_rms);
        c.below("RMS envelope overshoot", over, 0.05);
    } catch (const std::exception& e) {
        c.error("evaluation", e);
    }
    return c.result();
}

CriterionResult grid_step(const Runs& R) {
    Criterion c(4, "grid 15 A steady state and 10 -> 15 A step");
    const auto& s = R.scenario.at("GRID_STEADY_STEP");
    const auto& run = R.run.at("GRID_STEADY_STEP");
    const double T = period_of(s);
    try {
        c.below("grid-current THD at 15 A", metric(run, s, "i_thd", s.duration - T, s.duration), 0.03);
        const double t_step = s.events.at(0).t;
        const auto rms = per_cycle(run, s, "i_rms", t_step, s.duration);
        const double final_rms = rms.back();
        double worst = 0.0;
        for (std::size_t k = 1; k < rms.size(); ++k) worst = std::max(worst, std::abs(rms[k] - final_rms) / final_rms);
        c.at_most("cycle-RMS deviation from final, from the 2nd cycle after the step", worst, 0.05);
    } catch (const std::exception& e) {
        c.error("evaluation", e);
    }
    return c.result();
}

CriterionResult pf_mode(const Runs& R) {
    Criterion c(5, "power-factor mode (15 A, 4.5 A)");
    const auto& s = R.scenario.at("PF_MODE");
    const auto& run = R.run.at("PF_MODE");
    const double T = period_of(s);
    try {
        const double shift = metric(run, s, "phase_shift_deg", s.duration - T, s.duration);
        c.within("|phase shift| [deg]", std::abs(shift), 16.7, 1.0);
        c.flag(shift < 0.0 ? "current leads voltage" : "current lags voltage", shift < 0.0);
        c.within("power factor", metric(run, s, "pf", s.duration - T, s.duration), 0.95, 0.01);
    } catch (const std::exception& e) {
        c.error("evaluation", e);
    }
    return c.result();
}

CriterionResult ride_through(const Runs& R) {
    Criterion c(6, "low-voltage ride-through");
    const auto& s = R.scenario.at("SAG_RIDE_THROUGH");
    const auto& run = R.run.at("SAG_RIDE_THROUGH");
    try {
        c.flag(run.report.tripped ? "tripped at t=" + std::to_string(run.report.trip_time) + ": " + run.report.trip_reason
                                  : "no trip across 0.8, 0.5 and 0.2 pu",
               !run.report.tripped);
        // Segment boundaries come from the scenario's events: 0.5 pu, 0.8 pu, 0.2 pu, 0.8 pu.
        const auto& ev = s.events;
        const double T = period_of(s);
        c.below("current THD late in the 0.5 pu segment", metric(run, s, "i_thd", ev.at(1).t - 5 * T, ev.at(1).t), 0.05);
        c.below("current overshoot after the 0.2 pu dip", metric(run, s, "i_overshoot", ev.at(3).t, s.duration), 0.05);
    } catch (const std::exception& e) {
        c.error("evaluation", e);
    }
    return c.result();
}

CriterionResult capacitors(const Runs& R) {
    Criterion c(7, "capacitor voltages and self-balancing");
    try {
        const auto& s = R.scenario.at("GRID_STEADY_STEP");
        const auto& run = R.run.at("GRID_STEADY_STEP");
        const double T = period_of(s);
        c.at_least("min(vC1, vC2, vC3) at 15 A [V]", metric(run, s, "vc_min", s.duration - 5 * T, s.duration), 188.0);
        c.at_most("max(vC1, vC2, vC3) at 15 A [V]", metric(run, s, "vc_max", s.duration - 5 * T, s.duration), 212.0);
        c.below("max |vC1 - vC2| at 15 A [V]", metric(run, s, "vc_imbalance", s.duration - 5 * T, s.duration), 2.0);

        const auto& b = R.scenario.at("BALANCE_PROBE");
        const auto& brun = R.run.at("BALANCE_PROBE");
        const double Tb = period_of(b);
        c.at_least("initial imbalance [V]", metric(brun, b, "vc_imbalance", 0.0, 2 * b.sim.dt_sim), 19.0);
        c.below("max |vC1 - vC2| after 10 cycles [V]", metric(brun, b, "vc_imbalance", 10 * Tb, b.duration), 2.0);
    } catch (const std::exception& e) {
        c.error("evaluation", e);
    }
    return c.result();
}

CriterionResult stress(const Runs& R) {
    Criterion c(8, "blocking-voltage classes");
    try {
        const auto st = stress_summary(R.nom.record, R.nominal.circuit, kSteadyFrom, R.nominal.duration);
        auto peak = [&](SwitchId id) { return std::max(std::abs(st[id].min), std::abs(st[id].max)); };
        for (SwitchId id : {SwitchId::S3, SwitchId::S3p, SwitchId::S4, SwitchId::S8, SwitchId::S9}) {
            c.at_most(std::string(to_string(id)) + " peak [V]", peak(id), 220.0);
        }
        for (SwitchId id : {SwitchId::S1, SwitchId::S2, SwitchId::S6, SwitchId::S7}) {
            c.at_most(std::string(to_string(id)) + " peak [V]", peak(id), 440.0);
        }
        c.at_most("S5 max [V]", st[SwitchId::S5].max, 220.0);
        c.at_least("S5 min [V]", st[SwitchId::S5].min, -440.0);
        // Blocking range of each device is its envelope span, max - min.
        std::vector<std::string> over;
        double s5_span = st[SwitchId::S5].span, next_span = 0.0;
        for (const auto& d : st.devices) {
            if (d.span > 400.0) over.emplace_back(to_string(d.device));
            if (d.device != SwitchId::S5) next_span = std::max(next_span, d.span);
        }
        c.check("S5 blocking span [V]", s5_span, ">", 400.0, s5_span > 400.0);
        c.check("largest span of any other device [V]", next_span, "<=", 400.0 * 1.1, next_span <= 440.0);
        c.flag("devices spanning more than 400 V: {" + [&] {
            std::string j;
            for (const auto& n : over) j += (j.empty() ? "" : ",") + n;
            return j;
        }() + "} (expected only S5)",
               over.size() == 1 && over[0] == "S5");
    } catch (const std::exception& e) {
        c.error("evaluation", e);
    }
    return c.result();
}

CriterionResult sizing(const Runs& R) {
    Criterion c(9, "capacitor sizing and ripple prediction");
    try {
        const SizingInputs base{7000.0, 200.0, 1.0, 5000.0, 20.0};
        c.within("C(7 kW, 200 V, 1.0, 5 kHz, 20 V) [uF]", capacitor_sizing(base).capacitance * 1e6, 350.0, 1e-9);
        SizingInputs m77 = base;
        m77.m_index = 0.77;
        c.within("C(..., M = 0.77, ...) [uF]", capacitor_sizing(m77).capacitance * 1e6, 269.5, 1e-9);
        const double c0 = capacitor_sizing(base).capacitance;
        auto bumped = [&](double SizingInputs::*field) {
            SizingInputs s = base;
            s.*field *= 1.1;
            return capacitor_sizing(s).capacitance;
        };
        c.flag("increasing in p_out and m_index",
               bumped(&SizingInputs::p_out) > c0 && bumped(&SizingInputs::m_index) > c0);
        c.flag("decreasing in v_dc, f_sw and delta_v", bumped(&SizingInputs::v_dc) < c0 &&
                                                           bumped(&SizingInputs::f_sw) < c0 &&
                                                           bumped(&SizingInputs::delta_v) < c0);

        // Carrier-period ripple over the final fundamental cycle of the nominal run.
        const auto& rec = R.nom.record;
        const auto& s = R.nominal;
        const auto carrier = static_cast<std::size_t>(std::llround(1.0 / (s.modulation.f_sw * rec.dt)));
        const std::size_t end = rec.index_at(s.duration);
        const std::size_t begin = rec.index_at(s.duration - period_of(s));
        double predicted = 0.0, measured = 0.0;
        for (std::size_t a = begin; a + carrier <= end; a += carrier) {
            const auto r = delta_v_per_period(rec, s.circuit, a, a + carrier);
            predicted += std::abs(r.predicted_excursion);
            measured += r.measured_excursion;
        }
        const double ratio = measured > 0.0 ? predicted / measured : 0.0;
        c.within("predicted / measured per-period vC1 excursion", ratio, 1.0, 0.2);
    } catch (const std::exception& e) {
        c.error("evaluation", e);
    }
    return c.result();
}

CriterionResult hygiene(const Runs& R) {
    Criterion c(10, "numerical hygiene");
    try {
        double worst = 0.0;
        std::string worst_name;
        for (const auto& [name, run] : R.run) {
            const auto res = energy_audit(run.record, R.scenario.at(name).circuit);
            const double v = res.value_or(0.0);
            if (v >= worst) {
                worst = v;
                worst_name = name;
            }
        }
        c.below("worst energy-audit residual (" + worst_name + ")", worst, 1e-3);

        if (!R.half.empty()) {
            double worst_rel = 0.0;
            std::string which;
            int compared = 0;
            for (const auto& [name, run] : R.run) {
                const auto& half = R.half.at(name);
                const auto& p = R.scenario.at(name).circuit;
                for (std::size_t k = 0; k < run.report.metrics.size(); ++k) {
                    const auto& a = run.report.metrics[k];
                    const auto& b = half.report.metrics[k];
                    if (a.name == "energy_residual" || !a.value || !b.value) continue;
                    const double scale = std::max({std::abs(*a.value), std::abs(*b.value), metric_scale(a.name, p)});
                    const double rel = scale > 0.0 ? std::abs(*a.value - *b.value) / scale : 0.0;
                    ++compared;
                    if (rel >= worst_rel) {
                        worst_rel = rel;
                        std::ostringstream os;
                        os << name << "/" << a.name << " " << *a.value << " vs " << *b.value;
                        which = os.str();
                    }
                }
            }
            c.below("worst metric change at dt_sim/2 over " + std::to_string(compared) + " metrics (" + which + ")",
                    worst_rel, 0.005);
            const auto& s = R.scenario.at("GRID_STEADY_STEP");
            const double T = period_of(s);
            const double i_full = metric(R.run.at("GRID_STEADY_STEP"), s, "i_rms", s.duration - T, s.duration);
            const double i_half = metric(R.half.at("GRID_STEADY_STEP"), s, "i_rms", s.duration - T, s.duration);
            c.below("cycle-RMS grid current change at dt_sim/2", std::abs(i_full - i_half) / i_full, 0.005);
        }

        Scenario again = R.scenario.at("BALANCE_PROBE");
        const RunResult rerun = run_scenario(again);
        const auto& first = R.run.at("BALANCE_PROBE");
        c.flag("CSV byte-identical on rerun", csv_hash(first, again.circuit) == csv_hash(rerun, again.circuit));
        c.flag("report identical on rerun", report_text(first.report) == report_text(rerun.report));
    } catch (const std::exception& e) {
        c.error("evaluation", e);
    }
    return c.result();
}

CriterionResult efficiency_band(const Runs& R) {
    Criterion c(11, "efficiency band and r_on monotonicity");
    try {
        for (const char* name : {"STANDALONE_STEADY", "GRID_RATED"}) {
            const auto& s = R.scenario.at(name);
            const double eta = metric(R.run.at(name), s, "efficiency", s.duration - 5 * period_of(s), s.duration);
            c.within(std::string("efficiency ") + name, eta, 0.9625, 0.0125);
        }
        bool mono = true;
        std::ostringstream os;
        os << std::setprecision(5) << "eta vs r_on:";
        for (std::size_t k = 0; k < R.r_on_sweep.size(); ++k) {
            os << " " << R.r_on_sweep[k].first * 1e3 << " mOhm=" << R.r_on_sweep[k].second;
            if (k > 0 && !(R.r_on_sweep[k].second < R.r_on_sweep[k - 1].second)) mono = false;
        }
        c.flag(os.str() + " (strictly decreasing)", mono);
    } catch (const std::exception& e) {
        c.error("evaluation", e);
    }
    return c.result();
}

CriterionResult switching_rate(const Runs& R) {
    Criterion c(12, "switching-rate constraint");
    try {
        const auto& s = R.nominal;
        const double limit = 2.0 * s.modulation.f_sw / s.modulation.f0 + 2.0;
        c.at_most("S2 transitions, worst cycle", metric(R.nom, s, "s2_transitions", kSteadyFrom, s.duration), 2.0);
        c.at_most("S6 transitions, worst cycle", metric(R.nom, s, "s6_transitions", kSteadyFrom, s.duration), 2.0);
        c.at_most("other switches, worst cycle", metric(R.nom, s, "max_transitions_other", kSteadyFrom, s.duration),
                  limit);
    } catch (const std::exception& e) {
        c.error("evaluation", e);
    }
    return c.result();
}

}  // namespace

// -----------------------------------------------------------------------------
// Suite
// -----------------------------------------------------------------------------

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt) {
    const unsigned workers = opt.workers ? opt.workers : std::max(1u, std::thread::hardware_concurrency());
    Runs R;

    // Nominal 15 A grid operation for one simulated second, timed on its own.
    R.nominal = preset("STRESS_SCAN");
    R.nominal.name = "NOMINAL_1S";
    R.nominal.duration = 1.0;
    R.nominal.metrics.clear();
    const auto t0 = std::chrono::steady_clock::now();
    R.nom = run_scenario(R.nominal);
    R.nominal_wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<Scenario> jobs;
    std::vector<std::string> keys;
    for (const auto& name : preset_names()) {
        const Scenario s = preset(name);
        R.scenario[name] = s;
        jobs.push_back(s);
        keys.push_back("run:" + name);
        if (opt.step_size_study) {
            Scenario h = s;
            h.sim.dt_sim *= 0.5;
            jobs.push_back(h);
            keys.push_back("half:" + name);
        }
    }
    const std::vector<double> r_on_values = {5e-3, 10e-3, 20e-3};
    for (double r_on : r_on_values) {
        Scenario s = preset("STANDALONE_STEADY");
        s.circuit.r_on = r_on;
        s.metrics = {MetricSpec{"efficiency", s.duration - 5 * period_of(s), s.duration, {}, {}, ""}};
        jobs.push_back(s);
        keys.push_back("r_on");
    }

    auto results = run_batch(jobs, workers);
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        const std::string& key = keys[k];
        if (key.rfind("run:", 0) == 0) {
            R.run[key.substr(4)] = std::move(results[k]);
        } else if (key.rfind("half:", 0) == 0) {
            R.half[key.substr(5)] = std::move(results[k]);
        } else {
            const auto& m = results[k].report.metrics.at(0);
            R.r_on_sweep.emplace_back(jobs[k].circuit.r_on, m.value.value_or(0.0));
        }
    }

    return {five_level(R),    standalone_quality(R), load_step(R), grid_step(R),
            pf_mode(R),       ride_through(R),       capacitors(R), stress(R),
            sizing(R),        hygiene(R),            efficiency_band(R), switching_rate(R)};
}

void print_acceptance(const std::vector<CriterionResult>& results, std::ostream& out, bool verbose) {
    int passed = 0;
    for (const auto& r : results) {
        out << (r.pass ? "[PASS] " : "[FAIL] ") << std::setw(2) << r.id << "  " << r.title << "\n";
        if (verbose || !r.pass) {
            for (const auto& c : r.checks) out << "         " << c << "\n";
        }
        passed += r.pass ? 1 : 0;
    }
    out << passed << "/" << results.size() << " criteria passed\n";
}

}  // namespace scinv
