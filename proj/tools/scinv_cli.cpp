// Command-line entry point: run scenarios, list presets, size capacitors and
// run the acceptance suite.
//
// Exit codes: 0 all bounds pass, 1 at least one metric fails, 2 invalid input.

#include "scinv/acceptance.hpp"
#include "scinv/analysis.hpp"
#include "scinv/scenario.hpp"

#include <CLI11.hpp>

#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitInvalid = 2;

struct RunOptions {
    std::string scenario;
    std::string csv;
    std::string report;
    std::string format = "text";
    std::optional<double> dt_sim;
};

int cmd_run(const RunOptions& o) {
    scinv::Scenario s = scinv::resolve_scenario(o.scenario);
    if (o.dt_sim) {
        s.sim.dt_sim = *o.dt_sim;
        s.validate();
    }
    const auto fmt = o.format == "json" ? scinv::ReportFormat::Json : scinv::ReportFormat::Text;
    const scinv::RunResult r = scinv::run_scenario(s);
    if (!o.csv.empty()) scinv::emit_csv(r.record, s.circuit, o.csv);
    if (!o.report.empty()) scinv::emit_report(r.report, fmt, o.report);
    scinv::emit_report(r.report, fmt, std::cout);
    if (!r.report.passed()) {
        std::cerr << "failed metrics:";
        for (const auto& name : r.report.failures()) std::cerr << " " << name;
        std::cerr << "\n";
        return kExitFail;
    }
    return kExitPass;
}

int cmd_list() {
    for (const auto& name : scinv::preset_names()) {
        const auto s = scinv::preset(name);
        std::cout << std::left << std::setw(20) << name << s.description << "\n";
    }
    return kExitPass;
}

int cmd_size(double p, double vdc, double m, double fsw, double dv) {
    const auto r = scinv::capacitor_sizing({p, vdc, m, fsw, dv});
    std::cout << std::setprecision(6) << "capacitance_uF " << r.capacitance * 1e6 << "\n"
              << "i_out_A " << r.i_out << "\n"
              << "delta_q_C " << r.delta_q << "\n";
    return kExitPass;
}

int cmd_verify(bool verbose, bool skip_step_study, unsigned workers) {
    scinv::AcceptanceOptions opt;
    opt.verbose = verbose;
    opt.step_size_study = !skip_step_study;
    opt.workers = workers;
    const auto results = scinv::run_acceptance(opt);
    scinv::print_acceptance(results, std::cout, verbose);
    for (const auto& r : results) {
        if (!r.pass) return kExitFail;
    }
    return kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Switched-capacitor five-level inverter simulator"};
    app.set_version_flag("--version", std::string(scinv::kVersion));
    app.require_subcommand(1);

    bool seed_free = false;
    app.add_flag("--seed-free", seed_free, "Reserved; the simulator has no randomness")->group("");

    RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Run a scenario file or preset and print its report");
    run_cmd->add_option("scenario", run.scenario, "Preset name or path to a scenario file")->required();
    run_cmd->add_option("--csv", run.csv, "Write the waveform record as CSV");
    run_cmd->add_option("--report", run.report, "Write the report to a file");
    run_cmd->add_option("--format", run.format, "Report format")->check(CLI::IsMember({"text", "json"}));
    run_cmd->add_option("--dt-sim", run.dt_sim, "Override the simulation step [s]")->check(CLI::PositiveNumber);
    run_cmd->add_flag("--seed-free", seed_free, "Reserved; the simulator has no randomness");

    app.add_subcommand("list-presets", "List built-in scenarios");

    double p = 0, vdc = 0, m = 0, fsw = 0, dv = 0;
    auto* size_cmd = app.add_subcommand("size-caps", "Capacitance for a ripple target: size-caps P Vdc M fsw dV");
    size_cmd->add_option("P", p, "Output power [W]")->required();
    size_cmd->add_option("Vdc", vdc, "DC voltage [V]")->required();
    size_cmd->add_option("M", m, "Modulation index")->required();
    size_cmd->add_option("fsw", fsw, "Switching frequency [Hz]")->required();
    size_cmd->add_option("dV", dv, "Allowed ripple [V]")->required();

    bool verbose = false, quick = false;
    unsigned workers = 0;
    auto* verify_cmd = app.add_subcommand("verify", "Run the acceptance suite");
    verify_cmd->add_flag("-v,--verbose", verbose, "Print every check");
    verify_cmd->add_flag("--quick", quick, "Skip the half-step rerun");
    verify_cmd->add_option("-j,--jobs", workers, "Worker threads (0 = all cores)");
    verify_cmd->add_flag("--seed-free", seed_free, "Reserved; the simulator has no randomness");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitPass : kExitInvalid;
    }
    if (seed_free) {
        std::cerr << "error: --seed-free is reserved; the simulator is deterministic and has no seed\n";
        return kExitInvalid;
    }

    try {
        if (*run_cmd) return cmd_run(run);
        if (app.got_subcommand("list-presets")) return cmd_list();
        if (*size_cmd) return cmd_size(p, vdc, m, fsw, dv);
        if (*verify_cmd) return cmd_verify(verbose, quick, workers);
    } catch (const scinv::ScenarioError& e) {
        std::cerr << "invalid scenario: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    }
    return kExitInvalid;
}
