#pragma once

// Scenario files, presets, execution, waveform export and reports.

#include "scinv/circuit.hpp"
#include "scinv/drivers.hpp"
#include "scinv/modulation.hpp"
#include "scinv/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace scinv {

/// Rejected scenario input. `where()` names the offending field path or
/// line/column of a syntax error.
class ScenarioError : public std::invalid_argument {
public:
    ScenarioError(std::string where, const std::string& what)
        : std::invalid_argument(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}
    const std::string& where() const { return where_; }

private:
    std::string where_;
};

enum class Mode { Standalone, Grid };

struct ScenarioEvent {
    double t = 0.0;
    std::optional<double> p_load_w;
    std::optional<double> r_load;
    std::optional<double> i_ref_d;
    std::optional<double> i_ref_q;
    std::optional<double> grid_pu;
};

/// One requested metric, evaluated over [from, to] (default: last fundamental
/// cycle) and checked against optional bounds.
struct MetricSpec {
    std::string name;
    std::optional<double> from;
    std::optional<double> to;
    std::optional<double> min;
    std::optional<double> max;
    std::string note;
};

struct Scenario {
    std::string name;
    std::string description;
    Mode mode = Mode::Standalone;
    double duration = 0.2;

    CircuitParams circuit;
    SimConfig sim;
    ModulationConfig modulation;

    // Standalone voltage loop.
    double v_ref_rms = 230.0;
    double kp_v = 0.005;
    double ki_v = 0.5;
    double r_limit = 1.9;

    // Grid current loop and grid.
    GridDriverConfig grid;
    double i_ref_d = 0.0;   // A peak
    double i_ref_q = 0.0;   // A peak, positive = leading
    double grid_pu = 1.0;
    double grid_ramp = 1e-3;

    StateVector initial;
    std::vector<ScenarioEvent> events;
    std::vector<MetricSpec> metrics;
    TripLimits trip;

    /// Throws ScenarioError naming the first violated rule.
    void validate() const;
    /// Load resistance at t = 0 (standalone).
    double initial_load() const { return circuit.r_load; }
};

/// Parses a scenario document. `origin` prefixes diagnostics.
Scenario parse_scenario(const std::string& text, const std::string& origin = "scenario");
Scenario load_scenario_file(const std::filesystem::path& path);

/// Canonical JSON of the fully resolved scenario (sorted keys).
std::string canonical_json(const Scenario& s);
/// FNV-1a 64-bit digest of canonical_json, as 16 hex digits.
std::string scenario_digest(const Scenario& s);

std::vector<std::string> preset_names();
bool is_preset(const std::string& name);
/// Throws ScenarioError for unknown names.
Scenario preset(const std::string& name);
/// Raw preset document as shipped.
std::string preset_source(const std::string& name);

/// Preset name or path to a scenario file.
Scenario resolve_scenario(const std::string& preset_or_path);

// -----------------------------------------------------------------------------
// Execution
// -----------------------------------------------------------------------------

struct MetricResult {
    std::string name;
    std::optional<double> value;
    std::optional<double> min;
    std::optional<double> max;
    double from = 0.0;
    double to = 0.0;
    bool pass = true;
    std::string note;
    std::string error;  // set when the metric could not be evaluated
};

struct Report {
    std::string scenario;
    std::string version;
    std::string digest;
    std::string mode;
    double duration = 0.0;
    double dt_sim = 0.0;
    std::size_t samples = 0;
    bool tripped = false;
    double trip_time = 0.0;
    std::string trip_reason;
    std::vector<MetricResult> metrics;
    std::vector<std::string> assumptions;

    bool passed() const;
    std::vector<std::string> failures() const;
};

struct RunResult {
    WaveformRecord record;
    Report report;
};

/// Evaluates a catalogue metric over the window [from, to] of a finished run.
/// Throws std::invalid_argument for unknown names.
double evaluate_metric(const std::string& name, const WaveformRecord& rec, const Scenario& s,
                       double from, double to);
std::vector<std::string> metric_names();

RunResult run_scenario(const Scenario& s);

/// Runs independent scenarios on up to `workers` threads; results keep input order.
std::vector<RunResult> run_batch(const std::vector<Scenario>& scenarios, unsigned workers = 1);

extern const char* const kVersion;

// -----------------------------------------------------------------------------
// Output
// -----------------------------------------------------------------------------

enum class ReportFormat { Text, Json };

std::string csv_header();
void emit_csv(const WaveformRecord& rec, const CircuitParams& p, std::ostream& out);
/// Throws std::runtime_error naming the path and cause on I/O failure.
void emit_csv(const WaveformRecord& rec, const CircuitParams& p, const std::filesystem::path& path);

void emit_report(const Report& r, ReportFormat format, std::ostream& out);
void emit_report(const Report& r, ReportFormat format, const std::filesystem::path& path);

}  // namespace scinv
