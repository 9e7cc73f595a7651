#include "scinv/scenario.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <sstream>

using namespace scinv;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

const char* const kMinimal = R"({
  "name": "tiny",
  "mode": "standalone",
  "duration_s": 0.2,
  "load": { "p_load_w": 2200 }
})";

std::string error_of(const std::string& text) {
    try {
        parse_scenario(text, "case");
    } catch (const ScenarioError& e) {
        return e.what();
    }
    return {};
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

// -----------------------------------------------------------------------------
// Parsing
// -----------------------------------------------------------------------------

TEST_CASE("a minimal scenario fills in defaults", "[scenario]") {
    const Scenario s = parse_scenario(kMinimal);
    CHECK(s.name == "tiny");
    CHECK(s.mode == Mode::Standalone);
    CHECK(s.duration == 0.2);
    CHECK(s.circuit.vin == 200.0);
    CHECK(s.circuit.r_load == Approx(230.0 * 230.0 / 2200.0));
    CHECK(s.sim.dt_sim == 1e-6);
    CHECK(s.r_limit == 1.9);
}

TEST_CASE("invalid scenarios are rejected with a location", "[scenario]") {
    CHECK_THAT(error_of(R"({"name": "x", "duration_s": 0.2, "circuit": {"vin": 200, "colour": 1}})"),
               ContainsSubstring("circuit.colour"));
    CHECK_THAT(error_of("{\n  \"name\": \"x\",\n  \"duration_s\": 0.2,,\n}"), ContainsSubstring("line 3"));
    CHECK_THAT(error_of(R"({"name": "x", "duration_s": "long"})"), ContainsSubstring("duration_s"));
    CHECK_FALSE(error_of(R"({"name": "x", "duration_s": 0})").empty());
    CHECK_FALSE(error_of(R"({"name": "x"})").empty());
    CHECK_FALSE(error_of(R"({"name": "x", "mode": "island", "duration_s": 0.2})").empty());
    CHECK_FALSE(error_of(R"({"name": "x", "mode": "grid", "duration_s": 0.5,
        "events": [{"t": 0.3, "i_ref_d": 5}, {"t": 0.2, "i_ref_d": 3}]})").empty());
    CHECK_FALSE(error_of(R"({"name": "x", "mode": "grid", "duration_s": 0.5,
        "events": [{"t": 0.3, "grid_pu": 1.5}]})").empty());
    CHECK_FALSE(error_of(R"({"name": "x", "duration_s": 0.5,
        "events": [{"t": 0.3, "grid_pu": 0.5}]})").empty());  // grid event in standalone mode
    CHECK_FALSE(error_of(R"({"name": "x", "duration_s": 0.5, "metrics": [{"name": "flux"}]})").empty());
    CHECK_FALSE(error_of(R"({"name": "x", "duration_s": 0.5, "metrics": [{"name": "v_thd", "from": 0.4, "to": 0.3}]})").empty());
    CHECK_FALSE(error_of(R"({"name": "x", "duration_s": 0.2, "sim": {"dt_sim": 3e-6}})").empty());
    CHECK_FALSE(error_of(R"({"name": "x", "duration_s": 0.2, "control": {"r_limit": 2.5}})").empty());
}

TEST_CASE("every preset parses and validates", "[scenario]") {
    const auto names = preset_names();
    CHECK(names.size() >= 8);
    for (const auto& n : names) {
        INFO(n);
        CHECK(is_preset(n));
        const Scenario s = preset(n);
        CHECK(s.name == n);
        CHECK_NOTHROW(s.validate());
        CHECK_FALSE(s.metrics.empty());
        CHECK(scenario_digest(s).size() == 16);
    }
    CHECK_FALSE(is_preset("NOT_A_PRESET"));
    CHECK_THROWS_AS(preset("NOT_A_PRESET"), ScenarioError);
    CHECK_THROWS_AS(resolve_scenario("/no/such/file.json"), ScenarioError);
}

TEST_CASE("the digest follows the content", "[scenario][property]") {
    const Scenario a = preset("STANDALONE_STEADY");
    CHECK(scenario_digest(a) == scenario_digest(parse_scenario(preset_source("STANDALONE_STEADY"))));
    Scenario b = a;
    b.circuit.c3 *= 1.01;
    CHECK(scenario_digest(b) != scenario_digest(a));
    std::string edited = preset_source("STANDALONE_STEADY");
    const auto pos = edited.find("\"duration_s\": 0.3");
    REQUIRE(pos != std::string::npos);
    edited.replace(pos, 17, "\"duration_s\": 0.31");
    CHECK(scenario_digest(parse_scenario(edited)) != scenario_digest(a));
    // Key order in the source does not matter.
    const Scenario d1 = parse_scenario(R"({"name": "k", "duration_s": 0.2, "circuit": {"vin": 190, "c1": 3e-4}})");
    const Scenario d2 = parse_scenario(R"({"circuit": {"c1": 3e-4, "vin": 190}, "duration_s": 0.2, "name": "k"})");
    CHECK(scenario_digest(d1) == scenario_digest(d2));
}

TEST_CASE("metric catalogue", "[scenario]") {
    const auto names = metric_names();
    for (const char* n : {"v_rms", "v_thd", "i_thd", "pf", "efficiency", "energy_residual", "vc_imbalance", "trip"}) {
        CHECK(std::find(names.begin(), names.end(), n) != names.end());
    }
}

// -----------------------------------------------------------------------------
// Execution and output
// -----------------------------------------------------------------------------

TEST_CASE("CSV export of an empty record is the header alone", "[scenario]") {
    std::ostringstream os;
    emit_csv(WaveformRecord{}, CircuitParams{}, os);
    CHECK(os.str() == csv_header() + "\n");
    CHECK(csv_header().rfind("time_s,state,s1_gate", 0) == 0);
    CHECK_THAT(csv_header(), ContainsSubstring("vC1_V"));
    CHECK_THAT(csv_header(), ContainsSubstring("p_load_W"));
    CHECK_THROWS_AS(emit_csv(WaveformRecord{}, CircuitParams{}, std::filesystem::path("/no/such/dir/x.csv")),
                    std::runtime_error);
}

TEST_CASE("a short run produces a report, a CSV and the same bytes twice", "[scenario]") {
    Scenario s = parse_scenario(R"({
      "name": "short", "duration_s": 0.2, "load": { "p_load_w": 2200 },
      "metrics": [ { "name": "v_rms", "min": 200, "max": 260 },
                   { "name": "v_thd", "max": 1e-6, "note": "deliberately impossible" },
                   { "name": "energy_residual", "max": 1e-3 } ]
    })");
    const RunResult a = run_scenario(s);
    const RunResult b = run_scenario(s);

    CHECK(a.report.samples == 200001);
    CHECK(a.report.digest == scenario_digest(s));
    CHECK_FALSE(a.report.tripped);
    REQUIRE(a.report.metrics.size() == 3);
    CHECK(a.report.metrics[0].pass);
    CHECK_FALSE(a.report.metrics[1].pass);
    CHECK(a.report.metrics[2].pass);
    CHECK_FALSE(a.report.passed());
    CHECK(a.report.failures() == std::vector<std::string>{"v_thd"});
    CHECK_FALSE(a.report.assumptions.empty());
    CHECK(a.report.metrics[0].from == Approx(0.18));
    CHECK(a.report.metrics[0].to == Approx(0.2));

    std::ostringstream ca, cb;
    emit_csv(a.record, s.circuit, ca);
    emit_csv(b.record, s.circuit, cb);
    CHECK(count_lines(ca.str()) == a.record.size() + 1);
    CHECK(ca.str() == cb.str());

    std::ostringstream ja, jb, text;
    emit_report(a.report, ReportFormat::Json, ja);
    emit_report(b.report, ReportFormat::Json, jb);
    emit_report(a.report, ReportFormat::Text, text);
    CHECK(ja.str() == jb.str());
    for (const char* key : {"\"scenario\"", "\"digest\"", "\"metrics\"", "\"assumptions\"", "\"passed\""}) {
        CHECK_THAT(ja.str(), ContainsSubstring(key));
    }
    CHECK_THAT(text.str(), ContainsSubstring("FAIL"));
    CHECK_THAT(text.str(), ContainsSubstring("deliberately impossible"));

    CHECK(evaluate_metric("v_rms", a.record, s, 0.18, 0.2) == Approx(*a.report.metrics[0].value));
    CHECK_THROWS_AS(evaluate_metric("flux", a.record, s, 0.18, 0.2), std::invalid_argument);
}

TEST_CASE("batch runs keep their input order", "[scenario]") {
    Scenario a = parse_scenario(kMinimal);
    Scenario b = a;
    b.name = "tiny_b";
    b.duration = 0.21;
    const auto out = run_batch({a, b}, 2);
    REQUIRE(out.size() == 2);
    CHECK(out[0].report.scenario == "tiny");
    CHECK(out[1].report.scenario == "tiny_b");
    CHECK(out[1].report.samples == 210001);
}
