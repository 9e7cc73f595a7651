// Python bindings: scenario runs, presets, sizing and harmonic analysis.

#include "scinv/acceptance.hpp"
#include "scinv/analysis.hpp"
#include "scinv/scenario.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::string report_json(const scinv::Report& r) {
    std::ostringstream os;
    scinv::emit_report(r, scinv::ReportFormat::Json, os);
    return os.str();
}

/// Runs a preset or scenario file. Returns (report JSON, waveform channels).
py::tuple run(const std::string& scenario, std::optional<double> dt_sim) {
    scinv::Scenario s = scinv::resolve_scenario(scenario);
    if (dt_sim) s.sim.dt_sim = *dt_sim;
    s.validate();
    scinv::RunResult r;
    {
        py::gil_scoped_release release;
        r = scinv::run_scenario(s);
    }
    const auto& rec = r.record;
    std::vector<double> t(rec.size());
    for (std::size_t n = 0; n < t.size(); ++n) t[n] = rec.time(n);
    py::dict w;
    w["time_s"] = to_array(t);
    w["vC1_V"] = to_array(rec.x[scinv::kVC1]);
    w["vC2_V"] = to_array(rec.x[scinv::kVC2]);
    w["vC3_V"] = to_array(rec.x[scinv::kVC3]);
    w["iL1_A"] = to_array(rec.x[scinv::kIL1]);
    w["iL2_A"] = to_array(rec.x[scinv::kIL2]);
    w["vCf_V"] = to_array(rec.x[scinv::kVCf]);
    w["v_raw_V"] = to_array(rec.v_raw);
    w["v_out_V"] = to_array(rec.v_out);
    w["i_out_A"] = to_array(rec.i_out);
    w["v_grid_V"] = to_array(rec.v_grid);
    w["state"] = py::array_t<std::uint8_t>(static_cast<py::ssize_t>(rec.config.size()), rec.config.data());
    return py::make_tuple(report_json(r.report), w);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Switched-capacitor five-level inverter simulator";
    m.attr("__version__") = scinv::kVersion;

    py::register_exception<scinv::ScenarioError>(m, "ScenarioError", PyExc_ValueError);
    py::register_exception<scinv::AnalysisError>(m, "AnalysisError", PyExc_ValueError);

    m.def("preset_names", &scinv::preset_names, "Names of the built-in scenarios");
    m.def("preset_source", &scinv::preset_source, py::arg("name"), "JSON document of a built-in scenario");
    m.def(
        "scenario_digest",
        [](const std::string& scenario) { return scinv::scenario_digest(scinv::resolve_scenario(scenario)); },
        py::arg("scenario"));
    m.def(
        "canonical_json", [](const std::string& text) { return scinv::canonical_json(scinv::parse_scenario(text)); },
        py::arg("text"), "Parses a scenario document and returns its resolved canonical form");
    m.def("metric_names", &scinv::metric_names);
    m.def("run", &run, py::arg("scenario"), py::arg("dt_sim") = py::none());

    m.def(
        "size_caps",
        [](double p, double vdc, double mi, double fsw, double dv) {
            const auto r = scinv::capacitor_sizing({p, vdc, mi, fsw, dv});
            py::dict d;
            d["capacitance_F"] = r.capacitance;
            d["i_out_A"] = r.i_out;
            d["delta_q_C"] = r.delta_q;
            return d;
        },
        py::arg("p_out"), py::arg("v_dc"), py::arg("m_index"), py::arg("f_sw"), py::arg("delta_v"));

    m.def(
        "thd",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> x, double fs, double f0, int n_max) {
            return scinv::thd(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), fs, f0, n_max);
        },
        py::arg("x"), py::arg("fs"), py::arg("f0"), py::arg("n_max") = 50);

    m.def(
        "verify",
        [](bool quick) {
            scinv::AcceptanceOptions opt;
            opt.step_size_study = !quick;
            std::vector<scinv::CriterionResult> results;
            {
                py::gil_scoped_release release;
                results = scinv::run_acceptance(opt);
            }
            py::list out;
            for (const auto& r : results) out.append(py::make_tuple(r.id, r.title, r.pass));
            return out;
        },
        py::arg("quick") = true, "Runs the acceptance suite; returns (id, title, passed) tuples");
}
