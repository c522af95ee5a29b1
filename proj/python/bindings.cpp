#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rdmpc/adapt.hpp"
#include "rdmpc/errors.hpp"
#include "rdmpc/harness.hpp"
#include "rdmpc/microgrid.hpp"

namespace py = pybind11;
using namespace rdmpc;

PYBIND11_MODULE(_rdmpc, m) {
    m.doc() = "Resilient distributed MPC for coupled microgrids";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<SocOutOfRange>(m, "SocOutOfRange", base.ptr());
    py::register_exception<InfeasibleChargePower>(m, "InfeasibleChargePower", base.ptr());
    py::register_exception<TopologyViolation>(m, "TopologyViolation", base.ptr());

    py::class_<GridSpec>(m, "GridSpec")
        .def(py::init<>())
        .def_readwrite("id", &GridSpec::id)
        .def_readwrite("q_st_kah", &GridSpec::q_st_kah)
        .def_readwrite("r_st_mohm", &GridSpec::r_st_mohm)
        .def_readwrite("c_g", &GridSpec::c_g)
        .def_readwrite("soc0", &GridSpec::soc0)
        .def_readwrite("neighbors", &GridSpec::neighbors);

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_static("paper_default", &ExperimentConfig::paper_default)
        .def_static("from_json", &ExperimentConfig::from_json)
        .def_static("load", &ExperimentConfig::load)
        .def("to_json", &ExperimentConfig::to_json)
        .def("steps", &ExperimentConfig::steps)
        .def("validate", &ExperimentConfig::validate)
        .def_readwrite("duration_h", &ExperimentConfig::duration_h)
        .def_readwrite("dt_h", &ExperimentConfig::dt_h)
        .def_readwrite("horizon_h", &ExperimentConfig::horizon_h)
        .def_readwrite("robust_horizon", &ExperimentConfig::robust_horizon)
        .def_readwrite("controller", &ExperimentConfig::controller)
        .def_readwrite("adi_version", &ExperimentConfig::adi_version)
        .def_readwrite("tau_d_kw", &ExperimentConfig::tau_d_kw)
        .def_readwrite("eps_i", &ExperimentConfig::eps_i)
        .def_readwrite("seed", &ExperimentConfig::seed)
        .def_readwrite("grids", &ExperimentConfig::grids);

    py::class_<SummaryRow>(m, "SummaryRow")
        .def_readonly("grid", &SummaryRow::grid)
        .def_readonly("total_cost", &SummaryRow::total_cost)
        .def_readonly("violations", &SummaryRow::violations)
        .def_readonly("detections", &SummaryRow::detections)
        .def_readonly("final_mu_g", &SummaryRow::final_mu_g)
        .def_readonly("final_sigma_g", &SummaryRow::final_sigma_g);

    py::class_<GridTrace>(m, "GridTrace")
        .def_readonly("id", &GridTrace::id)
        .def_readonly("neighbors", &GridTrace::neighbors)
        .def_readonly("terminal_cost", &GridTrace::terminal_cost)
        .def("csv", [](const GridTrace& t) { return trace_csv(t); })
        .def_property_readonly("soc", [](const GridTrace& t) {
            std::vector<double> s;
            for (const auto& r : t.records) s.push_back(r.x[mg::soc]);
            return s;
        });

    py::class_<ExperimentResult>(m, "ExperimentResult")
        .def_readonly("traces", &ExperimentResult::traces)
        .def_readonly("summary", &ExperimentResult::summary)
        .def_readonly("fallbacks", &ExperimentResult::fallbacks)
        .def("write", [](const ExperimentResult& r, const std::string& dir) { write_outputs(r, dir); });

    m.def("run_experiment", &run_experiment, py::arg("config"), py::arg("verbose") = false,
          py::call_guard<py::gil_scoped_release>());
    m.def("summary_csv", &summary_csv);
    m.def("read_summary", &read_summary);

    m.def("ocv", [](double s) { return ocv(s, OcvParams{}); });
    m.def("battery_current", py::overload_cast<double, double, double>(&battery_current),
          py::arg("u_ocv"), py::arg("p_st"), py::arg("r"));
    m.def("price_at", &price_at);
    m.def("attack_scenarios",
          py::overload_cast<const Vec&, const Vec&, double>(&attack_scenarios), py::arg("mu"),
          py::arg("sigma"), py::arg("dedup_tol") = 1e-9);
}
