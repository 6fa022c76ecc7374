#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "autoscale/baselines.hpp"
#include "autoscale/cluster_ga.hpp"
#include "autoscale/config.hpp"
#include "autoscale/engine.hpp"
#include "autoscale/harness.hpp"
#include "autoscale/metrics.hpp"
#include "autoscale/retrieval.hpp"

namespace py = pybind11;
using namespace autoscale;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

SubscoreVector subscores(const py::dict& d) {
    SubscoreVector s;
    std::map<std::string, double*> slots{{"nc", &s.nc}, {"dac", &s.dac}, {"ddc", &s.ddc}, {"tlc", &s.tlc}, {"ep", &s.ep},
                                         {"ttc", &s.ttc}, {"lk", &s.lk},  {"hc", &s.hc},   {"ec", &s.ec},   {"comf", &s.comf}};
    for (const auto& [k, v] : d) {
        const auto key = py::cast<std::string>(k);
        auto it = slots.find(key);
        if (it == slots.end()) throw std::invalid_argument("unknown subscore '" + key + "'");
        *it->second = py::cast<double>(v);
    }
    return s;
}

struct HarnessSetup {
    std::shared_ptr<sim::World> world;
    Workspace ws;
};

HarnessSetup setup(const EngineConfig& cfg, const std::optional<sim::WorldSpec>& spec) {
    HarnessSetup h;
    h.world = std::make_shared<sim::World>(sim::generate_world(spec ? *spec : sim::default_world_spec(cfg.seed)));
    h.ws = prepare(h.world->real, h.world->pool, h.world->cal, cfg);
    return h;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "AutoScale data engine core";
    m.attr("__version__") = "0.1.0";

    py::class_<EngineConfig>(m, "EngineConfig")
        .def(py::init<>())
        .def_readwrite("budget", &EngineConfig::budget)
        .def_readwrite("rounds", &EngineConfig::rounds)
        .def_readwrite("clusters", &EngineConfig::clusters)
        .def_readwrite("sigma", &EngineConfig::sigma)
        .def_readwrite("lambda_reg", &EngineConfig::lambda_reg)
        .def_readwrite("eps_max", &EngineConfig::eps_max)
        .def_readwrite("seed", &EngineConfig::seed)
        .def_property(
            "method", [](const EngineConfig& c) { return std::string(to_string(c.method)); },
            [](EngineConfig& c, const std::string& s) { c.method = method_from_string(s); })
        .def("validate", &EngineConfig::validate)
        .def("to_dict", [](const EngineConfig& c) { return to_python(c.to_json()); })
        .def("__repr__", [](const EngineConfig& c) { return "EngineConfig(" + c.to_json().dump() + ")"; });

    py::class_<sim::WorldSpec>(m, "WorldSpec")
        .def(py::init([](std::uint64_t seed) { return sim::default_world_spec(seed); }), py::arg("seed") = 0)
        .def_readwrite("n_real", &sim::WorldSpec::n_real)
        .def_readwrite("n_pool", &sim::WorldSpec::n_pool)
        .def_readwrite("n_cal", &sim::WorldSpec::n_cal)
        .def_readwrite("real_share", &sim::WorldSpec::real_share)
        .def_readwrite("a", &sim::WorldSpec::a)
        .def_readwrite("b", &sim::WorldSpec::b)
        .def_readwrite("m0", &sim::WorldSpec::m0)
        .def_readwrite("g", &sim::WorldSpec::g)
        .def_readwrite("transfer", &sim::WorldSpec::transfer)
        .def_readwrite("noise_sigma", &sim::WorldSpec::noise_sigma)
        .def_readwrite("draws", &sim::WorldSpec::draws)
        .def_readwrite("seed", &sim::WorldSpec::seed)
        .def("validate", &sim::WorldSpec::validate)
        .def_static("load", &sim::read_world_spec, py::arg("path"));

    py::class_<RoundRecord>(m, "RoundRecord")
        .def_readonly("round", &RoundRecord::round)
        .def_readonly("method", &RoundRecord::method)
        .def_readonly("mixture", &RoundRecord::mixture)
        .def_readonly("cluster_scores", &RoundRecord::cluster_scores)
        .def_readonly("missing", &RoundRecord::missing)
        .def_readonly("overall", &RoundRecord::overall)
        .def_readonly("selected", &RoundRecord::selected)
        .def_readonly("realized_counts", &RoundRecord::realized_counts)
        .def_readonly("gains", &RoundRecord::gains)
        .def_readonly("target_mixture", &RoundRecord::target_mixture)
        .def_readonly("delta", &RoundRecord::delta)
        .def_readonly("eps", &RoundRecord::eps)
        .def_readonly("warm_start", &RoundRecord::warm_start)
        .def_readonly("timing", &RoundRecord::timing)
        .def("to_dict", [](const RoundRecord& r) { return to_python(to_json(r)); })
        .def("__repr__", [](const RoundRecord& r) {
            return "RoundRecord(round=" + std::to_string(r.round) + ", overall=" + std::to_string(r.overall) + ")";
        });

    m.def(
        "run_harness",
        [](const EngineConfig& cfg, std::optional<sim::WorldSpec> world, std::optional<std::filesystem::path> log) {
            py::gil_scoped_release release;
            HarnessSetup h = setup(cfg, world);
            sim::GroundTruthOracle oracle(h.world);
            RunOutputs out;
            out.log = log;
            return run(h.ws, oracle, cfg, out);
        },
        py::arg("config"), py::arg("world") = py::none(), py::arg("log") = py::none(),
        "Runs the engine against the harness oracle; returns one record per round.");

    m.def(
        "swap_harness",
        [](const EngineConfig& cfg, std::optional<sim::WorldSpec> world) {
            py::gil_scoped_release release;
            HarnessSetup h = setup(cfg, world);
            auto [sa, sb] = sim::oracle_pair_specs(h.world->spec);
            sim::GroundTruthOracle a(h.world, sa), b(h.world, sb);
            SwapResult r = swap_experiment(h.ws, a, b, cfg);
            return std::make_pair(r.jaccard, Eigen::MatrixXd(r.table));
        },
        py::arg("config"), py::arg("world") = py::none(),
        "Swap experiment over an oracle pair with disjoint weak archetypes: (jaccard, 2x2 table).");

    m.def("read_round_log", &read_round_log, py::arg("path"));
    m.def(
        "load_run_config",
        [](const std::filesystem::path& p) {
            RunConfig c = read_run_config(p);
            py::dict paths;
            paths["real"] = c.paths.real;
            paths["syn"] = c.paths.syn;
            paths["cal"] = c.paths.cal;
            paths["out"] = c.paths.out;
            paths["world"] = c.paths.world;
            return py::make_tuple(c.engine, paths);
        },
        py::arg("path"));

    m.def("pdms", [](const py::dict& d) { return pdms(subscores(d)); }, py::arg("subscores"));
    m.def("epdms", [](const py::dict& d) { return epdms(subscores(d)); }, py::arg("subscores"));
    m.def(
        "jaccard", [](const std::vector<std::string>& a, const std::vector<std::string>& b) { return jaccard(a, b).value; },
        py::arg("a"), py::arg("b"));
    m.def("r_squared", &r_squared, py::arg("predicted"), py::arg("actual"));
    m.def("synthetic_ratio", &synthetic_ratio, py::arg("w"), py::arg("n0"), py::arg("n_total"));
    m.def("half_cosine_schedule", &half_cosine_schedule, py::arg("t"), py::arg("rounds"), py::arg("eps_max"));
    m.def(
        "eg_update",
        [](const Eigen::VectorXd& w, const Eigen::VectorXd& g, double eps) {
            EgResult r = eg_update(w, g, eps);
            return py::make_tuple(r.w, r.eta, r.reached);
        },
        py::arg("w_prev"), py::arg("gradient"), py::arg("eps"));
    m.def("leverage_scores", &leverage_scores, py::arg("centroids"), py::arg("lambda_c"));
    m.def("scott_bandwidth", &scott_bandwidth, py::arg("n_samples"), py::arg("dims"));
    m.def("priority", &priority_value, py::arg("alpha"), py::arg("score"), py::arg("cosine"));
}
