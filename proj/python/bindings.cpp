#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "msae/direct.hpp"
#include "msae/error.hpp"
#include "msae/evaluation.hpp"
#include "msae/gmrf.hpp"
#include "msae/io.hpp"
#include "msae/mcmc.hpp"
#include "msae/models.hpp"
#include "msae/simulation.hpp"
#include "msae/survey.hpp"

namespace py = pybind11;
using namespace msae;

namespace {

ModelSpec spec_from(const std::string& text) { return model_spec_from_json(nlohmann::json::parse(text)); }

FitConfig make_config(int chains, int warmup, int draws, std::uint64_t seed, unsigned threads,
                      const std::map<std::string, double>& fixed) {
  FitConfig fc;
  fc.chains = chains;
  fc.warmup = warmup;
  fc.draws = draws;
  fc.seed = seed;
  fc.threads = threads;
  fc.fixed = fixed;
  return fc;
}

LonelyPsuPolicy policy(const std::string& name) {
  const auto p = parse_lonely_psu_policy(name);
  if (!p) throw ValidationError("lonely_psu must be 'error' or 'centered'");
  return *p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multivariate shared-component small area estimation";

  // Translators run most recent first, so the base class goes in first.
  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  auto validation = py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<LonelyPsuError>(m, "LonelyPsuError", validation.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  py::class_<AdjacencyGraph>(m, "Graph")
      .def(py::init<int, const std::vector<std::pair<int, int>>&>(), py::arg("n"), py::arg("edges"))
      .def_static("lattice", &AdjacencyGraph::lattice, py::arg("rows"), py::arg("cols"))
      .def_static("lattice47", &AdjacencyGraph::lattice47)
      .def_static("path", &AdjacencyGraph::path, py::arg("n"))
      .def_static("load", &load_adjacency, py::arg("path"))
      .def("save", [](const AdjacencyGraph& g, const std::filesystem::path& p) { write_adjacency_json(g, p); })
      .def_property_readonly("size", &AdjacencyGraph::size)
      .def_property_readonly("edges", &AdjacencyGraph::edges)
      .def_property_readonly("labels", &AdjacencyGraph::labels)
      .def_property_readonly("component_count", &AdjacencyGraph::component_count);

  py::class_<SurveyDataset>(m, "Survey")
      .def_static("load", py::overload_cast<const std::filesystem::path&, int, const AdjacencyGraph&>(&load_survey_csv),
                  py::arg("path"), py::arg("n_outcomes"), py::arg("graph"))
      .def("save", [](const SurveyDataset& d, const std::filesystem::path& p) { write_survey_csv(d, p); })
      .def_property_readonly("n_records", [](const SurveyDataset& d) { return d.records().size(); })
      .def_property_readonly("n_outcomes", &SurveyDataset::n_outcomes)
      .def_property_readonly("region_count", &SurveyDataset::region_count)
      .def_property_readonly("n_clusters", [](const SurveyDataset& d) { return d.cluster_index().size(); });

  py::class_<DirectEstimateSet>(m, "DirectEstimates")
      .def(py::init([](const Eigen::MatrixXd& y, const std::vector<Eigen::MatrixXd>& V) {
             if (static_cast<Eigen::Index>(V.size()) != y.rows())
               throw ValidationError("need one covariance matrix per region");
             auto est = DirectEstimateSet::empty(static_cast<int>(y.rows()), static_cast<int>(y.cols()));
             est.y_hat = y;
             est.V_hat = V;
             est.available = y.array().isFinite();
             return est;
           }),
           py::arg("y_hat"), py::arg("V_hat"))
      .def_readonly("y_hat", &DirectEstimateSet::y_hat)
      .def_readonly("V_hat", &DirectEstimateSet::V_hat)
      .def_property_readonly("available",
                             [](const DirectEstimateSet& e) { return Eigen::MatrixXi(e.available.cast<int>()); })
      .def_readonly("notes", &DirectEstimateSet::notes)
      .def("without_region", &DirectEstimateSet::without_region, py::arg("region"));

  m.def(
      "direct_estimates", [](const SurveyDataset& d, const std::string& lonely) { return direct_estimates(d, policy(lonely)); },
      py::arg("survey"), py::arg("lonely_psu") = "error");

  m.def(
      "icar_marginal_variances", [](const AdjacencyGraph& g) { return scaled_icar(g).marginal_variances(); },
      py::arg("graph"), "Marginal variances of the scaled, sum-to-zero constrained ICAR field");

  py::class_<ModelFit>(m, "Fit")
      .def_readonly("columns", &ModelFit::columns)
      .def_readonly("draws", &ModelFit::draws)
      .def_readonly("chain_count", &ModelFit::chain_count)
      .def_readonly("draws_per_chain", &ModelFit::draws_per_chain)
      .def_readonly("notes", &ModelFit::notes)
      .def("column", &ModelFit::column, py::arg("name"))
      .def("mu_draws", &ModelFit::mu_draws, py::arg("region"))
      .def_property_readonly("healthy", [](const ModelFit& f) { return f.diagnostics.healthy; })
      .def_property_readonly("max_rhat", [](const ModelFit& f) { return f.diagnostics.max_rhat; })
      .def("diagnostics", [](const ModelFit& f) { return diagnostics_json(f).dump(); })
      .def("save_samples", [](const ModelFit& f, const std::filesystem::path& p) { write_samples_csv(f, p); });

  m.def(
      "_fit_area",
      [](const std::string& spec, const DirectEstimateSet& est, const AdjacencyGraph& g, int chains, int warmup,
         int draws, std::uint64_t seed, unsigned threads, const std::map<std::string, double>& fixed, bool augmented) {
        const auto s = spec_from(spec);
        const auto* a = std::get_if<AreaModelSpec>(&s);
        if (!a) throw ValidationError("fit_area needs an area-level model spec");
        auto fc = make_config(chains, warmup, draws, seed, threads, fixed);
        fc.augmented_likelihood = augmented;
        py::gil_scoped_release release;
        return fit_area(*a, est, g, fc);
      },
      py::arg("spec"), py::arg("estimates"), py::arg("graph"), py::arg("chains"), py::arg("warmup"), py::arg("draws"),
      py::arg("seed"), py::arg("threads"), py::arg("fixed"), py::arg("augmented"));

  m.def(
      "_fit_unit",
      [](const std::string& spec, const SurveyDataset& d, const AdjacencyGraph& g, const std::vector<double>& q,
         int chains, int warmup, int draws, std::uint64_t seed, unsigned threads,
         const std::map<std::string, double>& fixed) {
        const auto s = spec_from(spec);
        const auto* u = std::get_if<UnitModelSpec>(&s);
        if (!u) throw ValidationError("fit_unit needs a unit-level model spec");
        const auto fc = make_config(chains, warmup, draws, seed, threads, fixed);
        py::gil_scoped_release release;
        return fit_unit(*u, d, g, RuralFractions{q}, fc);
      },
      py::arg("spec"), py::arg("survey"), py::arg("graph"), py::arg("q"), py::arg("chains"), py::arg("warmup"),
      py::arg("draws"), py::arg("seed"), py::arg("threads"), py::arg("fixed"));

  m.def(
      "_loo_area",
      [](const std::string& spec, const DirectEstimateSet& est, const AdjacencyGraph& g, int chains, int warmup,
         int draws, std::uint64_t seed, unsigned threads, int samples, int refit_warmup) {
        const auto s = spec_from(spec);
        const auto* a = std::get_if<AreaModelSpec>(&s);
        if (!a) throw ValidationError("loo_area needs an area-level model spec");
        LooConfig cfg;
        cfg.fit = make_config(chains, warmup, draws, seed, 1, {});
        cfg.threads = threads;
        cfg.samples = samples;
        cfg.refit_warmup = refit_warmup;
        LogScoreReport rep;
        {
          py::gil_scoped_release release;
          rep = loo_logscore_area(*a, est, g, cfg);
        }
        py::dict out;
        out["model"] = rep.model_id;
        out["log_lhat"] = rep.log_lhat;
        out["logscore_sum"] = rep.logscore_sum;
        out["logscore_mean"] = rep.logscore_mean;
        out["scored"] = rep.scored;
        out["notes"] = rep.region_notes;
        return out;
      },
      py::arg("spec"), py::arg("estimates"), py::arg("graph"), py::arg("chains"), py::arg("warmup"), py::arg("draws"),
      py::arg("seed"), py::arg("threads"), py::arg("samples"), py::arg("refit_warmup"));

  m.def(
      "simulate_area",
      [](int scenario, const AdjacencyGraph& g, std::uint64_t seed, int replicate) {
        ScenarioConfig sc;
        sc.scenario_id = scenario;
        sc.graph = g;
        sc.seed = seed;
        auto rep = generate_area_scenario(sc, replicate);
        return py::make_tuple(rep.truth, rep.estimates);
      },
      py::arg("scenario"), py::arg("graph"), py::arg("seed") = 1, py::arg("replicate") = 0,
      "True means and simulated Stage-1 estimates of one replicate");

  m.def(
      "simulate_unit",
      [](int scenario, const AdjacencyGraph& g, std::uint64_t seed, int replicate) {
        ScenarioConfig sc;
        sc.level = Level::Unit;
        sc.scenario_id = scenario;
        sc.graph = g;
        sc.seed = seed;
        const UnitScenario scen(sc);
        auto rep = scen.replicate(replicate);
        return py::make_tuple(rep.truth, rep.data, scen.q().q);
      },
      py::arg("scenario"), py::arg("graph"), py::arg("seed") = 1, py::arg("replicate") = 0,
      "True means, simulated survey and rural fractions of one replicate");

  m.attr("__version__") = tool_version();
}
