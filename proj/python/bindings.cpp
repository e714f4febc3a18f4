#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>

#include "probmatch/analysis.hpp"
#include "probmatch/distance.hpp"
#include "probmatch/error.hpp"
#include "probmatch/experiment.hpp"
#include "probmatch/io.hpp"
#include "probmatch/methods.hpp"
#include "probmatch/stats.hpp"
#include "probmatch/stochastic.hpp"

namespace py = pybind11;
using namespace probmatch;

namespace {

// Plain Python containers cross the boundary as JSON text.
nlohmann::json to_cpp(const py::handle& obj) {
  const auto dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

StudyDataset dataset_arg(const py::object& data) {
  if (py::isinstance<py::str>(data)) return load_dataset_file(data.cast<std::string>());
  return dataset_from_json(to_cpp(data));
}

py::dict match(const py::object& data, const py::object& config) {
  const MatchConfig cfg = config.is_none() ? MatchConfig{} : match_config_from_json(to_cpp(config));
  const auto ds = dataset_arg(data);
  EvolveResult found;
  {
    py::gil_scoped_release release;
    found = run_method(cfg.method, ds, cfg.method_config);
  }
  if (found.match.pairs.empty()) fail(ErrorCode::no_pairs, "no admissible pairs");
  py::list pairs;
  for (const auto& p : found.match.pairs) pairs.append(py::make_tuple(p.treated, p.control));
  const bool truth = cfg.eval_truth && ds.truth().has_value();
  py::dict out;
  out["method"] = std::string(to_string(cfg.method));
  out["pairs"] = pairs;
  out["weights"] = std::vector<double>(found.weights.diag().begin(), found.weights.diag().end());
  out["loss"] = found.loss;
  out["balance"] = to_py(to_json(balance_report(found.match, ds, truth)));
  return out;
}

py::dict validate(const py::object& data) {
  const auto ds = dataset_arg(data);
  const auto& obs = ds.observed();
  py::dict out;
  out["n_units"] = obs.n_units();
  out["n_confounders"] = obs.n_confounders();
  out["confounders"] = obs.confounder_names();
  out["regime"] = detect_regime(obs) == MatchRegime::binary_bipartite ? "binary_bipartite" : "continuous_nonbipartite";
  out["point_mass"] = obs.all_point_mass();
  out["has_outcome"] = ds.outcome().has_value();
  out["has_truth"] = ds.truth().has_value();
  return out;
}

py::list experiment(const py::object& config, std::size_t threads) {
  const auto cfg = experiment_config_from_json(to_cpp(config));
  cfg.validate();
  ExperimentResult result;
  {
    py::gil_scoped_release release;
    result = run_experiment(cfg, threads);
  }
  py::list rows;
  for (const auto& r : summarize(cfg, result)) {
    py::dict row;
    row["noise_level"] = r.noise_level;
    row["method"] = std::string(to_string(r.method));
    row["metric"] = r.metric;
    row["mean"] = r.mean;
    row["ci_low"] = r.ci_low;
    row["ci_high"] = r.ci_high;
    row["n"] = r.n;
    rows.append(row);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Genetic matching with probabilistic treatments and confounders.";

  static py::exception<Error> base(m, "ProbmatchError");
  static py::exception<Error> schema(m, "SchemaError", base.ptr());
  static py::exception<Error> no_pairs(m, "NoPairsError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::schema) schema(e.what());
      else if (e.code() == ErrorCode::no_pairs) no_pairs(e.what());
      else base(e.what());
    }
  });

  py::class_<StochasticScalar>(m, "StochasticScalar")
      .def_static("point", &StochasticScalar::point, py::arg("value"))
      .def_static("discrete", &StochasticScalar::discrete, py::arg("support"), py::arg("probs"))
      .def_static("bernoulli", &StochasticScalar::bernoulli, py::arg("p"))
      .def_static("empirical", &StochasticScalar::empirical, py::arg("samples"))
      .def_property_readonly("kind",
                             [](const StochasticScalar& s) {
                               switch (s.kind()) {
                                 case StochasticScalar::Kind::point_mass:
                                   return "point";
                                 case StochasticScalar::Kind::discrete:
                                   return "discrete";
                                 default:
                                   return "empirical";
                               }
                             })
      .def_property_readonly("values",
                             [](const StochasticScalar& s) { return std::vector<double>(s.values().begin(), s.values().end()); })
      .def_property_readonly("weights",
                             [](const StochasticScalar& s) {
                               std::vector<double> w;
                               for (std::size_t i = 0; i < s.size(); ++i) w.push_back(s.weight(i));
                               return w;
                             })
      .def("mean", [](const StochasticScalar& s) { return mean(s); })
      .def("variance", [](const StochasticScalar& s) { return variance(s); })
      .def("quantiles", [](const StochasticScalar& s, int k) { return quantiles(s, k).values; },
           py::arg("k") = kDefaultQuantileCount)
      .def("prob_less_than", [](const StochasticScalar& s, double t) { return prob_less_than(s, t); })
      .def("__eq__", [](const StochasticScalar& a, const StochasticScalar& b) { return a == b; })
      .def("__repr__", [](const StochasticScalar& s) { return "StochasticScalar(" + cell_to_json(s).dump() + ")"; })
      .def("to_json", [](const StochasticScalar& s) { return to_py(cell_to_json(s)); });

  m.def(
      "quantile_distance",
      [](const StochasticScalar& a, const StochasticScalar& b, int k) {
        return rv_distance(quantiles(a, k), quantiles(b, k));
      },
      py::arg("a"), py::arg("b"), py::arg("k") = kDefaultQuantileCount);

  m.def("match", &match, py::arg("data"), py::arg("config") = py::none(),
        "Match a dataset given as a JSON-shaped dict or a CSV/JSON path.");
  m.def("validate", &validate, py::arg("data"));
  m.def("run_experiment", &experiment, py::arg("config"), py::arg("threads") = 1,
        "Run an experiment suite and return its summary rows.");

  m.def(
      "wilcoxon_signed_rank",
      [](const std::vector<double>& x, double mu0) {
        const auto r = stats::wilcoxon_signed_rank(x, mu0);
        return py::make_tuple(r.statistic, r.p_value);
      },
      py::arg("samples"), py::arg("mu0") = 0.0);
  m.def(
      "ks_two_sample",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto r = stats::ks_two_sample(a, b);
        return py::make_tuple(r.statistic, r.p_value);
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "smd", [](const std::vector<double>& t, const std::vector<double>& c) { return smd(t, c); },
      py::arg("treated"), py::arg("control"));
}
