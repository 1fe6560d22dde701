#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "madmix/experiment.hpp"
#include "madmix/mixflow.hpp"
#include "madmix/models/ising.hpp"
#include "madmix/models/toy.hpp"

namespace py = pybind11;
using namespace madmix;

namespace {

std::vector<double> to_vector(const DiscretePMF& p) { return {p.probs().begin(), p.probs().end()}; }

py::tuple flow_result(const FlowResult& r) {
  return py::make_tuple(r.state.x, r.state.u, r.log_jacobian);
}

std::string run_json(const std::string& config, bool full) {
  const ExperimentConfig cfg = config_from_json(nlohmann::json::parse(config)).resolved();
  nlohmann::json out;
  const ExperimentOutput res = run_experiment_full(cfg);
  out["records"] = nlohmann::json::array();
  for (const auto& r : res.records) out["records"].push_back(to_json(r));
  if (full && res.pmf) {
    out["pmf"] = {{"exact", res.pmf->exact}, {"approx", res.pmf->approx}, {"shape", res.pmf->shape}};
  }
  if (full && !res.samples_csv.empty()) out["samples_csv"] = res.samples_csv;
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "MAD Mix flows on discrete and mixed targets";

  static py::exception<MadmixError> madmix_error(m, "MadmixError", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", madmix_error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(config_error.ptr(), e.what());
    } catch (const MadmixError& e) {
      PyErr_SetString(madmix_error.ptr(), e.what());
    }
  });

  py::class_<DiscretePMF>(m, "DiscretePMF")
      .def(py::init<std::vector<double>>(), py::arg("probs"))
      .def_static("from_weights", [](const std::vector<double>& w) { return DiscretePMF::from_weights(w); })
      .def("__len__", &DiscretePMF::size)
      .def("prob", &DiscretePMF::prob)
      .def("cdf", &DiscretePMF::cdf)
      .def("quantile", &DiscretePMF::quantile)
      .def_property_readonly("probs", &to_vector);

  py::class_<FullConditionalTarget, std::shared_ptr<FullConditionalTarget>>(m, "Target")
      .def_property_readonly("dimension", &FullConditionalTarget::dimension)
      .def("support_size", &FullConditionalTarget::support_size)
      .def("conditional", [](const FullConditionalTarget& t, std::size_t i, const std::vector<int>& x) {
        return t.conditional(i, x);
      })
      .def("log_mass", [](const FullConditionalTarget& t, const std::vector<int>& x) {
        return t.unnormalized_log_mass(x);
      });

  py::class_<IsingChain, FullConditionalTarget, std::shared_ptr<IsingChain>>(m, "IsingChain")
      .def(py::init<std::size_t, double>(), py::arg("particles"), py::arg("beta"))
      .def_property_readonly("beta", &IsingChain::beta);

  py::class_<ToyTarget, FullConditionalTarget, std::shared_ptr<ToyTarget>>(m, "ToyTarget")
      .def(py::init<std::vector<std::size_t>, std::vector<double>>(), py::arg("shape"), py::arg("table"))
      .def_static("random", &ToyTarget::random, py::arg("shape"), py::arg("seed"), py::arg("floor") = 1e-6)
      .def_property_readonly("joint", [](const ToyTarget& t) { return to_vector(t.joint()); });

  m.def("ising_exact_pmf", [](std::size_t n, double beta) { return to_vector(ising_exact_pmf(n, beta)); },
        py::arg("particles"), py::arg("beta"));
  m.def("ising_log_partition", &ising_log_partition, py::arg("particles"), py::arg("beta"));

  m.def(
      "mad_forward",
      [](const FullConditionalTarget& t, std::vector<int> x, std::vector<double> u, double xi) {
        return flow_result(mad_forward({std::move(x), std::move(u)}, t, ShiftParam(xi)));
      },
      py::arg("target"), py::arg("x"), py::arg("u"), py::arg("xi") = ShiftParam().xi);
  m.def(
      "mad_inverse",
      [](const FullConditionalTarget& t, std::vector<int> x, std::vector<double> u, double xi) {
        return flow_result(mad_inverse({std::move(x), std::move(u)}, t, ShiftParam(xi)));
      },
      py::arg("target"), py::arg("x"), py::arg("u"), py::arg("xi") = ShiftParam().xi);

  py::class_<MadMixFlow>(m, "MadMixFlow")
      .def(py::init([](std::shared_ptr<FullConditionalTarget> t, std::size_t n, double xi) {
             auto ref = ProductReference::uniform(*t);
             return MadMixFlow(std::move(t), ref, n, ShiftParam(xi));
           }),
           py::arg("target"), py::arg("n_flow"), py::arg("xi") = ShiftParam().xi)
      .def_property_readonly("flow_length", &MadMixFlow::flow_length)
      .def("log_density",
           [](const MadMixFlow& f, std::vector<int> x, std::vector<double> u) {
             return f.log_density({std::move(x), std::move(u)});
           })
      .def("sample", [](const MadMixFlow& f, std::uint64_t seed) {
        const AugmentedState s = f.sample(seed);
        return py::make_tuple(s.x, s.u);
      })
      .def("elbo", [](const MadMixFlow& f, std::size_t n, std::uint64_t seed) {
        const Estimate e = elbo(f, n, seed);
        return py::make_tuple(e.value, e.std_error);
      })
      .def(
          "marginal_pmf",
          [](const MadMixFlow& f, std::size_t n_u, std::uint64_t seed) {
            return to_vector(exact_marginal_pmf(f, n_u, seed).pmf);
          },
          py::arg("n_u") = 32, py::arg("seed") = 0);

  m.def("_run_json", &run_json, py::arg("config"), py::arg("full") = false);
}
