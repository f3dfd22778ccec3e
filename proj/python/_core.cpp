#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "eivlr/error.hpp"
#include "eivlr/io.hpp"
#include "eivlr/likelihood.hpp"
#include "eivlr/simulate.hpp"
#include "eivlr/skovgaard.hpp"

namespace py = pybind11;
using namespace eivlr;

namespace {

EllipticalFamily family_for(const std::string& name, double shape, int dim) {
  return EllipticalFamily::make(family_kind_from_string(name), shape, dim);
}

Dataset make_dataset(const Eigen::MatrixXd& z, int m, const std::vector<Eigen::MatrixXd>& sigma_e,
                     const std::vector<Eigen::MatrixXd>& sigma_ue,
                     const std::vector<Eigen::MatrixXd>& sigma_u) {
  Dataset data;
  data.m = m;
  data.p = static_cast<int>(z.cols()) - m;
  for (int i = 0; i < z.rows(); ++i) data.z.push_back(z.row(i).transpose());
  data.sigma_e = sigma_e;
  data.sigma_ue = sigma_ue;
  data.sigma_u = sigma_u;
  data.validate();
  return data;
}

Eigen::MatrixXd z_matrix(const Dataset& data) {
  Eigen::MatrixXd z(data.n(), data.m + data.p);
  for (int i = 0; i < data.n(); ++i) z.row(i) = data.z[i].transpose();
  return z;
}

HypothesisSpec hypothesis(const std::vector<int>& indices, const std::vector<double>& values) {
  HypothesisSpec hyp;
  hyp.psi_indices = indices;
  hyp.psi0 = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<long>(values.size()));
  return hyp;
}

py::object as_dict(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Elliptical errors-in-variables regression: LR tests with Skovgaard's adjustment";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<NotPositiveDefinite>(m, "NotPositiveDefinite", PyExc_ArithmeticError);
  py::register_exception<FitFailure>(m, "FitFailure", PyExc_RuntimeError);

  py::class_<EllipticalFamily>(m, "Family")
      .def(py::init(&family_for), py::arg("name"), py::arg("shape") = 0.0, py::arg("dim"))
      .def_property_readonly("name", [](const EllipticalFamily& f) { return to_string(f.kind()); })
      .def_property_readonly("shape", &EllipticalFamily::shape)
      .def_property_readonly("dim", &EllipticalFamily::dim)
      .def_property_readonly("c", &EllipticalFamily::c)
      .def("log_p0", &EllipticalFamily::log_p0)
      .def("W", &EllipticalFamily::W)
      .def("W_prime", &EllipticalFamily::W_prime)
      .def("__repr__", &EllipticalFamily::describe);

  py::class_<ParameterVector>(m, "Parameters")
      .def(py::init([](int mm, int p, const Eigen::VectorXd& theta) {
             return ParameterVector(ModelDims{mm, p}, theta);
           }),
           py::arg("m"), py::arg("p"), py::arg("theta"))
      .def_static("pack", &ParameterVector::pack, py::arg("beta"), py::arg("alpha"),
                  py::arg("mu_x"), py::arg("sigma_q"), py::arg("sigma_x"))
      .def_property_readonly("m", [](const ParameterVector& t) { return t.dims().m; })
      .def_property_readonly("p", [](const ParameterVector& t) { return t.dims().p; })
      .def_property_readonly("values",
                             [](const ParameterVector& t) -> Eigen::VectorXd { return t.values(); })
      .def_property_readonly("beta", &ParameterVector::beta)
      .def_property_readonly("alpha", &ParameterVector::alpha)
      .def_property_readonly("mu_x", &ParameterVector::mu_x)
      .def_property_readonly("sigma_q", &ParameterVector::sigma_q)
      .def_property_readonly("sigma_x", &ParameterVector::sigma_x);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("z"), py::arg("m"), py::arg("sigma_e"),
           py::arg("sigma_ue"), py::arg("sigma_u"))
      .def_readonly("m", &Dataset::m)
      .def_readonly("p", &Dataset::p)
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("z", &z_matrix)
      .def_readonly("sigma_e", &Dataset::sigma_e)
      .def_readonly("sigma_ue", &Dataset::sigma_ue)
      .def_readonly("sigma_u", &Dataset::sigma_u);

  m.def("load_dataset", &load_dataset, py::arg("path"), py::arg("m"), py::arg("p"));
  m.def("write_dataset", py::overload_cast<const std::filesystem::path&, const Dataset&>(&write_dataset),
        py::arg("path"), py::arg("data"));

  m.def("loglik", &loglik, py::arg("theta"), py::arg("data"), py::arg("family"));
  m.def("score", &score, py::arg("theta"), py::arg("data"), py::arg("family"));
  m.def("observed_info", &observed_info, py::arg("theta"), py::arg("data"), py::arg("family"));

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("theta", &FitResult::theta_hat)
      .def_readonly("loglik", &FitResult::loglik)
      .def_readonly("score_norm", &FitResult::score_norm)
      .def_readonly("observed_info", &FitResult::observed_info)
      .def_readonly("iterations", &FitResult::iterations)
      .def_readonly("converged", &FitResult::converged)
      .def("to_dict", [](const FitResult& f) { return as_dict(to_json(f)); });

  m.def(
      "fit",
      [](const Dataset& data, const EllipticalFamily& family,
         std::optional<ParameterVector> init) { return fit_mle(data, family, init); },
      py::arg("data"), py::arg("family"), py::arg("init") = py::none(),
      py::call_guard<py::gil_scoped_release>());

  py::class_<TestReport>(m, "TestReport")
      .def_readonly("lr", &TestReport::lr)
      .def_readonly("log_rho", &TestReport::log_rho)
      .def_readonly("lr_star", &TestReport::lr_star)
      .def_readonly("lr_dstar", &TestReport::lr_dstar)
      .def_readonly("q", &TestReport::q)
      .def_readonly("p_lr", &TestReport::p_lr)
      .def_readonly("p_lr_star", &TestReport::p_lr_star)
      .def_readonly("p_lr_dstar", &TestReport::p_lr_dstar)
      .def_readonly("fit_hat", &TestReport::fit_hat)
      .def_readonly("fit_tilde", &TestReport::fit_tilde)
      .def("to_dict", [](const TestReport& r) { return as_dict(to_json(r)); })
      .def("table", &render_table);

  m.def(
      "lr_test",
      [](const Dataset& data, const EllipticalFamily& family, const std::vector<int>& indices,
         const std::vector<double>& values) {
        return lr_test(data, family, hypothesis(indices, values));
      },
      py::arg("data"), py::arg("family"), py::arg("indices"), py::arg("values"),
      py::call_guard<py::gil_scoped_release>());

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_property(
          "family", [](const SimConfig& c) { return to_string(c.family); },
          [](SimConfig& c, const std::string& name) { c.family = family_kind_from_string(name); })
      .def_readwrite("shape", &SimConfig::shape)
      .def_readwrite("m", &SimConfig::m)
      .def_readwrite("p", &SimConfig::p)
      .def_readwrite("q", &SimConfig::q)
      .def_readwrite("n", &SimConfig::n)
      .def_readwrite("reps", &SimConfig::replications)
      .def_readwrite("seed", &SimConfig::seed)
      .def_readwrite("levels", &SimConfig::levels)
      .def_readwrite("power_grid", &SimConfig::power_grid)
      .def_readwrite("threads", &SimConfig::threads)
      .def_static("load", &load_config, py::arg("path"));

  py::class_<SimReport>(m, "SimReport")
      .def_readonly("replications", &SimReport::replications)
      .def_readonly("failures", &SimReport::failures)
      .def_readonly("unreliable", &SimReport::unreliable)
      .def(
          "rate",
          [](const SimReport& r, const std::string& stat, double level, double eta) {
            return r.rate(statistic_from_string(stat), level, eta).rate;
          },
          py::arg("statistic"), py::arg("level"), py::arg("eta") = 0.0)
      .def(
          "sorted",
          [](const SimReport& r, const std::string& stat) {
            return r.sorted(statistic_from_string(stat));
          },
          py::arg("statistic"))
      .def("to_dict", [](const SimReport& r) { return as_dict(to_json(r)); });

  m.def("run_null_study", &run_null_study, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("run_power_study", &run_power_study, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "discrepancy_curve",
      [](const std::vector<double>& sorted_values, int q) {
        return discrepancy_curve(sorted_values, q);
      },
      py::arg("sorted_values"), py::arg("q"));
}
