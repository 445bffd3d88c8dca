// Apache License, Version 2.0, refer to LICENSE.txt

#include "tvcluster/cli.hpp"
#include "tvcluster/gp_factor.hpp"
#include "tvcluster/io.hpp"
#include "tvcluster/model.hpp"
#include "tvcluster/dp_cluster.hpp"
#include "tvcluster/posterior.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace tvc;

namespace {

std::vector<std::string> config_violations(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    return {std::string("not valid JSON: ") + e.what()};
  }
  try {
    return validate_config(config_from_json(doc));
  } catch (const ValidationError& e) {
    return e.violations();
  }
}

py::dict dataset_dict(const Dataset& d) {
  py::dict out;
  out["times"] = d.times;
  out["y"] = d.y;
  out["x"] = d.x;
  out["z"] = d.z;
  out["partition_of"] = d.partition_of;
  out["site_names"] = d.site_names;
  if (d.site_coords) out["site_coords"] = *d.site_coords;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the tvcluster sampler, its oracles and its command-line front end";
  m.attr("__version__") = TVC_VERSION;

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  m.def(
      "ar1_step",
      [](double phi, double dt) {
        const auto s = ar1_step(phi, dt);
        return py::make_tuple(s.mean_multiplier, s.innovation_variance);
      },
      py::arg("phi"), py::arg("dt"), "Transition (multiplier, innovation variance) of a unit-variance OU factor.");
  m.def("sequential_log_density", &sequential_log_density, py::arg("path"), py::arg("times"), py::arg("phi"));
  m.def(
      "cross_covariance",
      [](int site_i, int site_j, int comp_k, int comp_l, double t, double t_prime, const std::vector<MatrixXd>& lambda,
         const MatrixXd& coreg, const std::vector<std::vector<double>>& decay_rates) {
        return cross_covariance({site_i, site_j, comp_k, comp_l, t, t_prime}, lambda, coreg, decay_rates);
      },
      py::arg("site_i"), py::arg("site_j"), py::arg("comp_k"), py::arg("comp_l"), py::arg("t"), py::arg("t_prime"),
      py::arg("lambda_"), py::arg("coreg"), py::arg("decay_rates"));
  m.def(
      "woodbury_marginal_loglik",
      [](const MatrixXd& x, const VectorXd& residual, double tau2, const VectorXd& mean, const MatrixXd& cov) {
        if (x.rows() != residual.size()) throw std::invalid_argument("x and residual disagree on the number of rows");
        GaussianPrior prior;
        prior.mean = mean;
        prior.cov = cov;
        return woodbury_marginal_loglik(segment_stats(residual, x), tau2, ResolvedGaussian::from(prior, x.cols()));
      },
      py::arg("x"), py::arg("residual"), py::arg("tau2"), py::arg("prior_mean"), py::arg("prior_cov"),
      "log of N(residual | x b, tau2 I) integrated over b ~ N(prior_mean, prior_cov).");
  m.def("adjusted_rand_index", &adjusted_rand_index, py::arg("a"), py::arg("b"));
  m.def("canonical_labels", &canonical_labels, py::arg("labels"));
  m.def("config_violations", &config_violations, py::arg("text"),
        "Problems with a JSON model config; empty when it is valid.");
  m.def(
      "read_dataset", [](const std::filesystem::path& dir) { return dataset_dict(read_dataset(dir)); }, py::arg("path"));
  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a command-line invocation in process; returns (exit code, stdout, stderr).");
}
