#include <optional>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sbtrans/errors.hpp"
#include "sbtrans/io.hpp"
#include "sbtrans/metrics.hpp"
#include "sbtrans/sbgp.hpp"
#include "sbtrans/sblm.hpp"
#include "sbtrans/sbqr.hpp"
#include "sbtrans/simlab.hpp"

namespace py = pybind11;
using namespace sbtrans;

namespace {

Dataset make_dataset(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Dataset d;
  d.X = X;
  d.y = y;
  d.validate();
  return d;
}

ApproxSource approx_of(const std::string& name) {
  if (name == "prior") return ApproxSource::Prior;
  if (name == "laplace") return ApproxSource::LaplacePlugin;
  throw ConfigError("unknown approximation '" + name + "' (expected prior or laplace)");
}

TailPolicy tails_of(bool linear) { return linear ? TailPolicy::Linear : TailPolicy::Clamp; }

// Knot locations and an S x K matrix of knot values.
py::dict transform_tables(const std::vector<MonotoneMap>& draws) {
  py::dict out;
  if (draws.empty()) return out;
  const auto t = draws.front().knots_t();
  Eigen::VectorXd knots = Eigen::Map<const Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
  Eigen::MatrixXd values(static_cast<Eigen::Index>(draws.size()), static_cast<Eigen::Index>(t.size()));
  for (std::size_t s = 0; s < draws.size(); ++s) {
    const auto g = draws[s].knots_g();
    for (std::size_t k = 0; k < g.size() && k < t.size(); ++k) {
      values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(k)) = g[k];
    }
  }
  out["transform_knots"] = knots;
  out["transform_values"] = values;
  return out;
}

py::dict run_sblm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::optional<Eigen::MatrixXd> query,
                  std::size_t draws, std::uint64_t seed, const std::string& approx, std::optional<double> psi,
                  bool sir, bool linear_tails) {
  SblmConfig cfg;
  cfg.psi = psi;
  cfg.approx_source = approx_of(approx);
  cfg.num_draws = draws;
  cfg.sir_enabled = sir;
  cfg.tails = tails_of(linear_tails);
  cfg.validate();
  const Dataset data = make_dataset(X, y);
  SblmDraws d;
  {
    py::gil_scoped_release release;
    d = sblm_run(data, cfg, query.value_or(X), RandomStream(seed));
  }
  py::dict out = transform_tables(d.g_draws);
  out["theta"] = d.theta;
  out["sigma"] = d.sigma;
  out["predictive"] = d.predictive;
  out["log_weights"] = d.log_weights;
  if (d.sir) {
    out["sir_indices"] = d.sir->indices;
    out["ess"] = d.sir->ess;
  }
  return out;
}

py::dict run_sbqr(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::optional<Eigen::MatrixXd> query, double tau,
                  std::size_t draws, std::size_t burn_in, std::uint64_t seed, const std::string& approx,
                  bool linear_tails) {
  SbqrConfig cfg;
  cfg.tau = tau;
  cfg.num_draws = draws;
  cfg.burn_in = burn_in;
  cfg.approx_source = approx_of(approx);
  cfg.tails = tails_of(linear_tails);
  cfg.validate();
  const Dataset data = make_dataset(X, y);
  SbqrDraws d;
  {
    py::gil_scoped_release release;
    d = sbqr_run(data, cfg, query.value_or(X), RandomStream(seed));
  }
  py::dict out = transform_tables(d.g_draws);
  out["theta"] = d.theta;
  out["predictive"] = d.predictive;
  out["quantile_estimates"] = d.quantile_estimates;
  return out;
}

py::dict run_sbgp(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::optional<Eigen::MatrixXd> query,
                  std::size_t draws, std::uint64_t seed, const std::string& mode, std::optional<double> smoothness,
                  bool linear_tails) {
  SbgpConfig cfg;
  cfg.num_draws = draws;
  if (mode == "fast") {
    cfg.mode = SbgpMode::Fast;
  } else if (mode == "sample-f") {
    cfg.mode = SbgpMode::SampleF;
  } else {
    throw ConfigError("unknown sbgp mode '" + mode + "' (expected fast or sample-f)");
  }
  cfg.fit.smoothness = smoothness;
  cfg.tails = tails_of(linear_tails);
  cfg.validate();
  const Dataset data = make_dataset(X, y);
  SbgpDraws d;
  {
    py::gil_scoped_release release;
    d = sbgp_run(data, query.value_or(X), cfg, RandomStream(seed));
  }
  py::dict out = transform_tables(d.g_draws);
  out["predictive"] = d.predictive;
  const MaternParams& k = d.fit.params();
  out["kernel"] = py::dict(py::arg("variance") = k.variance, py::arg("range") = k.range,
                           py::arg("smoothness") = k.smoothness, py::arg("mean") = k.mean_const,
                           py::arg("noise_scale") = k.noise_scale);
  return out;
}

std::vector<py::dict> run_simulation(const std::string& design, const std::string& method, std::size_t n,
                                     std::size_t p, std::size_t replicates, std::size_t draws, double tau,
                                     double level, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.design = design_preset(design, n, p);
  cfg.design_name = design;
  cfg.method = parse_method(method);
  cfg.replicates = replicates;
  cfg.num_draws = draws;
  cfg.tau = tau;
  cfg.level = level;
  cfg.seed = seed;
  cfg.validate();
  std::vector<MetricReport> reports;
  {
    py::gil_scoped_release release;
    reports = run_experiment(cfg);
  }
  std::vector<py::dict> out;
  for (const auto& r : reports) {
    out.push_back(py::dict(py::arg("interval_width") = r.interval_width, py::arg("coverage") = r.coverage,
                           py::arg("crps") = r.crps, py::arg("tpr") = r.tpr, py::arg("tnr") = r.tnr,
                           py::arg("quantile_calibration") = r.quantile_calibration));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Semiparametric Bayesian transformation regression";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<InputError> input_error(m, "InputError", error.ptr());
  static py::exception<ConfigError> config_error(m, "ConfigError", error.ptr());
  static py::exception<NumericalError> numerical_error(m, "NumericalError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InputError& e) {
      py::set_error(input_error, e.what());
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical_error, e.what());
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.def(
      "read_csv",
      [](const std::string& path, const std::string& response, const std::vector<std::string>& covariates) {
        const Dataset d = ingest_csv(path, response, covariates);
        return py::make_tuple(d.X, d.y, d.covariate_names);
      },
      py::arg("path"), py::arg("response"), py::arg("covariates") = std::vector<std::string>{},
      "Reads (X, y, covariate names) from a CSV file with a header row.");

  m.def("sblm", &run_sblm, py::arg("X"), py::arg("y"), py::arg("query") = py::none(), py::arg("draws") = 1000,
        py::arg("seed") = 1, py::arg("approx") = "prior", py::arg("psi") = py::none(), py::arg("sir") = false,
        py::arg("linear_tails") = false, "Transformation linear regression draws.");
  m.def("sbqr", &run_sbqr, py::arg("X"), py::arg("y"), py::arg("query") = py::none(), py::arg("tau") = 0.5,
        py::arg("draws") = 1000, py::arg("burn_in") = 1000, py::arg("seed") = 1, py::arg("approx") = "prior",
        py::arg("linear_tails") = false, "Transformation quantile regression draws.");
  m.def("sbgp", &run_sbgp, py::arg("X"), py::arg("y"), py::arg("query") = py::none(), py::arg("draws") = 1000,
        py::arg("seed") = 1, py::arg("mode") = "fast", py::arg("smoothness") = py::none(),
        py::arg("linear_tails") = false, "Transformation Gaussian process regression draws.");
  m.def("simulate", &run_simulation, py::arg("design") = "beta", py::arg("method") = "sblm", py::arg("n") = 200,
        py::arg("p") = 50, py::arg("replicates") = 20, py::arg("draws") = 1000, py::arg("tau") = 0.5,
        py::arg("level") = 0.9, py::arg("seed") = 1, "Per-replicate metrics of one method on one design.");

  m.def(
      "crps",
      [](const Eigen::VectorXd& draws, double y) {
        return crps_sample(std::span<const double>(draws.data(), static_cast<std::size_t>(draws.size())), y);
      },
      py::arg("draws"), py::arg("y"), "Sample CRPS of predictive draws at an observation.");
  m.def(
      "hpd_interval",
      [](const Eigen::VectorXd& draws, double level) {
        return hpd_interval(std::span<const double>(draws.data(), static_cast<std::size_t>(draws.size())), level);
      },
      py::arg("draws"), py::arg("level") = 0.95, "Shortest interval holding the given share of draws.");
}
