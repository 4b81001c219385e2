#pragma once

// Comparison models without a learned transformation: the Bayesian linear
// model on raw or Box-Cox transformed y, Bayesian quantile regression on raw
// y, and a Gaussian process on raw or Box-Cox transformed y.

#include <cstddef>
#include <functional>
#include <optional>

#include <Eigen/Dense>

#include "sbtrans/dataset.hpp"
#include "sbtrans/random.hpp"
#include "sbtrans/sbgp.hpp"

namespace sbtrans {

struct BaselineDraws {
  /// S x (d + 1) with the intercept first; empty for the Gaussian processes.
  Eigen::MatrixXd theta;
  Eigen::VectorXd sigma;
  /// Box-Cox parameter draws; empty when y is not transformed.
  Eigen::VectorXd lambda;
  /// S x m predictive draws on the response scale.
  Eigen::MatrixXd predictive;
  /// Posterior mean of x'theta at each query point (quantile regression).
  Eigen::VectorXd quantile_estimates;
};

struct BlmConfig {
  /// g-prior scale; defaults to n.
  std::optional<double> psi;
  double a_sigma = 0.001;
  double b_sigma = 0.001;
  std::size_t num_draws = 1000;
};

struct BoxCoxConfig {
  double prior_mean = 0.5;
  double prior_sd = 0.5;
  double lower = 0.0;
  double upper = 2.0;
  double initial = 0.5;
  /// Initial bracket width of the slice sampler.
  double slice_width = 0.5;
  std::size_t burn_in = 1000;

  void validate() const;
};

/// Stepping-out and shrinkage slice sampler (Neal, 2003) for a univariate log
/// density restricted to the open interval (lower, upper).
double slice_sample(const std::function<double(double)>& log_density, double x0, double lower, double upper,
                    double width, RandomStream& rng);

/// Sum of log |dg/dy| = (lambda - 1) sum log |y_i|.
double boxcox_log_jacobian(const Eigen::VectorXd& y, double lambda);

/// Exact conjugate g-prior draws on raw y.
BaselineDraws baseline_blm(const Dataset& data, const Eigen::MatrixXd& query, const BlmConfig& config,
                           const RandomStream& rng);

/// Gibbs sampler alternating conjugate (sigma, theta) on boxcox(y, lambda)
/// with a slice-sampled lambda under a truncated normal prior, using the
/// transformed-data likelihood with its Jacobian.
BaselineDraws baseline_blm_boxcox(const Dataset& data, const Eigen::MatrixXd& query, const BlmConfig& config,
                                  const BoxCoxConfig& boxcox_config, const RandomStream& rng);

/// Quantile regression Gibbs sampler on raw y with the g-prior psi = n.
BaselineDraws baseline_bqr(const Dataset& data, const Eigen::MatrixXd& query, double tau, std::size_t num_draws,
                           std::size_t burn_in, const RandomStream& rng);

/// Maximum likelihood Gaussian process on raw y; predictive draws are
/// N(f(x), sigma^2 (1 + v(x))) with v the posterior variance of f in units of
/// sigma^2.
BaselineDraws baseline_gp(const Dataset& data, const Eigen::MatrixXd& query, const GpFitOptions& options,
                          std::size_t num_draws, const RandomStream& rng);

/// Gaussian process on boxcox(y, lambda). Kernel ratio, range and smoothness
/// are fixed at the maximum likelihood fit for the prior mean of lambda;
/// lambda is slice-sampled under the Gaussian process likelihood with the
/// constant mean and sigma profiled out, plus the Jacobian.
BaselineDraws baseline_gp_boxcox(const Dataset& data, const Eigen::MatrixXd& query, const GpFitOptions& options,
                                 const BoxCoxConfig& boxcox_config, std::size_t num_draws,
                                 const RandomStream& rng);

}  // namespace sbtrans
