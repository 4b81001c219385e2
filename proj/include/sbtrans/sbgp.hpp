#pragma once

// Semiparametric Gaussian process regression: z = g(y) = f(x) + sigma * eps
// with f ~ GP(mean, sigma^2 K) under an isotropic Matern kernel. Kernel
// hyperparameters, the constant mean and sigma are fixed at their maximum
// likelihood estimates; g is drawn by the Bayesian bootstrap.
//
// Noise convention: K is measured in units of sigma^2, so z ~ N(mean 1,
// sigma^2 (K + I)) and variance below is the signal-to-noise variance ratio.

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sbtrans/dataset.hpp"
#include "sbtrans/random.hpp"
#include "sbtrans/transform.hpp"

namespace sbtrans {

struct MaternParams {
  /// Kernel variance relative to the noise variance.
  double variance = 1.0;
  double range = 1.0;
  /// One of 0.5, 1.5, 2.5.
  double smoothness = 1.5;
  double mean_const = 0.0;
  /// Noise standard deviation sigma.
  double noise_scale = 1.0;

  void validate() const;
};

/// variance * m_nu(|x1 - x2| / range) with the closed-form half-integer Matern
/// correlation m_nu.
double matern_cov(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, const MaternParams& params);

/// Matern correlation at scaled distance u = dist / range.
double matern_correlation(double u, double smoothness);

/// Kernel matrix between the rows of A and the rows of B.
Eigen::MatrixXd matern_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const MaternParams& params);

struct GpFitOptions {
  /// Restrict the smoothness to one value; otherwise 0.5, 1.5 and 2.5 are tried.
  std::optional<double> smoothness;
  int max_iterations = 500;
  /// Diagonal jitter added to K, relative to the kernel variance.
  double jitter = 1e-8;
};

/// Maximum likelihood Gaussian process fit with the fitted function values
/// and the diagonal of (K^{-1} + I)^{-1} at the training inputs.
class GpFit {
 public:
  GpFit() = default;
  GpFit(Eigen::MatrixXd X, Eigen::VectorXd z, MaternParams params, double jitter = 1e-8);

  const MaternParams& params() const { return params_; }
  /// mean + K (K + I)^{-1} (z - mean).
  const Eigen::VectorXd& fitted_mean() const { return fitted_; }
  /// diag((K^{-1} + I)^{-1}) = 1 - diag((K + I)^{-1}).
  const Eigen::VectorXd& cov_diag() const { return cov_diag_; }
  const Eigen::MatrixXd& inputs() const { return X_; }
  const Eigen::LLT<Eigen::MatrixXd>& cholesky() const { return llt_; }
  double log_likelihood() const { return log_lik_; }
  int iterations = 0;

  /// Posterior mean of f at query rows given latent data z at the training
  /// inputs, with the constant mean re-estimated by generalized least squares.
  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& query, const Eigen::VectorXd& z) const;
  Eigen::VectorXd predict_mean(const Eigen::MatrixXd& query) const { return predict_mean(query, z_); }
  /// Same with the n x m training-to-query kernel matrix precomputed.
  Eigen::VectorXd predict_mean_cross(const Eigen::MatrixXd& cross, const Eigen::VectorXd& z) const;
  /// Posterior covariance of f at query rows, in units of sigma^2.
  Eigen::MatrixXd predict_cov(const Eigen::MatrixXd& query) const;
  /// Diagonal of predict_cov.
  Eigen::VectorXd predict_var(const Eigen::MatrixXd& query) const;

 private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd z_;
  MaternParams params_;
  double jitter_ = 1e-8;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd ones_solved_;
  double ones_precision_ = 0.0;
  Eigen::VectorXd fitted_;
  Eigen::VectorXd cov_diag_;
  double log_lik_ = 0.0;
};

/// Profile log likelihood of z under N(mean 1, sigma^2 (K + I)) with mean
/// and sigma^2 replaced by their maximizers; returns the maximizers through
/// mean_out and noise_out when given.
double gp_profile_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& z, double variance, double range,
                                 double smoothness, double jitter = 1e-8, double* mean_out = nullptr,
                                 double* noise_out = nullptr);

/// Maximizes the profile likelihood over (log variance ratio, log range) by
/// Nelder-Mead for each smoothness and keeps the best. Throws
/// InsufficientDataError for n < 10 and NumericalError when no smoothness
/// converges within max_iterations.
GpFit gp_mle_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& z, const GpFitOptions& options = {});

/// Component i is N(f_i, sigma^2 (1 + cov_diag_i)).
ComponentsPtr sbgp_fzx_components(const GpFit& fit);

enum class SbgpMode {
  /// Fixed fitted function; z~ ~ N(f(x), sigma^2).
  Fast,
  /// Per draw, f* ~ N(f(x), sigma^2 Sigma_f) jointly over the query points,
  /// then z~ ~ N(f*, sigma^2).
  SampleF
};

struct SbgpConfig {
  std::size_t num_draws = 1000;
  SbgpMode mode = SbgpMode::Fast;
  GpFitOptions fit;
  TailPolicy tails = TailPolicy::Clamp;

  void validate() const;
};

struct SbgpDraws {
  std::vector<MonotoneMap> g_draws;
  /// S x m predictive draws on the response scale.
  Eigen::MatrixXd predictive;
  /// Fit on the point-estimate latent data.
  GpFit fit;
  MonotoneMap point_transform;
};

/// query holds m covariate rows.
SbgpDraws sbgp_run(const Dataset& data, const Eigen::MatrixXd& query, const SbgpConfig& config,
                   const RandomStream& rng);

}  // namespace sbtrans
