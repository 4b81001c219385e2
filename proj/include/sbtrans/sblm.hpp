#pragma once

// Semiparametric Bayesian linear regression: z = g(y) = x'theta + sigma * eps
// with a g-prior theta ~ N(0, sigma^2 psi (X'X)^{-1}) and sigma^{-2} ~ Gamma.

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sbtrans/dataset.hpp"
#include "sbtrans/random.hpp"
#include "sbtrans/transform.hpp"

namespace sbtrans {

struct SblmConfig {
  /// g-prior scale; defaults to n.
  std::optional<double> psi;
  double a_sigma = 0.001;
  double b_sigma = 0.001;
  /// Prior or LaplacePlugin.
  ApproxSource approx_source = ApproxSource::Prior;
  std::size_t num_draws = 1000;
  bool sir_enabled = false;
  /// Resample size when sir_enabled; defaults to num_draws / 2.
  std::size_t sir_keep = 0;
  /// Prior theta draws shared by every importance weight.
  std::size_t prior_draws = 1000;
  TailPolicy tails = TailPolicy::Clamp;
  /// Multiplies every latent component by this scale (a deliberately
  /// misspecified latent law; the sampled intercept and sigma absorb it).
  double latent_scale = 1.0;

  double psi_for(std::size_t n) const { return psi.value_or(static_cast<double>(n)); }
  std::size_t sir_keep_for() const { return sir_keep > 0 ? sir_keep : num_draws / 2; }
  /// Throws ConfigError on invalid settings.
  void validate() const;
};

struct SblmDraws {
  std::vector<MonotoneMap> g_draws;
  /// S x (d + 1); column 0 is the intercept.
  Eigen::MatrixXd theta;
  Eigen::VectorXd sigma;
  /// S x m predictive draws on the response scale.
  Eigen::MatrixXd predictive;
  /// Log importance weights; all zero when SIR is disabled.
  Eigen::VectorXd log_weights;
  /// Resampled draw indices and ESS when SIR is enabled.
  std::optional<SirResult> sir;
  ApproxPosterior approx;
};

/// theta-hat = 0, Sigma = psi (X'X)^{-1} on the intercept-free design.
ApproxPosterior sblm_prior_approx(const Eigen::MatrixXd& X, double psi);

/// Sigma = psi / (1 + psi) (X'X)^{-1}, theta-hat = Sigma X' z.
ApproxPosterior sblm_laplace_approx(const Eigen::MatrixXd& X, double psi, std::span<const double> z);

/// Component i is N(x_i' theta-hat, 1 + x_i' Sigma x_i).
ComponentsPtr sblm_fzx_components(const Eigen::MatrixXd& X, const ApproxPosterior& approx);

/// Exact conjugate draw of (sigma, theta) under the g-prior for a design that
/// already carries its intercept column. The Cholesky factor of X'X is
/// computed once.
class GPriorSampler {
 public:
  GPriorSampler(Eigen::MatrixXd X, double psi, double a_sigma, double b_sigma);

  /// sigma^{-2} ~ Gamma(a + n/2, b + (|z|^2 - psi/(1+psi) z'X(X'X)^{-1}X'z) / 2),
  /// then theta ~ N(psi/(1+psi) (X'X)^{-1}X'z, sigma^2 psi/(1+psi) (X'X)^{-1}).
  std::pair<double, Eigen::VectorXd> draw(const Eigen::VectorXd& z, RandomStream& rng) const;

  /// Shape and rate of the sigma^{-2} full conditional.
  std::pair<double, double> precision_shape_rate(const Eigen::VectorXd& z) const;
  /// Conditional mean of theta.
  Eigen::VectorXd theta_mean(const Eigen::VectorXd& z) const;

  const Eigen::MatrixXd& design() const { return X_; }

 private:
  Eigen::MatrixXd X_;
  Eigen::LLT<Eigen::MatrixXd> gram_;
  double psi_;
  double a_;
  double b_;
};

std::pair<double, Eigen::VectorXd> sblm_draw_sigma_theta(const Eigen::MatrixXd& X_with_intercept,
                                                        const Eigen::VectorXd& z, double psi, double a_sigma,
                                                        double b_sigma, RandomStream& rng);

/// Prior-draw cache for the importance weights: each column is X theta_s for
/// theta_s ~ N(prior.mean, prior.cov).
Eigen::MatrixXd sblm_prior_linear_predictors(const Eigen::MatrixXd& X, const ApproxPosterior& prior,
                                             std::size_t draws, RandomStream& rng);

/// Log correction weight of a transformation draw:
///   log mean_s prod_i sum_j alpha_j phi(z_i; x_j' theta_s, 1)
///   - sum_i log sum_j alpha_j phi(z_i; x_j' mu, 1 + x_j' Sigma x_j)
/// with z_i = g(y_i) and prior_predictors from sblm_prior_linear_predictors.
double sblm_log_importance_weight(std::span<const double> latent, std::span<const double> latent_weights,
                                  const Eigen::MatrixXd& prior_predictors, const Eigen::MatrixXd& X,
                                  const ApproxPosterior& prior);

/// Overload that evaluates g at y.
double sblm_log_importance_weight(const MonotoneMap& g, std::span<const double> latent_weights,
                                  const Eigen::MatrixXd& prior_predictors, const Eigen::MatrixXd& X,
                                  std::span<const double> y, const ApproxPosterior& prior);

/// Joint Monte Carlo sampler. query holds m covariate rows (no intercept).
/// Draw s uses rng.substream(s), so output does not depend on worker count.
SblmDraws sblm_run(const Dataset& data, const SblmConfig& config, const Eigen::MatrixXd& query,
                   const RandomStream& rng);

}  // namespace sbtrans
