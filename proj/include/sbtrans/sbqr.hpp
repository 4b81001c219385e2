#pragma once

// Semiparametric Bayesian quantile regression: z = g(y) = x'theta + eps with
// asymmetric Laplace eps at level tau, written as the exponential-normal
// mixture eps = a_tau xi + b_tau sqrt(xi) eta so that (theta, xi) has Gibbs
// full conditionals. g is drawn by the Bayesian bootstrap each iteration,
// independently of the chain state.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sbtrans/dataset.hpp"
#include "sbtrans/random.hpp"
#include "sbtrans/transform.hpp"

namespace sbtrans {

/// Gaussian prior N(mean, cov) on the coefficients (intercept first).
struct GaussianPrior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// mean 0, cov = psi (X'X)^{-1} for a design that carries its intercept.
GaussianPrior quantile_g_prior(const Eigen::MatrixXd& X_with_intercept, double psi);

struct SbqrConfig {
  double tau = 0.5;
  /// Coefficient prior including the intercept; defaults to the g-prior with
  /// psi = n.
  std::optional<GaussianPrior> prior;
  /// Mixing draws used to average the latent components.
  std::size_t S_xi = 100;
  std::size_t num_draws = 1000;
  std::size_t burn_in = 1000;
  /// Prior or LaplacePlugin (plug-in smoothed quantile regression fit).
  ApproxSource approx_source = ApproxSource::Prior;
  TailPolicy tails = TailPolicy::Clamp;
  /// Keep the n-vector of xi for every retained iteration.
  bool store_xi = false;

  void validate() const;
};

struct SbqrDraws {
  std::vector<MonotoneMap> g_draws;
  /// S x (d + 1); column 0 is the intercept.
  Eigen::MatrixXd theta;
  /// S x n when store_xi, otherwise empty.
  Eigen::MatrixXd xi;
  /// S x m predictive draws on the response scale.
  Eigen::MatrixXd predictive;
  /// Posterior mean of g^{-1}(x'theta) at each query point.
  Eigen::VectorXd quantile_estimates;
  ApproxPosterior approx;
};

/// Component i averages N(x_i'mean + a xi_s, b^2 xi_s + x_i'cov x_i) over
/// S_xi shared draws xi_s ~ Exp(1). X has no intercept column.
ComponentsPtr sbqr_fzx_components(const Eigen::MatrixXd& X, const ApproxPosterior& approx, double tau,
                                  std::size_t S_xi, RandomStream& rng);

/// Same with caller-supplied mixing draws.
ComponentsPtr sbqr_fzx_components(const Eigen::MatrixXd& X, const ApproxPosterior& approx, double tau,
                                  std::vector<double> xi);

/// Draw from N(Q^{-1} l, Q^{-1}) with Q = X'W X + prior.cov^{-1},
/// l = X'W (z - a xi) + prior.cov^{-1} prior.mean, W = diag(1 / (b^2 xi)).
Eigen::VectorXd sbqr_gibbs_theta(const Eigen::MatrixXd& X_with_intercept, const Eigen::VectorXd& z,
                                 const Eigen::VectorXd& xi, double tau, const GaussianPrior& prior,
                                 RandomStream& rng);

/// Precision Q and mean Q^{-1} l of the theta full conditional.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> sbqr_theta_conditional(const Eigen::MatrixXd& X_with_intercept,
                                                                   const Eigen::VectorXd& z,
                                                                   const Eigen::VectorXd& xi, double tau,
                                                                   const GaussianPrior& prior);

/// Parameters (lambda, chi, psi) of the GIG full conditional of xi_i given
/// residual r = z_i - x_i'theta:
///   lambda = 1/2, chi = r^2 / b^2, psi = a^2 / b^2 + 2.
struct GigParams {
  double lambda;
  double chi;
  double psi;
};
GigParams sbqr_xi_conditional(double residual, double tau);

/// Independent draws of every xi_i from its GIG full conditional. A zero
/// residual gives chi = 0, where the conditional is Gamma(1/2, rate psi/2).
Eigen::VectorXd sbqr_gibbs_xi(const Eigen::MatrixXd& X_with_intercept, const Eigen::VectorXd& z,
                              const Eigen::VectorXd& theta, double tau, RandomStream& rng);

/// Quantile regression point estimate by minimizing the Gaussian-smoothed
/// check loss, with a sandwich covariance.
struct QuantileFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;
};

/// X carries its intercept. width is the smoothing bandwidth of the loss; a
/// nonpositive value selects 1e-3 times the SD of z.
QuantileFit fit_smoothed_quantile(const Eigen::MatrixXd& X_with_intercept, std::span<const double> z, double tau,
                                  double width = 0.0);

/// Plug-in approximation on the intercept-free design: the slope block of a
/// smoothed quantile regression fit of z on [1, X].
ApproxPosterior sbqr_plugin_approx(const Eigen::MatrixXd& X, std::span<const double> z, double tau);

/// Prior approximation on the intercept-free design: the slope block of the
/// coefficient prior.
ApproxPosterior sbqr_prior_approx(const GaussianPrior& prior);

/// Full sampler. query holds m covariate rows (no intercept).
SbqrDraws sbqr_run(const Dataset& data, const SbqrConfig& config, const Eigen::MatrixXd& query,
                   const RandomStream& rng);

/// Retained states of a (theta, xi) chain.
struct QuantileChain {
  Eigen::MatrixXd theta;
  Eigen::MatrixXd xi;
};

/// Runs burn_in + retained Gibbs iterations; iteration t conditions on the
/// latent vector latent_at(t). xi starts at 1.
QuantileChain sbqr_chain(const Eigen::MatrixXd& X_with_intercept,
                         const std::function<const Eigen::VectorXd&(std::size_t)>& latent_at, std::size_t burn_in,
                         std::size_t retained, double tau, const GaussianPrior& prior, bool store_xi,
                         RandomStream& rng);

}  // namespace sbtrans
