#pragma once

// Probability kernels shared by every model family: densities, CDFs,
// quantiles and samplers for the handful of distributions the samplers need.

#include <span>
#include <utility>
#include <vector>

#include "sbtrans/random.hpp"

namespace sbtrans {

// ---------------------------------------------------------------------------
// Normal

double normal_pdf(double t, double mean = 0.0, double sd = 1.0);
double normal_log_pdf(double t, double mean = 0.0, double sd = 1.0);

/// P(N(mean, sd^2) <= t). Uses erfc, so relative accuracy holds in both tails.
double normal_cdf(double t, double mean = 0.0, double sd = 1.0);

/// Inverse of normal_cdf for p in (0, 1).
double normal_quantile(double p, double mean = 0.0, double sd = 1.0);

// ---------------------------------------------------------------------------
// Simplex

/// Flat Dirichlet(1, ..., 1) weights of length n (normalized exponentials).
std::vector<double> sample_dirichlet_flat(std::size_t n, RandomStream& rng);

// ---------------------------------------------------------------------------
// Asymmetric Laplace

/// Constants of the exponential-normal mixture representation of the
/// asymmetric Laplace error at quantile level tau:
///   eps = a_tau * xi + b_tau * sqrt(xi) * eta,  xi ~ Exp(1), eta ~ N(0, 1)
/// with a_tau = (1 - 2 tau) / (tau (1 - tau)), b_tau = sqrt(2 / (tau (1 - tau))).
struct AldConstants {
  double a_tau;
  double b_tau;
};

AldConstants ald_expansion_constants(double tau);

// ---------------------------------------------------------------------------
// Generalized inverse Gaussian

/// GIG(lambda, chi, psi) with density proportional to
///   x^(lambda - 1) * exp(-(chi / x + psi * x) / 2),   x > 0.
/// chi multiplies 1/x, psi multiplies x. Sampled with Devroye's (2014)
/// rejection method, whose acceptance rate is bounded for all parameters.
double sample_gig(double lambda, double chi, double psi, RandomStream& rng);

double gig_log_normalizer(double lambda, double chi, double psi);
double gig_mean(double lambda, double chi, double psi);

// ---------------------------------------------------------------------------
// Beta / gamma

double beta_cdf(double x, double a, double b);
/// Inverse of the regularized incomplete beta function; 0 and 1 map to the
/// support endpoints.
double beta_quantile(double p, double a, double b);

// ---------------------------------------------------------------------------
// Truncated normal

/// Inverse-CDF draw from N(mean, sd^2) restricted to (lower, upper).
double sample_truncated_normal(double mean, double sd, double lower, double upper,
                               RandomStream& rng);

// ---------------------------------------------------------------------------

enum class Family {
  Normal,
  Exponential,
  Gamma,
  Beta,
  AsymmetricLaplace,
  GeneralizedInverseGaussian,
  TruncatedNormal,
};

/// A distribution from one of the supported families together with its
/// parameters. Parameter meaning per family:
///   Normal(mean, sd)                   Exponential(rate)
///   Gamma(shape, rate)                 Beta(a, b)
///   AsymmetricLaplace(tau, loc, scale) GeneralizedInverseGaussian(lambda, chi, psi)
///   TruncatedNormal(mean, sd, lower, upper)
class DistKernel {
 public:
  static DistKernel normal(double mean, double sd);
  static DistKernel exponential(double rate);
  static DistKernel gamma(double shape, double rate);
  static DistKernel beta(double a, double b);
  static DistKernel asymmetric_laplace(double tau, double location = 0.0, double scale = 1.0);
  static DistKernel gig(double lambda, double chi, double psi);
  static DistKernel truncated_normal(double mean, double sd, double lower, double upper);

  Family family() const { return family_; }
  std::span<const double> params() const { return params_; }

  double pdf(double t) const;
  double cdf(double t) const;
  double quantile(double p) const;
  double sample(RandomStream& rng) const;
  double mean() const;
  double variance() const;

 private:
  DistKernel(Family family, std::vector<double> params);

  Family family_;
  std::vector<double> params_;
};

}  // namespace sbtrans
