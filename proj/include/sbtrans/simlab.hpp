#pragma once

// Simulated designs: correlated Gaussian covariates, a sparse linear latent
// model and a choice of inverse transformation producing y, plus the harness
// that scores each method on independent test data.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbtrans/dataset.hpp"
#include "sbtrans/metrics.hpp"
#include "sbtrans/random.hpp"

namespace sbtrans {

enum class TransformKind { Beta, Step, BoxCox, Identity };

struct SimDesign {
  std::size_t n = 200;
  std::size_t p = 50;
  TransformKind transform_kind = TransformKind::Beta;
  /// z = x'theta (1 + eps) instead of x'theta + eps.
  bool heteroskedastic = false;
  double error_sd = 1.0;
  std::size_t n_test = 1000;
  double boxcox_lambda = 0.5;

  /// Throws ConfigError; p must be even so half the coefficients are signal.
  void validate() const;
};

/// Rows i.i.d. N(0, Sigma), Sigma_jk = 0.75^|j - k|, then one random column
/// permutation.
Eigen::MatrixXd gen_covariates(std::size_t n, std::size_t p, RandomStream& rng);

/// Piecewise-linear increasing map through the cumulative sums of 10
/// standard exponential increments placed at equally spaced points on [-3, 3].
/// Right of 3 it continues with the last slope; left of -3 it decays
/// exponentially toward 0, matching value and slope at -3, so it stays
/// positive.
class StepMap {
 public:
  static constexpr std::size_t kKnots = 10;

  explicit StepMap(RandomStream& rng);
  explicit StepMap(std::vector<double> cumulative);

  double operator()(double z) const;
  double inverse(double y) const;
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
};

/// Signed Box-Cox map (sign(y) |y|^lambda - 1) / lambda and its inverse.
double boxcox(double y, double lambda);
double inverse_boxcox(double z, double lambda);

/// The inverse transformation y = h(z) of a design and its inverse g = h^-1.
class InverseTransform {
 public:
  InverseTransform(TransformKind kind, double lambda, RandomStream& rng);

  TransformKind kind() const { return kind_; }
  double operator()(double z) const;
  /// True transformation g(y).
  double forward(double y) const;

 private:
  TransformKind kind_;
  double lambda_;
  std::optional<StepMap> step_;
};

/// One replicate: training and test sets generated from the same model, with
/// the latent data of both standardized by the training sample mean and SD.
struct SimReplicate {
  Dataset train;
  Dataset test;
  /// p coefficients; the first p/2 are 1 and the rest 0 (columns of X are
  /// permuted, so signal positions are random in covariate order).
  Eigen::VectorXd theta_true;
  Eigen::VectorXd z_train;
  Eigen::VectorXd z_test;
  InverseTransform transform;
};

struct LatentResponse {
  Eigen::VectorXd y;
  /// Standardized latent data.
  Eigen::VectorXd z;
  Eigen::VectorXd theta_true;
};

/// Latent data for covariates X, standardized by their own sample moments,
/// then pushed through h.
LatentResponse gen_response(const Eigen::MatrixXd& X, const SimDesign& design, const InverseTransform& h,
                            RandomStream& rng);

/// Uses rng.substream(0) for the transformation and column permutation, 1 for
/// training data and 2 for test data, so designs that differ only in n share
/// the transformation.
SimReplicate simulate_replicate(const SimDesign& design, const RandomStream& rng);

// ---------------------------------------------------------------------------
// Experiment harness

enum class Method { Sblm, SblmPrior, Blm, BlmBoxCox, Sbqr, SbqrPrior, Bqr, Sbgp, Gp, GpBoxCox };

std::string method_name(Method method);
/// Throws ConfigError on an unknown name.
Method parse_method(const std::string& name);

/// Design presets by name: beta, step, box-cox, identity, and hetero (the
/// heteroskedastic identity design).
SimDesign design_preset(const std::string& name, std::size_t n, std::size_t p);

struct ExperimentConfig {
  SimDesign design;
  std::string design_name = "beta";
  Method method = Method::Sblm;
  std::size_t replicates = 20;
  std::size_t num_draws = 1000;
  /// Quantile level for the quantile methods.
  double tau = 0.5;
  /// Predictive interval level.
  double level = 0.9;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Fits one method on one replicate and scores it on the test set. Selection
/// rates apply to the linear methods and calibration to the quantile methods.
MetricReport evaluate_method(Method method, const SimReplicate& replicate, const ExperimentConfig& config,
                             const RandomStream& rng);

/// Replicate r uses RandomStream(seed).substream(r): its substream 0 drives
/// the data and substream 1 the method. Replicates run in parallel.
std::vector<MetricReport> run_experiment(const ExperimentConfig& config);

}  // namespace sbtrans
