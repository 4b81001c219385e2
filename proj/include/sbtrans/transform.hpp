#pragma once

// Bayesian bootstrap machinery for the unknown monotone transformation:
// draws of the response and latent marginal CDFs, their composition into a
// transformation draw, monotone interpolation and inversion, the two-stage
// point estimate, the location-scale law and importance resampling.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sbtrans/dist.hpp"
#include "sbtrans/errors.hpp"
#include "sbtrans/random.hpp"

namespace sbtrans {

// ---------------------------------------------------------------------------
// Response side

/// Observed responses with ties merged: strictly increasing atom values and
/// the atom each observation belongs to.
struct ResponseAtoms {
  std::vector<double> values;
  std::vector<std::size_t> atom_of;

  static ResponseAtoms from(std::span<const double> y);
  std::size_t num_obs() const { return atom_of.size(); }
  std::size_t num_atoms() const { return values.size(); }
};

/// Weighted step function on strictly increasing atoms.
class EmpiricalCdf {
 public:
  EmpiricalCdf(std::vector<double> atoms, std::vector<double> weights);

  std::span<const double> atoms() const { return atoms_; }
  std::span<const double> weights() const { return weights_; }

  /// Sum of weights on atoms <= t.
  double evaluate(double t) const;

  /// Running sums of the weights, clamped to at most 1.
  std::vector<double> cumulative() const;

 private:
  std::vector<double> atoms_;
  std::vector<double> weights_;
};

/// Bayesian bootstrap draw of the response CDF: flat Dirichlet weights on the
/// observations, tied observations' weights summed onto their atom.
EmpiricalCdf sample_Fy(const ResponseAtoms& atoms, RandomStream& rng);
EmpiricalCdf sample_Fy(std::span<const double> y, RandomStream& rng);

/// The empirical CDF (weight 1/n per observation).
EmpiricalCdf empirical_cdf(const ResponseAtoms& atoms);

// ---------------------------------------------------------------------------
// Latent side

/// n conditional latent CDFs t -> F_{Z|X=x_i}(t), each continuous and strictly
/// increasing on the real line, with densities.
class LatentComponents {
 public:
  virtual ~LatentComponents() = default;

  virtual std::size_t size() const = 0;
  virtual double cdf(std::size_t i, double t) const = 0;
  virtual double pdf(std::size_t i, double t) const = 0;
  /// Derivative of the density in t.
  virtual double pdf_slope(std::size_t i, double t) const = 0;
  virtual double mean(std::size_t i) const = 0;
  virtual double sd(std::size_t i) const = 0;
  /// Smallest scale among the normal pieces that make up the components;
  /// sets the resolution of the inversion table.
  virtual double min_scale() const = 0;
  /// CDF, density and density slope of component i at every grid point
  /// lower + k * step, k < count.
  virtual void tabulate(std::size_t i, double lower, double step, std::size_t count, double* cdf, double* pdf,
                        double* slope) const;
};

using ComponentsPtr = std::shared_ptr<const LatentComponents>;

/// Component i is N(means[i], sds[i]^2).
class NormalComponents final : public LatentComponents {
 public:
  NormalComponents(std::vector<double> means, std::vector<double> sds);

  std::size_t size() const override { return means_.size(); }
  double cdf(std::size_t i, double t) const override;
  double pdf(std::size_t i, double t) const override;
  double pdf_slope(std::size_t i, double t) const override;
  double mean(std::size_t i) const override { return means_[i]; }
  double sd(std::size_t i) const override { return sds_[i]; }
  double min_scale() const override;

 private:
  std::vector<double> means_;
  std::vector<double> sds_;
};

/// Component i is the average over shared mixing draws xi_s of
///   N(means[i] + a * xi_s, b^2 * xi_s + extra_var[i]).
class ScaleMixtureComponents final : public LatentComponents {
 public:
  ScaleMixtureComponents(std::vector<double> means, std::vector<double> extra_var,
                         std::vector<double> xi, double a, double b);

  std::size_t size() const override { return means_.size(); }
  double cdf(std::size_t i, double t) const override;
  double pdf(std::size_t i, double t) const override;
  double pdf_slope(std::size_t i, double t) const override;
  double mean(std::size_t i) const override;
  double sd(std::size_t i) const override;
  double min_scale() const override;
  void tabulate(std::size_t i, double lower, double step, std::size_t count, double* cdf, double* pdf,
                double* slope) const override;

  std::span<const double> xi() const { return xi_; }

 private:
  std::vector<double> means_;
  std::vector<double> extra_var_;
  std::vector<double> xi_;
  double a_;
  double b2_;
  double xi_mean_ = 0.0;
  double xi_var_ = 0.0;
};

/// Components of mu + sigma * Z for base components of Z.
class LocationScaleComponents final : public LatentComponents {
 public:
  LocationScaleComponents(ComponentsPtr base, double mu, double sigma);

  std::size_t size() const override { return base_->size(); }
  double cdf(std::size_t i, double t) const override;
  double pdf(std::size_t i, double t) const override;
  double pdf_slope(std::size_t i, double t) const override;
  double mean(std::size_t i) const override { return mu_ + sigma_ * base_->mean(i); }
  double sd(std::size_t i) const override { return sigma_ * base_->sd(i); }
  double min_scale() const override { return sigma_ * base_->min_scale(); }

 private:
  ComponentsPtr base_;
  double mu_;
  double sigma_;
};

/// Every component CDF, density and density slope tabulated on one uniform
/// grid. The mixture CDF at the grid points is then a matrix-vector product
/// with the weights, which is what makes repeated transformation draws cheap.
class ComponentTable {
 public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  /// Grid spans every component's mean +- 10 sd with spacing of 5% of the
  /// smallest normal scale, capped at max_points.
  explicit ComponentTable(const LatentComponents& components, std::size_t max_points = 4096);

  std::size_t num_points() const { return static_cast<std::size_t>(cdf_.rows()); }
  double lower() const { return lower_; }
  double step() const { return step_; }
  double point(std::size_t g) const { return lower_ + step_ * static_cast<double>(g); }
  const RowMatrix& cdf() const { return cdf_; }
  const RowMatrix& pdf() const { return pdf_; }
  const RowMatrix& pdf_slope() const { return slope_; }

 private:
  double lower_ = 0.0;
  double step_ = 0.0;
  RowMatrix cdf_;
  RowMatrix pdf_;
  RowMatrix slope_;
};

using TablePtr = std::shared_ptr<const ComponentTable>;

/// Dirichlet-weighted mixture of latent component CDFs.
class MixtureCdf {
 public:
  MixtureCdf(ComponentsPtr components, std::vector<double> weights, TablePtr table = nullptr);

  const LatentComponents& components() const { return *components_; }
  const ComponentsPtr& components_ptr() const { return components_; }
  const TablePtr& table() const { return table_; }
  std::span<const double> weights() const { return weights_; }

  double evaluate(double t) const;
  double density(double t) const;
  double weighted_mean() const;
  double weighted_sd() const;

 private:
  ComponentsPtr components_;
  std::vector<double> weights_;
  TablePtr table_;
};

/// Bayesian bootstrap draw of the latent CDF over the given components.
MixtureCdf sample_Fz(ComponentsPtr components, RandomStream& rng, TablePtr table = nullptr);

/// t with F(t) = p. Brackets from the weighted component mean +- 8 weighted
/// SDs (doubling outward until bracketed), then bisects to ~1e-12 in t.
double invert_mixture(const MixtureCdf& F, double p);

/// Inverts F at ascending targets. With a table attached, each target is
/// located on the grid and solved on the quintic Hermite interpolant built
/// from the tabulated CDF, density and density slope; targets outside the grid, or any target
/// when no table is attached, go through invert_mixture.
std::vector<double> invert_mixture_sorted(const MixtureCdf& F, std::span<const double> targets);

// ---------------------------------------------------------------------------
// Monotone maps

/// Behavior of a MonotoneMap outside its knot range. Clamp holds the endpoint
/// values (so inverses stay within [min y, max y]); Linear continues with the
/// boundary slope of the interpolant.
enum class TailPolicy { Clamp, Linear };

/// Monotone C1 cubic Hermite interpolant with Fritsch-Carlson slopes.
class MonotoneMap {
 public:
  MonotoneMap() = default;
  MonotoneMap(std::vector<double> knots_t, std::vector<double> knots_g, std::vector<double> slopes,
              TailPolicy tails);

  std::span<const double> knots_t() const { return knots_t_; }
  std::span<const double> knots_g() const { return knots_g_; }
  std::span<const double> slopes() const { return slopes_; }
  TailPolicy tails() const { return tails_; }
  std::size_t size() const { return knots_t_.size(); }

  double forward(double t) const;
  /// t with forward(t) = z; outside [g(min), g(max)] follows the tail policy.
  double inverse(double z) const;

 private:
  double hermite(std::size_t k, double t) const;
  double hermite_deriv(std::size_t k, double t) const;

  std::vector<double> knots_t_;
  std::vector<double> knots_g_;
  std::vector<double> slopes_;
  TailPolicy tails_ = TailPolicy::Clamp;
};

MonotoneMap fit_monotone_interpolant(std::vector<double> knots_t, std::vector<double> knots_g,
                                     TailPolicy tails = TailPolicy::Clamp);

/// Transformation draw g*(t) = Fz^{-1}(n/(n+1) Fy(t)) evaluated at the atoms of
/// Fy and interpolated monotonically.
MonotoneMap compose_transform(const MixtureCdf& Fz, const EmpiricalCdf& Fy, std::size_t n,
                              TailPolicy tails = TailPolicy::Clamp);

/// Knot values only: Fz^{-1}(n/(n+1) * cumulative weights of Fy).
std::vector<double> compose_knot_values(const MixtureCdf& Fz, const EmpiricalCdf& Fy, std::size_t n);

double inverse_map(const MonotoneMap& g, double z);

/// mu + sigma * g, refitted.
MonotoneMap location_scale_map(const MonotoneMap& g, double mu, double sigma);

/// One joint draw of (Fz, Fy) composed into g*, with g* evaluated at every
/// observation and the latent mixture weights kept for importance weighting.
struct TransformDraw {
  MonotoneMap g;
  std::vector<double> latent;
  std::vector<double> latent_weights;
};

TransformDraw sample_transform(const ResponseAtoms& atoms, const ComponentsPtr& components, const TablePtr& table,
                               TailPolicy tails, RandomStream& rng);

// ---------------------------------------------------------------------------
// Importance resampling

struct SirResult {
  std::vector<std::size_t> indices;
  double ess = 0.0;
};

/// (sum w)^2 / sum w^2 for w = exp(log_weights - max).
double effective_sample_size(std::span<const double> log_weights);

/// Draws `keep` indices with replacement, proportional to exp(log_weight).
SirResult sir_resample(std::span<const double> log_weights, std::size_t keep, RandomStream& rng);

// ---------------------------------------------------------------------------
// Approximate posterior used only to build the latent components

enum class ApproxSource { Prior, LaplacePlugin, PointMass };

struct ApproxPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  ApproxSource source = ApproxSource::Prior;

  /// Throws NumericalError unless cov is symmetric and PSD to 1e-10.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Two-stage point estimate of the transformation

template <class Approx>
struct PointEstimate {
  MonotoneMap transform;
  std::vector<double> latent;  // transform evaluated at each observation
  Approx approx;
};

/// n/(n+1)-rescaled empirical CDF at each atom.
std::vector<double> rescaled_empirical_targets(const ResponseAtoms& atoms);

/// Two-stage estimate: start from a standard normal latent CDF, fit the
/// approximation to the implied latent data, rebuild the latent CDF as the
/// equal-weight mixture of the resulting components, recompute the
/// transformation and refit the approximation.
///   fit:   std::span<const double> latent -> Approx
///   build: const Approx& -> ComponentsPtr
template <class Approx, class Fit, class Build>
PointEstimate<Approx> point_estimate_transform(const ResponseAtoms& atoms, Fit&& fit, Build&& build,
                                               TailPolicy tails = TailPolicy::Clamp) {
  if (atoms.num_atoms() < 2) throw InsufficientDataError("need at least two distinct responses");
  const std::vector<double> targets = rescaled_empirical_targets(atoms);
  const std::size_t n = atoms.num_obs();

  auto at_obs = [&](const std::vector<double>& knot_values) {
    std::vector<double> latent(n);
    for (std::size_t i = 0; i < n; ++i) latent[i] = knot_values[atoms.atom_of[i]];
    return latent;
  };

  std::vector<double> g_stage1(targets.size());
  for (std::size_t j = 0; j < targets.size(); ++j) g_stage1[j] = normal_quantile(targets[j]);
  Approx approx1 = fit(std::span<const double>(at_obs(g_stage1)));

  ComponentsPtr comps = build(approx1);
  if (comps->size() != n) throw ConfigError("component count must equal the number of observations");
  const MixtureCdf mean_mixture(comps, std::vector<double>(n, 1.0 / static_cast<double>(n)));
  std::vector<double> g_stage2 = invert_mixture_sorted(mean_mixture, targets);

  std::vector<double> latent = at_obs(g_stage2);
  Approx approx2 = fit(std::span<const double>(latent));
  return {fit_monotone_interpolant(atoms.values, std::move(g_stage2), tails), std::move(latent),
          std::move(approx2)};
}

// ---------------------------------------------------------------------------
// Text serialization of a MonotoneMap: a header line "# tails=clamp|linear",
// a column header "knot_t,knot_g", then one row per knot (17 significant
// digits). Slopes are refitted on read.

std::string format_monotone_map(const MonotoneMap& g);
MonotoneMap parse_monotone_map(const std::string& text);

}  // namespace sbtrans
