#include "sbtrans/sblm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "sbtrans/errors.hpp"
#include "sbtrans/linalg.hpp"
#include "sbtrans/parallel.hpp"

namespace sbtrans {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// Stream indices reserved for one-off work inside a run; draws use 0..S-1.
constexpr std::uint64_t kPriorDrawStream = ~std::uint64_t{0};
constexpr std::uint64_t kResampleStream = ~std::uint64_t{0} - 1;

Eigen::MatrixXd gram_inverse(const Eigen::MatrixXd& X, const char* context) {
  const auto llt = cholesky_or_throw(X.transpose() * X, context);
  return llt.solve(Eigen::MatrixXd::Identity(X.cols(), X.cols()));
}

// log sum_j w_j N(z; mean_j, var_j), falling back to log-sum-exp on underflow.
double log_mixture_density(double z, std::span<const double> w, const double* mean, const double* var,
                           std::size_t stride_mean, bool unit_var) {
  const std::size_t n = w.size();
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double v = unit_var ? 1.0 : var[j];
    const double r = z - mean[j * stride_mean];
    total += w[j] * std::exp(-0.5 * r * r / v) / std::sqrt(v);
  }
  if (total > 1e-280) return std::log(total) - kLogSqrt2Pi;
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double v = unit_var ? 1.0 : var[j];
    const double r = z - mean[j * stride_mean];
    terms[j] = w[j] > 0.0 ? std::log(w[j]) - 0.5 * r * r / v - 0.5 * std::log(v)
                          : -std::numeric_limits<double>::infinity();
    top = std::max(top, terms[j]);
  }
  if (!std::isfinite(top)) return -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - top);
  return top + std::log(acc) - kLogSqrt2Pi;
}

}  // namespace

void SblmConfig::validate() const {
  if (psi && !(*psi > 0.0)) throw ConfigError("psi must be positive");
  if (!(a_sigma > 0.0) || !(b_sigma > 0.0)) throw ConfigError("sigma prior parameters must be positive");
  if (approx_source == ApproxSource::PointMass) throw ConfigError("sblm supports the prior or Laplace approximation");
  if (num_draws == 0) throw ConfigError("num_draws must be positive");
  if (!(latent_scale > 0.0)) throw ConfigError("latent_scale must be positive");
  if (sir_enabled) {
    if (sir_keep_for() == 0 || sir_keep_for() >= num_draws) throw ConfigError("sir_keep must be in [1, num_draws)");
    if (prior_draws == 0) throw ConfigError("prior_draws must be positive");
  }
}

ApproxPosterior sblm_prior_approx(const Eigen::MatrixXd& X, double psi) {
  if (!(psi > 0.0)) throw ConfigError("psi must be positive");
  ApproxPosterior out;
  out.source = ApproxSource::Prior;
  out.mean = Eigen::VectorXd::Zero(X.cols());
  out.cov = X.cols() > 0 ? Eigen::MatrixXd(psi * gram_inverse(X, "g-prior covariance")) : Eigen::MatrixXd(0, 0);
  return out;
}

ApproxPosterior sblm_laplace_approx(const Eigen::MatrixXd& X, double psi, std::span<const double> z) {
  if (!(psi > 0.0)) throw ConfigError("psi must be positive");
  if (static_cast<std::size_t>(X.rows()) != z.size()) throw ConfigError("latent values must match the design rows");
  ApproxPosterior out;
  out.source = ApproxSource::LaplacePlugin;
  if (X.cols() == 0) {
    out.mean = Eigen::VectorXd(0);
    out.cov = Eigen::MatrixXd(0, 0);
    return out;
  }
  out.cov = psi / (1.0 + psi) * gram_inverse(X, "Laplace approximation");
  const Eigen::Map<const Eigen::VectorXd> zv(z.data(), static_cast<Eigen::Index>(z.size()));
  out.mean = out.cov * (X.transpose() * zv);
  return out;
}

ComponentsPtr sblm_fzx_components(const Eigen::MatrixXd& X, const ApproxPosterior& approx) {
  if (approx.mean.size() != X.cols()) throw ConfigError("approximation dimension does not match the design");
  approx.validate();
  const auto n = static_cast<std::size_t>(X.rows());
  std::vector<double> means(n, 0.0);
  std::vector<double> sds(n, 1.0);
  if (X.cols() > 0) {
    const Eigen::VectorXd m = X * approx.mean;
    const Eigen::VectorXd quad = (X * approx.cov).cwiseProduct(X).rowwise().sum();
    for (std::size_t i = 0; i < n; ++i) {
      const double var = 1.0 + quad[static_cast<Eigen::Index>(i)];
      if (!(var > 0.0)) throw NumericalError("component variance is not positive");
      means[i] = m[static_cast<Eigen::Index>(i)];
      sds[i] = std::sqrt(var);
    }
  }
  return std::make_shared<NormalComponents>(std::move(means), std::move(sds));
}

// ---------------------------------------------------------------------------

GPriorSampler::GPriorSampler(Eigen::MatrixXd X, double psi, double a_sigma, double b_sigma)
    : X_(std::move(X)), psi_(psi), a_(a_sigma), b_(b_sigma) {
  if (!(psi_ > 0.0)) throw ConfigError("psi must be positive");
  if (!(a_ > 0.0) || !(b_ > 0.0)) throw ConfigError("sigma prior parameters must be positive");
  if (X_.rows() <= X_.cols()) throw InsufficientDataError("need more observations than regression coefficients");
  gram_ = cholesky_or_throw(X_.transpose() * X_, "g-prior Gram matrix (is the design rank deficient?)");
}

std::pair<double, double> GPriorSampler::precision_shape_rate(const Eigen::VectorXd& z) const {
  const Eigen::VectorXd b = X_.transpose() * z;
  const double shrink = psi_ / (1.0 + psi_);
  const double fitted = b.dot(gram_.solve(b));
  const double ssr = std::max(z.squaredNorm() - shrink * fitted, 0.0);
  return {a_ + 0.5 * static_cast<double>(z.size()), b_ + 0.5 * ssr};
}

Eigen::VectorXd GPriorSampler::theta_mean(const Eigen::VectorXd& z) const {
  return psi_ / (1.0 + psi_) * gram_.solve(X_.transpose() * z);
}

std::pair<double, Eigen::VectorXd> GPriorSampler::draw(const Eigen::VectorXd& z, RandomStream& rng) const {
  if (z.size() != X_.rows()) throw ConfigError("latent values must match the design rows");
  const auto [shape, rate] = precision_shape_rate(z);
  const double precision = rng.gamma(shape, rate);
  const double sigma = 1.0 / std::sqrt(precision);
  Eigen::VectorXd eta(X_.cols());
  for (Eigen::Index k = 0; k < eta.size(); ++k) eta[k] = rng.normal();
  const double scale = sigma * std::sqrt(psi_ / (1.0 + psi_));
  Eigen::VectorXd theta = theta_mean(z) + scale * gram_.matrixU().solve(eta);
  return {sigma, std::move(theta)};
}

std::pair<double, Eigen::VectorXd> sblm_draw_sigma_theta(const Eigen::MatrixXd& X_with_intercept,
                                                        const Eigen::VectorXd& z, double psi, double a_sigma,
                                                        double b_sigma, RandomStream& rng) {
  return GPriorSampler(X_with_intercept, psi, a_sigma, b_sigma).draw(z, rng);
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd sblm_prior_linear_predictors(const Eigen::MatrixXd& X, const ApproxPosterior& prior,
                                             std::size_t draws, RandomStream& rng) {
  const auto d = X.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(X.rows(), static_cast<Eigen::Index>(draws));
  if (d == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(prior.cov);
  const Eigen::MatrixXd root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  Eigen::VectorXd eta(d);
  for (std::size_t s = 0; s < draws; ++s) {
    for (Eigen::Index k = 0; k < d; ++k) eta[k] = rng.normal();
    out.col(static_cast<Eigen::Index>(s)) = X * (prior.mean + root * eta);
  }
  return out;
}

double sblm_log_importance_weight(std::span<const double> latent, std::span<const double> latent_weights,
                                  const Eigen::MatrixXd& prior_predictors, const Eigen::MatrixXd& X,
                                  const ApproxPosterior& prior) {
  const std::size_t n = latent.size();
  if (latent_weights.size() != n || static_cast<std::size_t>(prior_predictors.rows()) != n ||
      static_cast<std::size_t>(X.rows()) != n) {
    throw ConfigError("importance weight inputs disagree in size");
  }
  const auto S = static_cast<std::size_t>(prior_predictors.cols());
  if (S == 0) throw ConfigError("no prior draws for the importance weight");

  std::vector<double> per_draw(S);
  for (std::size_t s = 0; s < S; ++s) {
    const double* col = prior_predictors.col(static_cast<Eigen::Index>(s)).data();
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) ll += log_mixture_density(latent[i], latent_weights, col, nullptr, 1, true);
    per_draw[s] = ll;
  }
  const double top = *std::max_element(per_draw.begin(), per_draw.end());
  double numerator = -std::numeric_limits<double>::infinity();
  if (std::isfinite(top)) {
    double acc = 0.0;
    for (double v : per_draw) acc += std::exp(v - top);
    numerator = top + std::log(acc / static_cast<double>(S));
  }

  std::vector<double> means(n, 0.0);
  std::vector<double> vars(n, 1.0);
  if (X.cols() > 0) {
    const Eigen::VectorXd m = X * prior.mean;
    const Eigen::VectorXd quad = (X * prior.cov).cwiseProduct(X).rowwise().sum();
    for (std::size_t j = 0; j < n; ++j) {
      means[j] = m[static_cast<Eigen::Index>(j)];
      vars[j] = 1.0 + quad[static_cast<Eigen::Index>(j)];
    }
  }
  double denominator = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    denominator += log_mixture_density(latent[i], latent_weights, means.data(), vars.data(), 1, false);
  }
  if (!std::isfinite(numerator)) return numerator;
  return numerator - denominator;
}

double sblm_log_importance_weight(const MonotoneMap& g, std::span<const double> latent_weights,
                                  const Eigen::MatrixXd& prior_predictors, const Eigen::MatrixXd& X,
                                  std::span<const double> y, const ApproxPosterior& prior) {
  std::vector<double> latent(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) latent[i] = g.forward(y[i]);
  return sblm_log_importance_weight(latent, latent_weights, prior_predictors, X, prior);
}

// ---------------------------------------------------------------------------

SblmDraws sblm_run(const Dataset& data, const SblmConfig& config, const Eigen::MatrixXd& query,
                   const RandomStream& rng) {
  data.validate();
  config.validate();
  const std::size_t n = data.n();
  const auto atoms = ResponseAtoms::from(std::span<const double>(data.y.data(), n));
  if (atoms.num_atoms() < 2) throw InsufficientDataError("need at least two distinct responses");
  if (query.rows() > 0 && query.cols() != data.X.cols()) throw InputError("query points have the wrong dimension");
  const double psi = config.psi_for(n);
  const Eigen::MatrixXd& X = data.X;

  SblmDraws out;
  if (config.approx_source == ApproxSource::Prior) {
    out.approx = sblm_prior_approx(X, psi);
  } else {
    auto fit = [&](std::span<const double> z) { return sblm_laplace_approx(X, psi, z); };
    auto build = [&](const ApproxPosterior& a) { return sblm_fzx_components(X, a); };
    out.approx = point_estimate_transform<ApproxPosterior>(atoms, fit, build, config.tails).approx;
  }
  ComponentsPtr components = sblm_fzx_components(X, out.approx);
  if (config.latent_scale != 1.0) {
    components = std::make_shared<LocationScaleComponents>(components, 0.0, config.latent_scale);
  }
  const auto table = std::make_shared<const ComponentTable>(*components);
  const GPriorSampler sampler(with_intercept(X), psi, config.a_sigma, config.b_sigma);

  ApproxPosterior prior;
  Eigen::MatrixXd prior_predictors;
  if (config.sir_enabled) {
    prior = sblm_prior_approx(X, psi);
    RandomStream prior_rng = rng.substream(kPriorDrawStream);
    prior_predictors = sblm_prior_linear_predictors(X, prior, config.prior_draws, prior_rng);
  }

  const std::size_t S = config.num_draws;
  const auto m = query.rows();
  const Eigen::MatrixXd Q = m > 0 ? with_intercept(query) : Eigen::MatrixXd(0, X.cols() + 1);
  out.g_draws.resize(S);
  out.theta.resize(static_cast<Eigen::Index>(S), X.cols() + 1);
  out.sigma.resize(static_cast<Eigen::Index>(S));
  out.predictive.resize(static_cast<Eigen::Index>(S), m);
  out.log_weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(S));

  parallel_for(S, [&](std::size_t s) {
    RandomStream sub = rng.substream(s);
    TransformDraw td = sample_transform(atoms, components, table, config.tails, sub);
    const Eigen::Map<const Eigen::VectorXd> z(td.latent.data(), static_cast<Eigen::Index>(n));
    auto [sigma, theta] = sampler.draw(z, sub);
    const auto row = static_cast<Eigen::Index>(s);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double zt = Q.row(j).dot(theta) + sigma * sub.normal();
      out.predictive(row, j) = td.g.inverse(zt);
    }
    if (config.sir_enabled) {
      out.log_weights[row] = sblm_log_importance_weight(td.latent, td.latent_weights, prior_predictors, X, prior);
    }
    out.theta.row(row) = theta.transpose();
    out.sigma[row] = sigma;
    out.g_draws[s] = std::move(td.g);
  });

  if (config.sir_enabled) {
    RandomStream sir_rng = rng.substream(kResampleStream);
    out.sir = sir_resample(std::span<const double>(out.log_weights.data(), S), config.sir_keep_for(), sir_rng);
  }
  return out;
}

}  // namespace sbtrans
