#include "sbtrans/sbgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "sbtrans/errors.hpp"
#include "sbtrans/linalg.hpp"
#include "sbtrans/parallel.hpp"

namespace sbtrans {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;
constexpr double kLogBound = 12.0;

bool valid_smoothness(double nu) { return nu == 0.5 || nu == 1.5 || nu == 2.5; }

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd D(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) D(i, j) = (A.row(i) - B.row(j)).norm();
  }
  return D;
}

Eigen::MatrixXd correlation_from(const Eigen::MatrixXd& D, double range, double nu) {
  return D.unaryExpr([&](double d) { return matern_correlation(d / range, nu); });
}

// (K + I) with K = variance * (R + jitter I).
Eigen::MatrixXd noisy_kernel(const Eigen::MatrixXd& D, double variance, double range, double nu, double jitter) {
  Eigen::MatrixXd C = variance * correlation_from(D, range, nu);
  C.diagonal().array() += variance * jitter + 1.0;
  return C;
}

struct ProfileResult {
  double log_lik;
  double mean;
  double noise_var;
};

ProfileResult profile_from_distances(const Eigen::MatrixXd& D, const Eigen::VectorXd& z, double variance,
                                     double range, double nu, double jitter) {
  const auto n = z.size();
  const Eigen::LLT<Eigen::MatrixXd> llt(noisy_kernel(D, variance, range, nu, jitter));
  if (llt.info() != Eigen::Success) throw LinearAlgebraError("Gaussian process covariance is not positive definite");
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const Eigen::VectorXd c1 = llt.solve(ones);
  const double mean = c1.dot(z) / c1.sum();
  const Eigen::VectorXd r = z - mean * ones;
  const double quad = r.dot(llt.solve(r));
  const double noise_var = std::max(quad / static_cast<double>(n), 1e-300);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double ll = -0.5 * static_cast<double>(n) * (kLog2Pi + std::log(noise_var) + 1.0) - 0.5 * log_det;
  return {ll, mean, noise_var};
}

struct Objective {
  const Eigen::MatrixXd* D;
  const Eigen::VectorXd* z;
  double nu;
  double jitter;
  double log_range_lo;
  double log_range_hi;
};

// Negative profile log likelihood in (log variance ratio, log range), with a
// quadratic wall outside the search box.
double negative_profile(const gsl_vector* x, void* data) {
  const auto* obj = static_cast<const Objective*>(data);
  const double lv = gsl_vector_get(x, 0);
  const double lr = gsl_vector_get(x, 1);
  const double cv = std::clamp(lv, -kLogBound, kLogBound);
  const double cr = std::clamp(lr, obj->log_range_lo, obj->log_range_hi);
  const double penalty = 1e3 * ((lv - cv) * (lv - cv) + (lr - cr) * (lr - cr));
  try {
    const auto p = profile_from_distances(*obj->D, *obj->z, std::exp(cv), std::exp(cr), obj->nu, obj->jitter);
    if (!std::isfinite(p.log_lik)) return GSL_POSINF;
    return -p.log_lik + penalty;
  } catch (const LinearAlgebraError&) {
    return GSL_POSINF;
  }
}

struct SimplexResult {
  double log_variance;
  double log_range;
  double value;
  int iterations;
  bool converged;
  double size;
};

SimplexResult run_simplex(Objective& obj, double lv0, double lr0, int max_iterations) {
  gsl_multimin_function f{&negative_profile, 2, &obj};
  gsl_vector* x = gsl_vector_alloc(2);
  gsl_vector* step = gsl_vector_alloc(2);
  gsl_vector_set(x, 0, lv0);
  gsl_vector_set(x, 1, lr0);
  gsl_vector_set_all(step, 1.0);
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2);
  gsl_multimin_fminimizer_set(s, &f, x, step);
  SimplexResult out{lv0, lr0, 0.0, 0, false, 0.0};
  for (int it = 1; it <= max_iterations; ++it) {
    out.iterations = it;
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    out.size = gsl_multimin_fminimizer_size(s);
    if (gsl_multimin_test_size(out.size, 1e-5) == GSL_SUCCESS) {
      out.converged = true;
      break;
    }
  }
  out.log_variance = std::clamp(gsl_vector_get(s->x, 0), -kLogBound, kLogBound);
  out.log_range = std::clamp(gsl_vector_get(s->x, 1), obj.log_range_lo, obj.log_range_hi);
  out.value = s->fval;
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return out;
}

}  // namespace

void MaternParams::validate() const {
  if (!(variance > 0.0) || !(range > 0.0) || !(noise_scale > 0.0)) {
    throw ConfigError("Matern variance, range and noise scale must be positive");
  }
  if (!valid_smoothness(smoothness)) throw ConfigError("Matern smoothness must be 0.5, 1.5 or 2.5");
  if (!std::isfinite(mean_const)) throw ConfigError("Matern mean must be finite");
}

double matern_correlation(double u, double smoothness) {
  if (smoothness == 0.5) return std::exp(-u);
  if (smoothness == 1.5) {
    const double a = std::sqrt(3.0) * u;
    return (1.0 + a) * std::exp(-a);
  }
  if (smoothness == 2.5) {
    const double a = std::sqrt(5.0) * u;
    return (1.0 + a + a * a / 3.0) * std::exp(-a);
  }
  throw ConfigError("Matern smoothness must be 0.5, 1.5 or 2.5");
}

double matern_cov(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, const MaternParams& params) {
  params.validate();
  if (x1.size() != x2.size()) throw ConfigError("points differ in dimension");
  return params.variance * matern_correlation((x1 - x2).norm() / params.range, params.smoothness);
}

Eigen::MatrixXd matern_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const MaternParams& params) {
  params.validate();
  if (A.cols() != B.cols()) throw ConfigError("points differ in dimension");
  return params.variance * correlation_from(pairwise_distances(A, B), params.range, params.smoothness);
}

// ---------------------------------------------------------------------------

GpFit::GpFit(Eigen::MatrixXd X, Eigen::VectorXd z, MaternParams params, double jitter)
    : X_(std::move(X)), z_(std::move(z)), params_(params), jitter_(jitter) {
  params_.validate();
  if (X_.rows() != z_.size()) throw ConfigError("latent values must match the inputs");
  const auto n = z_.size();
  const Eigen::MatrixXd D = pairwise_distances(X_, X_);
  llt_ = cholesky_or_throw(noisy_kernel(D, params_.variance, params_.range, params_.smoothness, jitter_),
                           "Gaussian process covariance");
  ones_solved_ = llt_.solve(Eigen::VectorXd::Ones(n));
  ones_precision_ = ones_solved_.sum();
  const Eigen::VectorXd r = z_.array() - params_.mean_const;
  // K (K + I)^{-1} r = r - (K + I)^{-1} r.
  fitted_ = z_ - llt_.solve(r);
  const Eigen::MatrixXd Linv =
      llt_.matrixL().solve(Eigen::MatrixXd::Identity(n, n));
  cov_diag_ = (1.0 - Linv.colwise().squaredNorm().array()).matrix().transpose();
  const double noise_var = params_.noise_scale * params_.noise_scale;
  const double log_det = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  log_lik_ = -0.5 * static_cast<double>(n) * (kLog2Pi + std::log(noise_var)) - 0.5 * log_det -
             0.5 * r.dot(llt_.solve(r)) / noise_var;
}

Eigen::VectorXd GpFit::predict_mean_cross(const Eigen::MatrixXd& cross, const Eigen::VectorXd& z) const {
  if (z.size() != X_.rows() || cross.rows() != X_.rows()) throw ConfigError("prediction inputs disagree in size");
  const double mean = ones_solved_.dot(z) / ones_precision_;
  const Eigen::VectorXd alpha = llt_.solve((z.array() - mean).matrix());
  return (cross.transpose() * alpha).array() + mean;
}

Eigen::VectorXd GpFit::predict_mean(const Eigen::MatrixXd& query, const Eigen::VectorXd& z) const {
  return predict_mean_cross(matern_matrix(X_, query, params_), z);
}

Eigen::MatrixXd GpFit::predict_cov(const Eigen::MatrixXd& query) const {
  const Eigen::MatrixXd cross = matern_matrix(X_, query, params_);
  const Eigen::MatrixXd V = llt_.matrixL().solve(cross);
  Eigen::MatrixXd cov = matern_matrix(query, query, params_) - V.transpose() * V;
  return 0.5 * (cov + cov.transpose());
}

Eigen::VectorXd GpFit::predict_var(const Eigen::MatrixXd& query) const {
  const Eigen::MatrixXd cross = matern_matrix(X_, query, params_);
  const Eigen::MatrixXd V = llt_.matrixL().solve(cross);
  return (params_.variance - V.colwise().squaredNorm().array()).cwiseMax(0.0).matrix().transpose();
}

double gp_profile_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& z, double variance, double range,
                                 double smoothness, double jitter, double* mean_out, double* noise_out) {
  if (!(variance > 0.0) || !(range > 0.0)) throw ConfigError("variance ratio and range must be positive");
  if (!valid_smoothness(smoothness)) throw ConfigError("Matern smoothness must be 0.5, 1.5 or 2.5");
  const auto p = profile_from_distances(pairwise_distances(X, X), z, variance, range, smoothness, jitter);
  if (mean_out) *mean_out = p.mean;
  if (noise_out) *noise_out = std::sqrt(p.noise_var);
  return p.log_lik;
}

GpFit gp_mle_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& z, const GpFitOptions& options) {
  const auto n = z.size();
  if (X.rows() != n) throw InputError("covariates and latent values disagree in length");
  if (n < 10) throw InsufficientDataError("Gaussian process fit needs at least 10 observations");
  if (!X.allFinite() || !z.allFinite()) throw InputError("Gaussian process inputs must be finite");
  if (options.max_iterations < 1) throw ConfigError("max_iterations must be positive");
  if (options.smoothness && !valid_smoothness(*options.smoothness)) {
    throw ConfigError("Matern smoothness must be 0.5, 1.5 or 2.5");
  }

  const Eigen::MatrixXd D = pairwise_distances(X, X);
  const double dmax = D.maxCoeff();
  if (!(dmax > 0.0)) throw InputError("Gaussian process inputs are all identical");
  // Ranges well below the typical nearest-neighbor spacing make K act as extra
  // white noise, which the likelihood cannot tell apart from the noise term.
  std::vector<double> nearest;
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i && D(i, j) > 0.0) best = std::min(best, D(i, j));
    }
    if (std::isfinite(best)) nearest.push_back(best);
  }
  std::nth_element(nearest.begin(), nearest.begin() + nearest.size() / 2, nearest.end());
  const double spacing = nearest[nearest.size() / 2];
  const double log_lo = std::log(0.5 * spacing);
  const double log_hi = std::log(dmax * 1e2);

  std::vector<double> grid = options.smoothness ? std::vector<double>{*options.smoothness}
                                                : std::vector<double>{0.5, 1.5, 2.5};
  gsl_error_handler_t* previous = gsl_set_error_handler_off();
  bool found = false;
  SimplexResult best{};
  double best_nu = grid.front();
  std::ostringstream diag;
  for (double nu : grid) {
    Objective obj{&D, &z, nu, options.jitter, log_lo, log_hi};
    for (double frac : {0.1, 0.5}) {
      const SimplexResult r = run_simplex(obj, 0.0, std::log(frac * dmax), options.max_iterations);
      diag << " nu=" << nu << " start=" << frac << " iters=" << r.iterations << " size=" << r.size
           << " nll=" << r.value << (r.converged ? "" : " (not converged)") << ";";
      if (!r.converged || !std::isfinite(r.value)) continue;
      if (!found || r.value < best.value) {
        best = r;
        best_nu = nu;
        found = true;
      }
    }
  }
  gsl_set_error_handler(previous);
  if (!found) throw NumericalError("Gaussian process likelihood optimization did not converge:" + diag.str());

  // Prefer the signal-free model when it fits as well.
  const double null_nll =
      -profile_from_distances(D, z, std::exp(-kLogBound), std::exp(best.log_range), best_nu, options.jitter).log_lik;
  if (null_nll <= best.value + 1e-6) best.log_variance = -kLogBound;

  MaternParams params;
  params.variance = std::exp(best.log_variance);
  params.range = std::exp(best.log_range);
  params.smoothness = best_nu;
  const auto p = profile_from_distances(D, z, params.variance, params.range, params.smoothness, options.jitter);
  params.mean_const = p.mean;
  params.noise_scale = std::sqrt(p.noise_var);
  GpFit fit(X, z, params, options.jitter);
  fit.iterations = best.iterations;
  return fit;
}

ComponentsPtr sbgp_fzx_components(const GpFit& fit) {
  const auto& f = fit.fitted_mean();
  const auto& v = fit.cov_diag();
  const double s = fit.params().noise_scale;
  std::vector<double> means(static_cast<std::size_t>(f.size()));
  std::vector<double> sds(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    means[i] = f[k];
    sds[i] = s * std::sqrt(1.0 + std::max(v[k], 0.0));
  }
  return std::make_shared<NormalComponents>(std::move(means), std::move(sds));
}

// ---------------------------------------------------------------------------

void SbgpConfig::validate() const {
  if (num_draws == 0) throw ConfigError("num_draws must be positive");
  if (fit.max_iterations < 1) throw ConfigError("max_iterations must be positive");
  if (!(fit.jitter >= 0.0)) throw ConfigError("jitter must be nonnegative");
}

SbgpDraws sbgp_run(const Dataset& data, const Eigen::MatrixXd& query, const SbgpConfig& config,
                   const RandomStream& rng) {
  data.validate();
  config.validate();
  const std::size_t n = data.n();
  const auto atoms = ResponseAtoms::from(std::span<const double>(data.y.data(), n));
  if (atoms.num_atoms() < 2) throw InsufficientDataError("need at least two distinct responses");
  if (query.rows() > 0 && query.cols() != data.X.cols()) throw InputError("query points have the wrong dimension");
  const Eigen::MatrixXd& X = data.X;

  auto fit = [&](std::span<const double> z) {
    return gp_mle_fit(X, Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size())),
                      config.fit);
  };
  auto build = [](const GpFit& f) { return sbgp_fzx_components(f); };
  PointEstimate<GpFit> pe = point_estimate_transform<GpFit>(atoms, fit, build, config.tails);

  SbgpDraws out;
  out.fit = std::move(pe.approx);
  out.point_transform = std::move(pe.transform);
  const ComponentsPtr components = sbgp_fzx_components(out.fit);
  const auto table = std::make_shared<const ComponentTable>(*components);

  const std::size_t S = config.num_draws;
  const auto m = query.rows();
  const double sigma = out.fit.params().noise_scale;
  const Eigen::MatrixXd cross = m > 0 ? matern_matrix(X, query, out.fit.params()) : Eigen::MatrixXd(n, 0);
  const Eigen::Map<const Eigen::VectorXd> z_hat(pe.latent.data(), static_cast<Eigen::Index>(n));
  const Eigen::VectorXd f_query = m > 0 ? out.fit.predict_mean_cross(cross, z_hat) : Eigen::VectorXd(0);
  Eigen::MatrixXd f_root;
  if (config.mode == SbgpMode::SampleF && m > 0) {
    Eigen::MatrixXd cov = out.fit.predict_cov(query);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    f_root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  out.g_draws.resize(S);
  out.predictive.resize(static_cast<Eigen::Index>(S), m);
  parallel_for(S, [&](std::size_t s) {
    RandomStream sub = rng.substream(s);
    TransformDraw td = sample_transform(atoms, components, table, config.tails, sub);
    const auto row = static_cast<Eigen::Index>(s);
    Eigen::VectorXd f = f_query;
    if (config.mode == SbgpMode::SampleF && m > 0) {
      // Separate child stream, so both modes share the transformation and
      // noise draws.
      RandomStream f_rng = sub.substream(0);
      Eigen::VectorXd eta(m);
      for (Eigen::Index j = 0; j < m; ++j) eta[j] = f_rng.normal();
      f += sigma * (f_root * eta);
    }
    for (Eigen::Index j = 0; j < m; ++j) out.predictive(row, j) = td.g.inverse(f[j] + sigma * sub.normal());
    out.g_draws[s] = std::move(td.g);
  });
  return out;
}

}  // namespace sbtrans
