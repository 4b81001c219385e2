#include "sbtrans/sbqr.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "sbtrans/dist.hpp"
#include "sbtrans/errors.hpp"
#include "sbtrans/linalg.hpp"
#include "sbtrans/parallel.hpp"

namespace sbtrans {

namespace {

// Stream indices reserved inside a run; transformation draws use 0..T-1.
constexpr std::uint64_t kMixingStream = ~std::uint64_t{0};
constexpr std::uint64_t kChainStream = ~std::uint64_t{0} - 1;

void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
}

double sample_sd(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / std::max(n - 1.0, 1.0));
}

// Gaussian-smoothed check loss rho(r) = r (tau - Phi(-r/h)) + h phi(r/h).
double smoothed_loss(const Eigen::VectorXd& r, double tau, double h) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double u = r[i] / h;
    total += r[i] * (tau - normal_cdf(-u)) + h * normal_pdf(u);
  }
  return total;
}

}  // namespace

void SbqrConfig::validate() const {
  check_tau(tau);
  if (S_xi == 0) throw ConfigError("S_xi must be positive");
  if (num_draws == 0) throw ConfigError("num_draws must be positive");
  if (approx_source == ApproxSource::PointMass) throw ConfigError("sbqr supports the prior or plug-in approximation");
  if (prior && (prior->mean.size() != prior->cov.rows() || prior->cov.rows() != prior->cov.cols())) {
    throw ConfigError("prior mean and covariance disagree in size");
  }
}

GaussianPrior quantile_g_prior(const Eigen::MatrixXd& X_with_intercept, double psi) {
  if (!(psi > 0.0)) throw ConfigError("psi must be positive");
  const auto q = X_with_intercept.cols();
  const auto llt = cholesky_or_throw(X_with_intercept.transpose() * X_with_intercept, "quantile g-prior");
  return {Eigen::VectorXd::Zero(q), psi * llt.solve(Eigen::MatrixXd::Identity(q, q))};
}

// ---------------------------------------------------------------------------

ComponentsPtr sbqr_fzx_components(const Eigen::MatrixXd& X, const ApproxPosterior& approx, double tau,
                                  std::vector<double> xi) {
  check_tau(tau);
  if (approx.mean.size() != X.cols()) throw ConfigError("approximation dimension does not match the design");
  approx.validate();
  const auto n = static_cast<std::size_t>(X.rows());
  std::vector<double> means(n, 0.0);
  std::vector<double> extra(n, 0.0);
  if (X.cols() > 0) {
    const Eigen::VectorXd m = X * approx.mean;
    const Eigen::VectorXd quad = (X * approx.cov).cwiseProduct(X).rowwise().sum();
    for (std::size_t i = 0; i < n; ++i) {
      means[i] = m[static_cast<Eigen::Index>(i)];
      extra[i] = std::max(quad[static_cast<Eigen::Index>(i)], 0.0);
    }
  }
  const AldConstants k = ald_expansion_constants(tau);
  return std::make_shared<ScaleMixtureComponents>(std::move(means), std::move(extra), std::move(xi), k.a_tau,
                                                  k.b_tau);
}

ComponentsPtr sbqr_fzx_components(const Eigen::MatrixXd& X, const ApproxPosterior& approx, double tau,
                                  std::size_t S_xi, RandomStream& rng) {
  if (S_xi == 0) throw ConfigError("S_xi must be positive");
  std::vector<double> xi(S_xi);
  for (double& v : xi) v = rng.exponential();
  return sbqr_fzx_components(X, approx, tau, std::move(xi));
}

// ---------------------------------------------------------------------------

std::pair<Eigen::MatrixXd, Eigen::VectorXd> sbqr_theta_conditional(const Eigen::MatrixXd& X_with_intercept,
                                                                   const Eigen::VectorXd& z,
                                                                   const Eigen::VectorXd& xi, double tau,
                                                                   const GaussianPrior& prior) {
  check_tau(tau);
  const Eigen::MatrixXd& X = X_with_intercept;
  const auto q = X.cols();
  if (z.size() != X.rows() || xi.size() != X.rows()) throw ConfigError("latent values and xi must match the design");
  if (prior.mean.size() != q || prior.cov.rows() != q || prior.cov.cols() != q) {
    throw ConfigError("prior dimension does not match the design");
  }
  for (Eigen::Index i = 0; i < xi.size(); ++i) {
    if (!(xi[i] > 0.0) || !std::isfinite(xi[i])) throw NumericalError("xi must be positive and finite");
  }
  const AldConstants k = ald_expansion_constants(tau);
  const Eigen::VectorXd w = (k.b_tau * k.b_tau * xi).cwiseInverse();
  const auto prior_llt = cholesky_or_throw(prior.cov, "coefficient prior covariance");
  const Eigen::MatrixXd prior_precision = prior_llt.solve(Eigen::MatrixXd::Identity(q, q));
  Eigen::MatrixXd Q = X.transpose() * w.asDiagonal() * X + prior_precision;
  Q = 0.5 * (Q + Q.transpose());
  const Eigen::VectorXd l =
      X.transpose() * (w.asDiagonal() * (z - k.a_tau * xi)) + prior_llt.solve(prior.mean);
  const auto llt = cholesky_or_throw(Q, "theta full conditional precision");
  return {Q, llt.solve(l)};
}

Eigen::VectorXd sbqr_gibbs_theta(const Eigen::MatrixXd& X_with_intercept, const Eigen::VectorXd& z,
                                 const Eigen::VectorXd& xi, double tau, const GaussianPrior& prior,
                                 RandomStream& rng) {
  const auto [Q, mean] = sbqr_theta_conditional(X_with_intercept, z, xi, tau, prior);
  const auto llt = cholesky_or_throw(Q, "theta full conditional precision");
  Eigen::VectorXd eta(mean.size());
  for (Eigen::Index k = 0; k < eta.size(); ++k) eta[k] = rng.normal();
  // Q = L L', so L'^{-1} eta has covariance Q^{-1}.
  return mean + llt.matrixU().solve(eta);
}

GigParams sbqr_xi_conditional(double residual, double tau) {
  check_tau(tau);
  if (!std::isfinite(residual)) throw NumericalError("residual is not finite");
  const AldConstants k = ald_expansion_constants(tau);
  const double b2 = k.b_tau * k.b_tau;
  return {0.5, residual * residual / b2, k.a_tau * k.a_tau / b2 + 2.0};
}

Eigen::VectorXd sbqr_gibbs_xi(const Eigen::MatrixXd& X_with_intercept, const Eigen::VectorXd& z,
                              const Eigen::VectorXd& theta, double tau, RandomStream& rng) {
  if (z.size() != X_with_intercept.rows() || theta.size() != X_with_intercept.cols()) {
    throw ConfigError("latent values or theta do not match the design");
  }
  const Eigen::VectorXd r = z - X_with_intercept * theta;
  Eigen::VectorXd xi(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const GigParams p = sbqr_xi_conditional(r[i], tau);
    if (!(p.psi > 0.0)) throw NumericalError("xi full conditional has nonpositive psi");
    double v;
    if (p.chi < 1e-300) {
      v = rng.gamma(p.lambda, 0.5 * p.psi);
    } else {
      v = sample_gig(p.lambda, p.chi, p.psi, rng);
    }
    // A draw can underflow to zero when chi is tiny; keep xi strictly positive.
    xi[i] = std::max(v, 1e-300);
  }
  return xi;
}

// ---------------------------------------------------------------------------

QuantileFit fit_smoothed_quantile(const Eigen::MatrixXd& X_with_intercept, std::span<const double> z, double tau,
                                  double width) {
  check_tau(tau);
  const Eigen::MatrixXd& X = X_with_intercept;
  const auto n = X.rows();
  const auto q = X.cols();
  if (static_cast<std::size_t>(n) != z.size()) throw ConfigError("latent values must match the design rows");
  if (n <= q) throw InsufficientDataError("need more observations than regression coefficients");
  const Eigen::Map<const Eigen::VectorXd> zv(z.data(), n);
  const double sd = sample_sd(z);
  if (!(sd > 0.0)) throw InsufficientDataError("response has zero spread");
  const double target = width > 0.0 ? width : 1e-3 * sd;

  // Start from least squares and shrink the bandwidth geometrically, solving
  // each smoothed problem by damped Newton from the previous solution.
  Eigen::VectorXd coef = cholesky_or_throw(X.transpose() * X, "quantile regression design").solve(X.transpose() * zv);
  double h = std::max(sd, target);
  while (true) {
    for (int iter = 0; iter < 100; ++iter) {
      const Eigen::VectorXd r = zv - X * coef;
      Eigen::VectorXd score(n);
      Eigen::VectorXd curv(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        score[i] = tau - normal_cdf(-r[i] / h);
        curv[i] = normal_pdf(r[i] / h) / h;
      }
      const Eigen::VectorXd grad = -X.transpose() * score;
      Eigen::MatrixXd H = X.transpose() * curv.asDiagonal() * X;
      H.diagonal().array() += 1e-12 * H.diagonal().maxCoeff() + 1e-300;
      const Eigen::VectorXd step = H.ldlt().solve(-grad);
      if (!step.allFinite()) break;
      const double f0 = smoothed_loss(r, tau, h);
      double t = 1.0;
      Eigen::VectorXd next = coef + step;
      while (t > 1e-10 && smoothed_loss(zv - X * next, tau, h) > f0 - 1e-4 * t * (-grad.dot(step))) {
        t *= 0.5;
        next = coef + t * step;
      }
      if (t <= 1e-10) break;
      coef = next;
      if ((t * step).norm() <= 1e-10 * (1.0 + coef.norm())) break;
    }
    if (h <= target) break;
    h = std::max(0.5 * h, target);
  }

  // Sandwich covariance A^{-1} B A^{-1} with a normal-reference kernel density
  // estimate of the residual density at zero.
  const Eigen::VectorXd r = zv - X * coef;
  std::vector<double> rv(r.data(), r.data() + n);
  std::vector<double> sorted = rv;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double p) {
    const double pos = p * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, static_cast<std::size_t>(n - 1));
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  double spread = sample_sd(rv);
  const double iqr = (quantile(0.75) - quantile(0.25)) / 1.34;
  if (iqr > 0.0) spread = std::min(spread, iqr);
  if (!(spread > 0.0)) spread = sd;
  const double hs = 1.06 * spread * std::pow(static_cast<double>(n), -0.2);
  Eigen::VectorXd dens(n);
  for (Eigen::Index i = 0; i < n; ++i) dens[i] = normal_pdf(r[i] / hs) / hs;
  const Eigen::MatrixXd A = X.transpose() * dens.asDiagonal() * X;
  const Eigen::MatrixXd B = tau * (1.0 - tau) * X.transpose() * X;
  const auto llt = cholesky_or_throw(A, "quantile regression sandwich");
  const Eigen::MatrixXd Ainv = llt.solve(Eigen::MatrixXd::Identity(q, q));
  Eigen::MatrixXd cov = Ainv * B * Ainv;
  cov = 0.5 * (cov + cov.transpose());
  return {coef, cov};
}

ApproxPosterior sbqr_plugin_approx(const Eigen::MatrixXd& X, std::span<const double> z, double tau) {
  const QuantileFit fit = fit_smoothed_quantile(with_intercept(X), z, tau);
  const auto d = X.cols();
  ApproxPosterior out;
  out.source = ApproxSource::LaplacePlugin;
  out.mean = fit.coef.tail(d);
  out.cov = fit.cov.bottomRightCorner(d, d);
  return out;
}

ApproxPosterior sbqr_prior_approx(const GaussianPrior& prior) {
  const auto d = prior.mean.size() - 1;
  if (d < 0) throw ConfigError("prior must include the intercept");
  ApproxPosterior out;
  out.source = ApproxSource::Prior;
  out.mean = prior.mean.tail(d);
  out.cov = prior.cov.bottomRightCorner(d, d);
  return out;
}

// ---------------------------------------------------------------------------

QuantileChain sbqr_chain(const Eigen::MatrixXd& X_with_intercept,
                         const std::function<const Eigen::VectorXd&(std::size_t)>& latent_at, std::size_t burn_in,
                         std::size_t retained, double tau, const GaussianPrior& prior, bool store_xi,
                         RandomStream& rng) {
  const auto n = X_with_intercept.rows();
  QuantileChain out;
  out.theta.resize(static_cast<Eigen::Index>(retained), X_with_intercept.cols());
  if (store_xi) out.xi.resize(static_cast<Eigen::Index>(retained), n);
  Eigen::VectorXd xi = Eigen::VectorXd::Ones(n);
  for (std::size_t t = 0; t < burn_in + retained; ++t) {
    const Eigen::VectorXd& z = latent_at(t);
    const Eigen::VectorXd theta = sbqr_gibbs_theta(X_with_intercept, z, xi, tau, prior, rng);
    xi = sbqr_gibbs_xi(X_with_intercept, z, theta, tau, rng);
    if (t >= burn_in) {
      const auto row = static_cast<Eigen::Index>(t - burn_in);
      out.theta.row(row) = theta.transpose();
      if (store_xi) out.xi.row(row) = xi.transpose();
    }
  }
  return out;
}

SbqrDraws sbqr_run(const Dataset& data, const SbqrConfig& config, const Eigen::MatrixXd& query,
                   const RandomStream& rng) {
  data.validate();
  config.validate();
  const std::size_t n = data.n();
  const auto atoms = ResponseAtoms::from(std::span<const double>(data.y.data(), n));
  if (atoms.num_atoms() < 2) throw InsufficientDataError("need at least two distinct responses");
  if (query.rows() > 0 && query.cols() != data.X.cols()) throw InputError("query points have the wrong dimension");
  const Eigen::MatrixXd& X = data.X;
  const Eigen::MatrixXd X1 = with_intercept(X);
  if (X1.rows() <= X1.cols()) throw InsufficientDataError("need more observations than regression coefficients");
  const GaussianPrior prior = config.prior ? *config.prior : quantile_g_prior(X1, static_cast<double>(n));
  if (prior.mean.size() != X1.cols()) throw ConfigError("prior dimension does not match the design");

  SbqrDraws out;
  RandomStream mixing_rng = rng.substream(kMixingStream);
  std::vector<double> xi_mix(config.S_xi);
  for (double& v : xi_mix) v = mixing_rng.exponential();
  if (config.approx_source == ApproxSource::Prior) {
    out.approx = sbqr_prior_approx(prior);
  } else {
    auto fit = [&](std::span<const double> z) { return sbqr_plugin_approx(X, z, config.tau); };
    auto build = [&](const ApproxPosterior& a) { return sbqr_fzx_components(X, a, config.tau, xi_mix); };
    out.approx = point_estimate_transform<ApproxPosterior>(atoms, fit, build, config.tails).approx;
  }
  const ComponentsPtr components = sbqr_fzx_components(X, out.approx, config.tau, xi_mix);
  const auto table = std::make_shared<const ComponentTable>(*components);

  // Transformation draws do not depend on the chain, so they are made up front.
  const std::size_t S = config.num_draws;
  const std::size_t T = config.burn_in + S;
  std::vector<Eigen::VectorXd> latent(T);
  out.g_draws.resize(S);
  parallel_for(T, [&](std::size_t t) {
    RandomStream sub = rng.substream(t);
    TransformDraw td = sample_transform(atoms, components, table, config.tails, sub);
    latent[t] = Eigen::Map<const Eigen::VectorXd>(td.latent.data(), static_cast<Eigen::Index>(n));
    if (t >= config.burn_in) out.g_draws[t - config.burn_in] = std::move(td.g);
  });

  RandomStream chain_rng = rng.substream(kChainStream);
  QuantileChain chain = sbqr_chain(
      X1, [&](std::size_t t) -> const Eigen::VectorXd& { return latent[t]; }, config.burn_in, S, config.tau, prior,
      config.store_xi, chain_rng);
  out.theta = std::move(chain.theta);
  out.xi = std::move(chain.xi);

  const auto m = query.rows();
  const AldConstants k = ald_expansion_constants(config.tau);
  out.predictive.resize(static_cast<Eigen::Index>(S), m);
  out.quantile_estimates = Eigen::VectorXd::Zero(m);
  if (m > 0) {
    const Eigen::MatrixXd Q = with_intercept(query);
    const Eigen::MatrixXd linear = out.theta * Q.transpose();
    for (std::size_t s = 0; s < S; ++s) {
      const auto row = static_cast<Eigen::Index>(s);
      const MonotoneMap& g = out.g_draws[s];
      for (Eigen::Index j = 0; j < m; ++j) {
        const double xi_new = chain_rng.exponential();
        const double zt = linear(row, j) + k.a_tau * xi_new + k.b_tau * std::sqrt(xi_new) * chain_rng.normal();
        out.predictive(row, j) = g.inverse(zt);
        out.quantile_estimates[j] += g.inverse(linear(row, j));
      }
    }
    out.quantile_estimates /= static_cast<double>(S);
  }
  return out;
}

}  // namespace sbtrans
