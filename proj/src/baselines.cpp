#include "sbtrans/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sbtrans/dist.hpp"
#include "sbtrans/errors.hpp"
#include "sbtrans/parallel.hpp"
#include "sbtrans/sblm.hpp"
#include "sbtrans/sbqr.hpp"
#include "sbtrans/simlab.hpp"

namespace sbtrans {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_query(const Dataset& data, const Eigen::MatrixXd& query) {
  if (query.rows() > 0 && query.cols() != data.X.cols()) throw InputError("query points have the wrong dimension");
}

void check_boxcox_domain(const Eigen::VectorXd& y) {
  if ((y.array() == 0.0).any()) throw InputError("Box-Cox transformation needs nonzero responses");
}

Eigen::VectorXd boxcox_vector(const Eigen::VectorXd& y, double lambda) {
  return y.unaryExpr([lambda](double v) { return boxcox(v, lambda); });
}

double boxcox_log_prior(double lambda, const BoxCoxConfig& c) {
  if (!(lambda > c.lower && lambda < c.upper)) return kNegInf;
  const double u = (lambda - c.prior_mean) / c.prior_sd;
  return -0.5 * u * u;
}

}  // namespace

void BoxCoxConfig::validate() const {
  if (!(lower < upper)) throw ConfigError("Box-Cox bounds must satisfy lower < upper");
  if (!(lower >= 0.0)) throw ConfigError("Box-Cox lower bound must be nonnegative");
  if (!(initial > lower && initial < upper)) throw ConfigError("Box-Cox initial value must lie inside the bounds");
  if (!(prior_sd > 0.0) || !(slice_width > 0.0)) throw ConfigError("Box-Cox prior SD and slice width must be positive");
}

double slice_sample(const std::function<double(double)>& log_density, double x0, double lower, double upper,
                    double width, RandomStream& rng) {
  if (!(x0 > lower && x0 < upper)) throw ConfigError("slice sampler must start inside its bounds");
  const double f0 = log_density(x0);
  if (!std::isfinite(f0)) throw NumericalError("slice sampler started at a point of zero density");
  const double level = f0 - rng.exponential();
  double left = x0 - width * rng.uniform();
  double right = left + width;
  constexpr int kMaxSteps = 50;
  for (int k = 0; k < kMaxSteps && left > lower && log_density(left) > level; ++k) left -= width;
  for (int k = 0; k < kMaxSteps && right < upper && log_density(right) > level; ++k) right += width;
  left = std::max(left, lower);
  right = std::min(right, upper);
  for (int k = 0; k < 200; ++k) {
    const double x = left + (right - left) * rng.uniform();
    if (x > lower && x < upper && log_density(x) > level) return x;
    (x < x0 ? left : right) = x;
  }
  return x0;
}

double boxcox_log_jacobian(const Eigen::VectorXd& y, double lambda) {
  return (lambda - 1.0) * y.array().abs().log().sum();
}

BaselineDraws baseline_blm(const Dataset& data, const Eigen::MatrixXd& query, const BlmConfig& config,
                           const RandomStream& rng) {
  data.validate();
  check_query(data, query);
  if (config.num_draws == 0) throw ConfigError("num_draws must be positive");
  const Eigen::MatrixXd X1 = with_intercept(data.X);
  if (X1.rows() <= X1.cols()) throw InsufficientDataError("need more observations than regression coefficients");
  const GPriorSampler sampler(X1, config.psi.value_or(static_cast<double>(data.n())), config.a_sigma,
                              config.b_sigma);
  const auto S = static_cast<Eigen::Index>(config.num_draws);
  const Eigen::MatrixXd Q = with_intercept(query);
  BaselineDraws out;
  out.theta.resize(S, X1.cols());
  out.sigma.resize(S);
  out.predictive.resize(S, query.rows());
  parallel_for(config.num_draws, [&](std::size_t s) {
    RandomStream sub = rng.substream(s);
    const auto row = static_cast<Eigen::Index>(s);
    auto [sigma, theta] = sampler.draw(data.y, sub);
    out.theta.row(row) = theta.transpose();
    out.sigma[row] = sigma;
    for (Eigen::Index j = 0; j < query.rows(); ++j) out.predictive(row, j) = Q.row(j).dot(theta) + sigma * sub.normal();
  });
  return out;
}

BaselineDraws baseline_blm_boxcox(const Dataset& data, const Eigen::MatrixXd& query, const BlmConfig& config,
                                  const BoxCoxConfig& boxcox_config, const RandomStream& rng) {
  data.validate();
  check_query(data, query);
  boxcox_config.validate();
  check_boxcox_domain(data.y);
  if (config.num_draws == 0) throw ConfigError("num_draws must be positive");
  const Eigen::MatrixXd X1 = with_intercept(data.X);
  if (X1.rows() <= X1.cols()) throw InsufficientDataError("need more observations than regression coefficients");
  const GPriorSampler sampler(X1, config.psi.value_or(static_cast<double>(data.n())), config.a_sigma,
                              config.b_sigma);
  const double log_abs_sum = data.y.array().abs().log().sum();

  const std::size_t S = config.num_draws;
  const auto rows = static_cast<Eigen::Index>(S);
  const Eigen::MatrixXd Q = with_intercept(query);
  BaselineDraws out;
  out.theta.resize(rows, X1.cols());
  out.sigma.resize(rows);
  out.lambda.resize(rows);
  out.predictive.resize(rows, query.rows());

  RandomStream chain = rng.substream(0);
  double lambda = boxcox_config.initial;
  for (std::size_t t = 0; t < boxcox_config.burn_in + S; ++t) {
    const Eigen::VectorXd z = boxcox_vector(data.y, lambda);
    auto [sigma, theta] = sampler.draw(z, chain);
    const Eigen::VectorXd mean = X1 * theta;
    auto log_density = [&](double l) {
      const double prior = boxcox_log_prior(l, boxcox_config);
      if (!std::isfinite(prior)) return prior;
      const Eigen::VectorXd r = boxcox_vector(data.y, l) - mean;
      return prior - 0.5 * r.squaredNorm() / (sigma * sigma) + (l - 1.0) * log_abs_sum;
    };
    lambda = slice_sample(log_density, lambda, boxcox_config.lower, boxcox_config.upper, boxcox_config.slice_width,
                          chain);
    if (t < boxcox_config.burn_in) continue;
    const auto row = static_cast<Eigen::Index>(t - boxcox_config.burn_in);
    out.theta.row(row) = theta.transpose();
    out.sigma[row] = sigma;
    out.lambda[row] = lambda;
    for (Eigen::Index j = 0; j < query.rows(); ++j) {
      out.predictive(row, j) = inverse_boxcox(Q.row(j).dot(theta) + sigma * chain.normal(), lambda);
    }
  }
  return out;
}

BaselineDraws baseline_bqr(const Dataset& data, const Eigen::MatrixXd& query, double tau, std::size_t num_draws,
                           std::size_t burn_in, const RandomStream& rng) {
  data.validate();
  check_query(data, query);
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  if (num_draws == 0) throw ConfigError("num_draws must be positive");
  const Eigen::MatrixXd X1 = with_intercept(data.X);
  if (X1.rows() <= X1.cols()) throw InsufficientDataError("need more observations than regression coefficients");
  const GaussianPrior prior = quantile_g_prior(X1, static_cast<double>(data.n()));
  RandomStream chain_rng = rng.substream(0);
  QuantileChain chain = sbqr_chain(
      X1, [&](std::size_t) -> const Eigen::VectorXd& { return data.y; }, burn_in, num_draws, tau, prior, false,
      chain_rng);

  BaselineDraws out;
  out.theta = std::move(chain.theta);
  const Eigen::MatrixXd Q = with_intercept(query);
  const Eigen::MatrixXd linear = out.theta * Q.transpose();
  const AldConstants k = ald_expansion_constants(tau);
  out.predictive.resize(linear.rows(), linear.cols());
  for (Eigen::Index s = 0; s < linear.rows(); ++s) {
    for (Eigen::Index j = 0; j < linear.cols(); ++j) {
      const double xi = chain_rng.exponential();
      out.predictive(s, j) = linear(s, j) + k.a_tau * xi + k.b_tau * std::sqrt(xi) * chain_rng.normal();
    }
  }
  out.quantile_estimates = linear.colwise().mean().transpose();
  return out;
}

BaselineDraws baseline_gp(const Dataset& data, const Eigen::MatrixXd& query, const GpFitOptions& options,
                          std::size_t num_draws, const RandomStream& rng) {
  data.validate();
  check_query(data, query);
  if (num_draws == 0) throw ConfigError("num_draws must be positive");
  const GpFit fit = gp_mle_fit(data.X, data.y, options);
  const Eigen::VectorXd f = fit.predict_mean(query);
  const Eigen::VectorXd sd =
      fit.params().noise_scale * (1.0 + fit.predict_var(query).array()).sqrt().matrix();
  BaselineDraws out;
  out.predictive.resize(static_cast<Eigen::Index>(num_draws), query.rows());
  parallel_for(num_draws, [&](std::size_t s) {
    RandomStream sub = rng.substream(s);
    for (Eigen::Index j = 0; j < query.rows(); ++j) {
      out.predictive(static_cast<Eigen::Index>(s), j) = f[j] + sd[j] * sub.normal();
    }
  });
  return out;
}

BaselineDraws baseline_gp_boxcox(const Dataset& data, const Eigen::MatrixXd& query, const GpFitOptions& options,
                                 const BoxCoxConfig& boxcox_config, std::size_t num_draws,
                                 const RandomStream& rng) {
  data.validate();
  check_query(data, query);
  boxcox_config.validate();
  check_boxcox_domain(data.y);
  if (num_draws == 0) throw ConfigError("num_draws must be positive");
  const auto n = static_cast<double>(data.n());

  // K + I does not depend on lambda once the kernel is fixed.
  const GpFit base = gp_mle_fit(data.X, boxcox_vector(data.y, boxcox_config.prior_mean), options);
  const MaternParams& params = base.params();
  const auto& llt = base.cholesky();
  const Eigen::VectorXd ones_solved = llt.solve(Eigen::VectorXd::Ones(data.X.rows()));
  const double log_abs_sum = data.y.array().abs().log().sum();

  auto profile = [&](double l, double* mean_out, double* var_out) {
    const Eigen::VectorXd z = boxcox_vector(data.y, l);
    const double mean = ones_solved.dot(z) / ones_solved.sum();
    const Eigen::VectorXd r = z.array() - mean;
    const double var = std::max(r.dot(llt.solve(r)) / n, 1e-300);
    if (mean_out) *mean_out = mean;
    if (var_out) *var_out = var;
    return -0.5 * n * std::log(var) + (l - 1.0) * log_abs_sum;
  };
  auto log_density = [&](double l) {
    const double prior = boxcox_log_prior(l, boxcox_config);
    return std::isfinite(prior) ? prior + profile(l, nullptr, nullptr) : prior;
  };

  const Eigen::MatrixXd cross = matern_matrix(data.X, query, params);
  const Eigen::VectorXd post_var = base.predict_var(query);
  BaselineDraws out;
  const auto rows = static_cast<Eigen::Index>(num_draws);
  out.lambda.resize(rows);
  out.sigma.resize(rows);
  out.predictive.resize(rows, query.rows());
  RandomStream chain = rng.substream(0);
  double lambda = boxcox_config.initial;
  for (std::size_t t = 0; t < boxcox_config.burn_in + num_draws; ++t) {
    lambda = slice_sample(log_density, lambda, boxcox_config.lower, boxcox_config.upper, boxcox_config.slice_width,
                          chain);
    if (t < boxcox_config.burn_in) continue;
    double mean = 0.0, var = 0.0;
    profile(lambda, &mean, &var);
    const Eigen::VectorXd z = boxcox_vector(data.y, lambda);
    const Eigen::VectorXd f = (cross.transpose() * llt.solve((z.array() - mean).matrix())).array() + mean;
    const auto row = static_cast<Eigen::Index>(t - boxcox_config.burn_in);
    out.lambda[row] = lambda;
    out.sigma[row] = std::sqrt(var);
    for (Eigen::Index j = 0; j < query.rows(); ++j) {
      const double zt = f[j] + std::sqrt(var * (1.0 + post_var[j])) * chain.normal();
      out.predictive(row, j) = inverse_boxcox(zt, lambda);
    }
  }
  return out;
}

}  // namespace sbtrans
