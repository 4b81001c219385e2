#include "sbtrans/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sbtrans/baselines.hpp"
#include "sbtrans/dist.hpp"
#include "sbtrans/errors.hpp"
#include "sbtrans/parallel.hpp"
#include "sbtrans/sbgp.hpp"
#include "sbtrans/sblm.hpp"
#include "sbtrans/sbqr.hpp"

namespace sbtrans {

namespace {

constexpr double kCorrelation = 0.75;
constexpr double kBetaA = 0.1;
constexpr double kBetaB = 0.5;

Eigen::MatrixXd ar1_covariates(std::size_t n, std::size_t p, RandomStream& rng) {
  const double innovation = std::sqrt(1.0 - kCorrelation * kCorrelation);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double prev = rng.normal();
    X(i, 0) = prev;
    for (Eigen::Index j = 1; j < X.cols(); ++j) {
      prev = kCorrelation * prev + innovation * rng.normal();
      X(i, j) = prev;
    }
  }
  return X;
}

std::vector<Eigen::Index> random_permutation(std::size_t p, RandomStream& rng) {
  std::vector<Eigen::Index> perm(p);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  for (std::size_t k = p; k > 1; --k) std::swap(perm[k - 1], perm[rng.index(k)]);
  return perm;
}

Eigen::MatrixXd permute_columns(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& perm) {
  Eigen::MatrixXd out(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) out.col(j) = X.col(perm[static_cast<std::size_t>(j)]);
  return out;
}

Eigen::VectorXd half_signal(std::size_t p) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  theta.head(static_cast<Eigen::Index>(p / 2)).setOnes();
  return theta;
}

Eigen::VectorXd raw_latent(const Eigen::MatrixXd& X, const Eigen::VectorXd& theta, const SimDesign& design,
                           RandomStream& rng) {
  const Eigen::VectorXd mean = X * theta;
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double eps = design.error_sd * rng.normal();
    z[i] = design.heteroskedastic ? mean[i] * (1.0 + eps) : mean[i] + eps;
  }
  return z;
}

std::pair<double, double> sample_moments(const Eigen::VectorXd& z) {
  if (z.size() < 2) throw InsufficientDataError("standardizing needs at least two observations");
  const double mean = z.mean();
  const double sd = std::sqrt((z.array() - mean).square().sum() / static_cast<double>(z.size() - 1));
  if (!(sd > 0.0)) throw NumericalError("latent data have zero spread");
  return {mean, sd};
}

Dataset make_dataset(Eigen::MatrixXd X, const Eigen::VectorXd& z, const InverseTransform& h) {
  Dataset d;
  d.X = std::move(X);
  d.y = z.unaryExpr([&h](double v) { return h(v); });
  d.covariate_names.resize(static_cast<std::size_t>(d.X.cols()));
  for (std::size_t j = 0; j < d.covariate_names.size(); ++j) d.covariate_names[j] = "x" + std::to_string(j + 1);
  return d;
}

}  // namespace

void SimDesign::validate() const {
  if (n < 2 || p < 1) throw ConfigError("design needs n >= 2 and p >= 1");
  if (p % 2 != 0) throw ConfigError("design needs an even number of covariates");
  if (n_test < 1) throw ConfigError("design needs at least one test observation");
  if (!(error_sd > 0.0)) throw ConfigError("error SD must be positive");
  if (!(boxcox_lambda > 0.0)) throw ConfigError("Box-Cox lambda must be positive");
}

Eigen::MatrixXd gen_covariates(std::size_t n, std::size_t p, RandomStream& rng) {
  if (n < 1 || p < 1) throw ConfigError("covariates need n >= 1 and p >= 1");
  const Eigen::MatrixXd X = ar1_covariates(n, p, rng);
  return permute_columns(X, random_permutation(p, rng));
}

// ---------------------------------------------------------------------------

StepMap::StepMap(RandomStream& rng) {
  std::vector<double> cumulative(kKnots);
  double total = 0.0;
  for (double& c : cumulative) {
    total += rng.exponential();
    c = total;
  }
  *this = StepMap(std::move(cumulative));
}

StepMap::StepMap(std::vector<double> cumulative) : values_(std::move(cumulative)) {
  if (values_.size() < 2) throw ConfigError("step map needs at least two knots");
  if (!(values_.front() > 0.0)) throw ConfigError("step map values must be positive");
  for (std::size_t k = 1; k < values_.size(); ++k) {
    if (!(values_[k] > values_[k - 1])) throw ConfigError("step map values must increase");
  }
  knots_.resize(values_.size());
  for (std::size_t k = 0; k < knots_.size(); ++k) {
    knots_[k] = -3.0 + 6.0 * static_cast<double>(k) / static_cast<double>(knots_.size() - 1);
  }
}

double StepMap::operator()(double z) const {
  const std::size_t K = knots_.size();
  if (z <= knots_.front()) {
    const double slope = (values_[1] - values_[0]) / (knots_[1] - knots_[0]);
    return values_[0] * std::exp(slope * (z - knots_[0]) / values_[0]);
  }
  if (z >= knots_.back()) {
    const double slope = (values_[K - 1] - values_[K - 2]) / (knots_[K - 1] - knots_[K - 2]);
    return values_[K - 1] + slope * (z - knots_[K - 1]);
  }
  const auto k = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), z) - knots_.begin()) - 1;
  const double w = (z - knots_[k]) / (knots_[k + 1] - knots_[k]);
  return values_[k] + w * (values_[k + 1] - values_[k]);
}

double StepMap::inverse(double y) const {
  const std::size_t K = knots_.size();
  if (y <= values_.front()) {
    if (!(y > 0.0)) return -std::numeric_limits<double>::infinity();
    const double slope = (values_[1] - values_[0]) / (knots_[1] - knots_[0]);
    return knots_[0] + values_[0] / slope * std::log(y / values_[0]);
  }
  if (y >= values_.back()) {
    const double slope = (values_[K - 1] - values_[K - 2]) / (knots_[K - 1] - knots_[K - 2]);
    return knots_[K - 1] + (y - values_[K - 1]) / slope;
  }
  const auto k = static_cast<std::size_t>(std::upper_bound(values_.begin(), values_.end(), y) - values_.begin()) - 1;
  const double w = (y - values_[k]) / (values_[k + 1] - values_[k]);
  return knots_[k] + w * (knots_[k + 1] - knots_[k]);
}

double boxcox(double y, double lambda) {
  if (!(lambda > 0.0)) throw DomainError("Box-Cox lambda must be positive");
  const double sign = y < 0.0 ? -1.0 : 1.0;
  return (sign * std::pow(std::abs(y), lambda) - 1.0) / lambda;
}

double inverse_boxcox(double z, double lambda) {
  if (!(lambda > 0.0)) throw DomainError("Box-Cox lambda must be positive");
  const double u = lambda * z + 1.0;
  const double sign = u < 0.0 ? -1.0 : 1.0;
  return sign * std::pow(std::abs(u), 1.0 / lambda);
}

InverseTransform::InverseTransform(TransformKind kind, double lambda, RandomStream& rng)
    : kind_(kind), lambda_(lambda) {
  if (kind_ == TransformKind::Step) step_.emplace(rng);
  if (kind_ == TransformKind::BoxCox && !(lambda_ > 0.0)) throw ConfigError("Box-Cox lambda must be positive");
}

double InverseTransform::operator()(double z) const {
  switch (kind_) {
    case TransformKind::Beta:
      return beta_quantile(normal_cdf(z), kBetaA, kBetaB);
    case TransformKind::Step:
      return (*step_)(z);
    case TransformKind::BoxCox:
      return inverse_boxcox(z, lambda_);
    case TransformKind::Identity:
      break;
  }
  return z;
}

double InverseTransform::forward(double y) const {
  switch (kind_) {
    case TransformKind::Beta:
      return normal_quantile(beta_cdf(y, kBetaA, kBetaB));
    case TransformKind::Step:
      return step_->inverse(y);
    case TransformKind::BoxCox:
      return boxcox(y, lambda_);
    case TransformKind::Identity:
      break;
  }
  return y;
}

LatentResponse gen_response(const Eigen::MatrixXd& X, const SimDesign& design, const InverseTransform& h,
                            RandomStream& rng) {
  if (static_cast<std::size_t>(X.cols()) != design.p) throw ConfigError("covariates do not match the design");
  LatentResponse out;
  out.theta_true = half_signal(design.p);
  const Eigen::VectorXd raw = raw_latent(X, out.theta_true, design, rng);
  const auto [mean, sd] = sample_moments(raw);
  out.z = (raw.array() - mean) / sd;
  out.y = out.z.unaryExpr([&h](double v) { return h(v); });
  return out;
}

SimReplicate simulate_replicate(const SimDesign& design, const RandomStream& rng) {
  design.validate();
  RandomStream setup = rng.substream(0);
  InverseTransform h(design.transform_kind, design.boxcox_lambda, setup);
  const auto perm = random_permutation(design.p, setup);
  const Eigen::VectorXd theta = half_signal(design.p);

  RandomStream train_rng = rng.substream(1);
  Eigen::MatrixXd X_train = permute_columns(ar1_covariates(design.n, design.p, train_rng), perm);
  const Eigen::VectorXd raw_train = raw_latent(X_train, theta, design, train_rng);
  RandomStream test_rng = rng.substream(2);
  Eigen::MatrixXd X_test = permute_columns(ar1_covariates(design.n_test, design.p, test_rng), perm);
  const Eigen::VectorXd raw_test = raw_latent(X_test, theta, design, test_rng);

  const auto [mean, sd] = sample_moments(raw_train);
  Eigen::VectorXd z_train = (raw_train.array() - mean) / sd;
  Eigen::VectorXd z_test = (raw_test.array() - mean) / sd;
  Dataset train = make_dataset(std::move(X_train), z_train, h);
  Dataset test = make_dataset(std::move(X_test), z_test, h);
  return {std::move(train), std::move(test), theta, std::move(z_train), std::move(z_test), std::move(h)};
}

// ---------------------------------------------------------------------------

namespace {

struct MethodEntry {
  Method method;
  const char* name;
};

constexpr MethodEntry kMethods[] = {
    {Method::Sblm, "sblm"},           {Method::SblmPrior, "sblm-prior"}, {Method::Blm, "blm"},
    {Method::BlmBoxCox, "blm-boxcox"}, {Method::Sbqr, "sbqr"},           {Method::SbqrPrior, "sbqr-prior"},
    {Method::Bqr, "bqr"},             {Method::Sbgp, "sbgp"},           {Method::Gp, "gp"},
    {Method::GpBoxCox, "gp-boxcox"},
};

void score_predictive(MetricReport& r, const Eigen::MatrixXd& predictive, const Eigen::VectorXd& y, double level) {
  const IntervalSummary iv = metric_interval(predictive, y, level);
  r.interval_width = iv.width;
  r.coverage = iv.coverage;
  r.crps = metric_crps(predictive, y);
}

void score_selection(MetricReport& r, const Eigen::MatrixXd& theta_with_intercept, const Eigen::VectorXd& truth) {
  const SelectionRates s = metric_selection(theta_with_intercept.rightCols(truth.size()), truth);
  r.tpr = s.tpr;
  r.tnr = s.tnr;
}

}  // namespace

std::string method_name(Method method) {
  for (const auto& e : kMethods) {
    if (e.method == method) return e.name;
  }
  throw ConfigError("unknown method");
}

Method parse_method(const std::string& name) {
  for (const auto& e : kMethods) {
    if (name == e.name) return e.method;
  }
  throw ConfigError("unknown method '" + name + "'");
}

SimDesign design_preset(const std::string& name, std::size_t n, std::size_t p) {
  SimDesign d;
  d.n = n;
  d.p = p;
  if (name == "beta") {
    d.transform_kind = TransformKind::Beta;
  } else if (name == "step") {
    d.transform_kind = TransformKind::Step;
  } else if (name == "box-cox") {
    d.transform_kind = TransformKind::BoxCox;
  } else if (name == "identity") {
    d.transform_kind = TransformKind::Identity;
  } else if (name == "hetero") {
    d.transform_kind = TransformKind::Identity;
    d.heteroskedastic = true;
  } else {
    throw ConfigError("unknown design '" + name + "'");
  }
  return d;
}

void ExperimentConfig::validate() const {
  design.validate();
  if (replicates == 0) throw ConfigError("replicates must be positive");
  if (num_draws < 2) throw ConfigError("num_draws must be at least 2");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0, 1)");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0, 1)");
}

MetricReport evaluate_method(Method method, const SimReplicate& rep, const ExperimentConfig& config,
                             const RandomStream& rng) {
  const Dataset& train = rep.train;
  const Eigen::MatrixXd& query = rep.test.X;
  const Eigen::VectorXd& y = rep.test.y;
  MetricReport r;
  switch (method) {
    case Method::Sblm:
    case Method::SblmPrior: {
      SblmConfig c;
      c.num_draws = config.num_draws;
      c.approx_source = method == Method::Sblm ? ApproxSource::LaplacePlugin : ApproxSource::Prior;
      const SblmDraws d = sblm_run(train, c, query, rng);
      score_predictive(r, d.predictive, y, config.level);
      score_selection(r, d.theta, rep.theta_true);
      break;
    }
    case Method::Blm:
    case Method::BlmBoxCox: {
      BlmConfig c;
      c.num_draws = config.num_draws;
      const BaselineDraws d = method == Method::Blm ? baseline_blm(train, query, c, rng)
                                                    : baseline_blm_boxcox(train, query, c, BoxCoxConfig{}, rng);
      score_predictive(r, d.predictive, y, config.level);
      score_selection(r, d.theta, rep.theta_true);
      break;
    }
    case Method::Sbqr:
    case Method::SbqrPrior: {
      SbqrConfig c;
      c.tau = config.tau;
      c.num_draws = config.num_draws;
      c.burn_in = config.num_draws;
      c.approx_source = method == Method::Sbqr ? ApproxSource::LaplacePlugin : ApproxSource::Prior;
      const SbqrDraws d = sbqr_run(train, c, query, rng);
      score_predictive(r, d.predictive, y, config.level);
      score_selection(r, d.theta, rep.theta_true);
      r.quantile_calibration = metric_quantile_calibration(d.quantile_estimates, y);
      break;
    }
    case Method::Bqr: {
      const BaselineDraws d = baseline_bqr(train, query, config.tau, config.num_draws, config.num_draws, rng);
      score_predictive(r, d.predictive, y, config.level);
      score_selection(r, d.theta, rep.theta_true);
      r.quantile_calibration = metric_quantile_calibration(d.quantile_estimates, y);
      break;
    }
    case Method::Sbgp: {
      SbgpConfig c;
      c.num_draws = config.num_draws;
      const SbgpDraws d = sbgp_run(train, query, c, rng);
      score_predictive(r, d.predictive, y, config.level);
      break;
    }
    case Method::Gp:
    case Method::GpBoxCox: {
      const BaselineDraws d =
          method == Method::Gp ? baseline_gp(train, query, GpFitOptions{}, config.num_draws, rng)
                               : baseline_gp_boxcox(train, query, GpFitOptions{}, BoxCoxConfig{}, config.num_draws, rng);
      score_predictive(r, d.predictive, y, config.level);
      break;
    }
  }
  return r;
}

std::vector<MetricReport> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const RandomStream master(config.seed);
  std::vector<MetricReport> out(config.replicates);
  parallel_for(config.replicates, [&](std::size_t r) {
    const RandomStream rep_rng = master.substream(r);
    const SimReplicate rep = simulate_replicate(config.design, rep_rng.substream(0));
    out[r] = evaluate_method(config.method, rep, config, rep_rng.substream(1));
  });
  return out;
}

}  // namespace sbtrans
