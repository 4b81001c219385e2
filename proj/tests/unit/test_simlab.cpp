#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sbtrans/baselines.hpp"
#include "sbtrans/errors.hpp"
#include "sbtrans/metrics.hpp"
#include "sbtrans/sbgp.hpp"
#include "sbtrans/sblm.hpp"
#include "sbtrans/simlab.hpp"

using namespace sbtrans;

namespace {

double column_corr(const Eigen::MatrixXd& X, Eigen::Index a, Eigen::Index b) {
  const Eigen::VectorXd u = X.col(a).array() - X.col(a).mean();
  const Eigen::VectorXd v = X.col(b).array() - X.col(b).mean();
  return u.dot(v) / std::sqrt(u.squaredNorm() * v.squaredNorm());
}

// CRPS as the integral of (F(t) - 1{t >= y})^2 for a normal predictive.
double crps_quadrature(double mu, double sigma, double y) {
  auto below = [&](double t) {
    const double F = oracle::phi_series(t, mu, sigma);
    return F * F;
  };
  auto above = [&](double t) {
    const double F = oracle::phi_series(t, mu, sigma);
    return (1.0 - F) * (1.0 - F);
  };
  return oracle::simpson(below, mu - 12 * sigma, y) + oracle::simpson(above, y, mu + 12 * sigma);
}

// KS distance by evaluating both empirical CDFs at every sample point.
double ks_brute_force(const std::vector<double>& a, const std::vector<double>& b) {
  auto ecdf = [](const std::vector<double>& v, double t) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [t](double x) { return x <= t; })) /
           static_cast<double>(v.size());
  };
  double d = 0.0;
  for (const auto* s : {&a, &b}) {
    for (double t : *s) d = std::max(d, std::abs(ecdf(a, t) - ecdf(b, t)));
  }
  return d;
}

Eigen::MatrixXd normal_draws(Eigen::Index S, Eigen::Index m, double mu, double sigma, RandomStream& rng) {
  Eigen::MatrixXd d(S, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    for (Eigen::Index s = 0; s < S; ++s) d(s, j) = mu + sigma * rng.normal();
  }
  return d;
}

}  // namespace

TEST_CASE("single covariate is standard normal") {
  RandomStream rng(1);
  const Eigen::MatrixXd X = gen_covariates(20000, 1, rng);
  CHECK(std::abs(X.mean()) < 0.03);
  CHECK(std::abs((X.array() - X.mean()).square().sum() / 19999.0 - 1.0) < 0.03);
}

TEST_CASE("covariates follow the autoregressive correlation up to a column permutation") {
  RandomStream rng(2);
  const Eigen::MatrixXd X = gen_covariates(100000, 3, rng);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double mean = X.col(j).mean();
    CHECK(std::abs((X.col(j).array() - mean).square().sum() / 99999.0 - 1.0) < 0.02);
  }
  std::vector<double> r{column_corr(X, 0, 1), column_corr(X, 0, 2), column_corr(X, 1, 2)};
  std::sort(r.begin(), r.end());
  CHECK(r[0] == doctest::Approx(0.75 * 0.75).epsilon(0.02));
  CHECK(std::abs(r[1] - 0.75) < 0.01);
  CHECK(std::abs(r[2] - 0.75) < 0.01);
}

TEST_CASE("step map interpolates the cumulative sums") {
  const StepMap h(std::vector<double>{0.5, 1.0, 2.5, 3.0, 3.2, 4.0, 6.0, 6.5, 7.0, 9.0});
  for (std::size_t k = 0; k < 10; ++k) {
    const double t = -3.0 + 6.0 * static_cast<double>(k) / 9.0;
    CHECK(h(t) == doctest::Approx(h.values()[k]).epsilon(1e-15));
    CHECK(h.inverse(h.values()[k]) == doctest::Approx(t).epsilon(1e-12));
  }
  CHECK(h(-3.0 + 6.0 / 18.0) == doctest::Approx(0.75));
  double prev = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double z = -8.0 + 16.0 * i / 2000.0;
    const double v = h(z);
    CHECK(v > 0.0);
    CHECK(v >= prev);
    CHECK(h.inverse(v) == doctest::Approx(z).epsilon(1e-9));
    prev = v;
  }
  RandomStream rng(3);
  const StepMap drawn(rng);
  CHECK(drawn.values().size() == 10);
  CHECK(drawn.values().front() > 0.0);
}

TEST_CASE("inverse transforms are monotone and map into their supports") {
  RandomStream rng(4);
  for (auto kind : {TransformKind::Beta, TransformKind::Step, TransformKind::BoxCox, TransformKind::Identity}) {
    const InverseTransform h(kind, 0.5, rng);
    double prev = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 1000; ++i) {
      const double z = -5.0 + 10.0 * i / 1000.0;
      const double y = h(z);
      CHECK(y >= prev);
      prev = y;
      if (kind == TransformKind::Beta) CHECK((y >= 0.0 && y <= 1.0));
      if (kind == TransformKind::Step) CHECK(y > 0.0);
      if (kind != TransformKind::Beta || std::abs(z) < 3.0) CHECK(h.forward(y) == doctest::Approx(z).epsilon(1e-8));
    }
  }
}

TEST_CASE("generated responses") {
  SimDesign d = design_preset("identity", 500, 4);
  d.n_test = 300;
  const SimReplicate id = simulate_replicate(d, RandomStream(5));
  CHECK(id.train.y == id.z_train);
  CHECK(id.test.y == id.z_test);
  CHECK(std::abs(id.z_train.mean()) < 1e-12);
  CHECK((id.z_train.array() - id.z_train.mean()).square().sum() / 499.0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(id.theta_true == (Eigen::VectorXd(4) << 1, 1, 0, 0).finished());

  SimDesign beta = design_preset("beta", 10000, 2);
  beta.n_test = 10;
  const SimReplicate b = simulate_replicate(beta, RandomStream(6));
  CHECK(b.train.y.minCoeff() >= 0.0);
  CHECK(b.train.y.maxCoeff() <= 1.0);
  std::vector<double> ys(b.train.y.data(), b.train.y.data() + b.train.y.size());
  std::nth_element(ys.begin(), ys.begin() + 5000, ys.end());
  CHECK(ys[5000] < 0.2);

  SimDesign bc = design_preset("box-cox", 300, 6);
  bc.n_test = 50;
  const SimReplicate c = simulate_replicate(bc, RandomStream(7));
  for (Eigen::Index i = 0; i < c.train.y.size(); ++i) {
    const double y = c.train.y[i];
    const double back = ((y < 0 ? -1.0 : 1.0) * std::sqrt(std::abs(y)) - 1.0) / 0.5;
    CHECK(std::abs(back - c.z_train[i]) < 1e-10);
  }

  RandomStream rng(8);
  const Eigen::MatrixXd X = gen_covariates(100, 4, rng);
  const InverseTransform h(TransformKind::Identity, 0.5, rng);
  const LatentResponse lr = gen_response(X, d, h, rng);
  CHECK(lr.y == lr.z);
  CHECK(std::abs(lr.z.mean()) < 1e-12);
}

TEST_CASE("generators are deterministic and share the transformation across n") {
  SimDesign d = design_preset("step", 50, 10);
  d.n_test = 100;
  const SimReplicate a = simulate_replicate(d, RandomStream(9));
  const SimReplicate b = simulate_replicate(d, RandomStream(9));
  CHECK(a.train.X == b.train.X);
  CHECK(a.train.y == b.train.y);
  CHECK(a.test.y == b.test.y);
  d.n = 400;
  const SimReplicate big = simulate_replicate(d, RandomStream(9));
  for (double z : {-2.0, -0.3, 0.0, 1.7}) CHECK(big.transform(z) == a.transform(z));
  CHECK_THROWS_AS(design_preset("cubic", 50, 10), ConfigError);
  SimDesign odd = d;
  odd.p = 3;
  CHECK_THROWS_AS(simulate_replicate(odd, RandomStream(1)), ConfigError);
}

TEST_CASE("CRPS estimator") {
  const std::vector<double> point(50, 1.5);
  CHECK(crps_sample(point, 1.5) == 0.0);

  RandomStream rng(10);
  std::vector<double> z(100000);
  for (double& v : z) v = rng.normal();
  const double oracle_value = crps_quadrature(0.0, 1.0, 0.0);
  CHECK(oracle_value == doctest::Approx(0.2337).epsilon(1e-3));
  CHECK(std::abs(crps_sample(z, 0.0) - oracle_value) < 0.01);

  std::vector<double> shifted(z.begin(), z.begin() + 2000);
  const double base = crps_sample(shifted, 0.3);
  for (double& v : shifted) v += 7.25;
  CHECK(crps_sample(shifted, 7.55) == doctest::Approx(base).epsilon(1e-12));

  // All-pairs sum against the direct double loop.
  std::vector<double> small(z.begin(), z.begin() + 300);
  double direct_abs = 0.0, direct_pairs = 0.0;
  for (double a : small) {
    direct_abs += std::abs(a - 0.4);
    for (double b : small) direct_pairs += std::abs(a - b);
  }
  const double direct = direct_abs / 300.0 - 0.5 * direct_pairs / (300.0 * 299.0);
  CHECK(crps_sample(small, 0.4) == doctest::Approx(direct).epsilon(1e-12));

  // 1000 draws per point against the closed form, averaged over points.
  const Eigen::Index m = 200;
  const Eigen::MatrixXd draws = normal_draws(1000, m, 0.7, 1.8, rng);
  Eigen::VectorXd y(m);
  double target = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    y[j] = 0.7 + 1.8 * rng.normal();
    target += crps_quadrature(0.7, 1.8, y[j]);
  }
  target /= static_cast<double>(m);
  CHECK(std::abs(metric_crps(draws, y) / target - 1.0) < 0.02);
  CHECK(oracle::gaussian_crps(0.7, 1.8, y[0]) == doctest::Approx(crps_quadrature(0.7, 1.8, y[0])).epsilon(1e-8));
}

TEST_CASE("HPD intervals and selection rates") {
  RandomStream rng(11);
  std::vector<double> z(200000);
  for (double& v : z) v = rng.normal();
  const auto [lo, hi] = hpd_interval(z, 0.95);
  const double q = oracle::bisect([](double t) { return oracle::phi_series(t); }, 0.975, 0.0, 5.0);
  CHECK(std::abs(lo + q) < 0.03);
  CHECK(std::abs(hi - q) < 0.03);

  std::vector<double> skewed(100000);
  for (double& v : skewed) v = rng.exponential();
  const auto [slo, shi] = hpd_interval(skewed, 0.9);
  CHECK(slo < 0.005);
  CHECK(std::abs(shi - std::log(10.0)) < 0.05);

  const Eigen::Index p = 2000;
  Eigen::MatrixXd draws(400, p);
  Eigen::VectorXd truth = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double centre = j < 100 ? 1.0 : rng.normal();
    if (j < 100) truth[j] = 1.0;
    for (Eigen::Index s = 0; s < 400; ++s) draws(s, j) = centre + (j < 100 ? 0.01 : 1.0) * rng.normal();
  }
  const SelectionRates rates = metric_selection(draws, truth);
  CHECK(rates.tpr == 1.0);
  CHECK(std::abs(rates.tnr - 0.95) < 0.02);
  CHECK_THROWS_AS(metric_selection(draws.topRows(50), truth), InputError);
}

TEST_CASE("prediction intervals") {
  const Eigen::MatrixXd point = Eigen::MatrixXd::Constant(100, 5, 2.0);
  const IntervalSummary pm = metric_interval(point, Eigen::VectorXd::Constant(5, 2.0), 0.9);
  CHECK(pm.width == 0.0);
  CHECK(pm.coverage == 1.0);

  RandomStream rng(12);
  const Eigen::Index m = 2000;
  const Eigen::MatrixXd draws = normal_draws(4000, m, 0.0, 1.0, rng);
  Eigen::VectorXd y(m);
  for (Eigen::Index j = 0; j < m; ++j) y[j] = rng.normal();
  const double q = oracle::bisect([](double t) { return oracle::phi_series(t); }, 0.95, 0.0, 5.0);
  const IntervalSummary iv = metric_interval(draws, y, 0.9);
  CHECK(std::abs(iv.coverage - 0.9) < 0.02);
  CHECK(std::abs(iv.width - 2.0 * q) < 0.02);
  CHECK(q == doctest::Approx(1.6449).epsilon(1e-4));
  double prev = 0.0;
  for (double level : {0.5, 0.7, 0.8, 0.9, 0.95, 0.99}) {
    const double c = metric_interval(draws, y, level).coverage;
    CHECK(c >= prev);
    prev = c;
  }
}

TEST_CASE("quantile calibration and KS distance") {
  const Eigen::VectorXd q = Eigen::VectorXd::Constant(4, 1.0);
  CHECK(metric_quantile_calibration(q, (Eigen::VectorXd(4) << 0.0, 1.0, 2.0, 0.5).finished()) == 0.5);
  RandomStream rng(13);
  std::vector<double> a(700), b(500);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = 0.2 + rng.normal();
  b[3] = a[10];
  CHECK(ks_distance(a, b) == doctest::Approx(ks_brute_force(a, b)).epsilon(1e-14));
  CHECK(ks_distance(a, a) == 0.0);
}

TEST_CASE("slice sampler stays inside its bounds and targets the density") {
  RandomStream rng(14);
  std::vector<double> visited;
  auto log_density = [&](double x) {
    visited.push_back(x);
    const double u = (x - 0.5) / 0.5;
    return -0.5 * u * u;
  };
  double x = 0.5, total = 0.0;
  const int N = 40000;
  for (int i = 0; i < N; ++i) {
    x = slice_sample(log_density, x, 0.0, 2.0, 0.5, rng);
    CHECK((x > 0.0 && x < 2.0));
    total += x;
  }
  CHECK(std::all_of(visited.begin(), visited.end(), [](double v) { return v > 0.0 && v < 2.0; }));
  auto dens = [](double t) { return std::exp(-0.5 * (t - 0.5) * (t - 0.5) / 0.25); };
  const double mean = oracle::simpson([&](double t) { return t * dens(t); }, 0.0, 2.0) / oracle::simpson(dens, 0.0, 2.0);
  CHECK(std::abs(total / N - mean) < 0.01);
}

TEST_CASE("Box-Cox linear model recovers the square-root transformation") {
  SimDesign d = design_preset("box-cox", 200, 50);
  d.n_test = 100;
  const SimReplicate rep = simulate_replicate(d, RandomStream(15));
  BlmConfig c;
  const BaselineDraws draws = baseline_blm_boxcox(rep.train, rep.test.X, c, BoxCoxConfig{}, RandomStream(16));
  MESSAGE("lambda posterior mean " << draws.lambda.mean());
  CHECK(std::abs(draws.lambda.mean() - 0.5) < 0.15);
  CHECK(draws.lambda.minCoeff() > 0.0);
  CHECK(draws.lambda.maxCoeff() < 2.0);
  CHECK(boxcox_log_jacobian((Eigen::VectorXd(2) << -2.0, 0.5).finished(), 0.5) ==
        doctest::Approx(-0.5 * std::log(2.0 * 0.5)));
  Dataset with_zero = rep.train;
  with_zero.y[0] = 0.0;
  CHECK_THROWS_AS(baseline_blm_boxcox(with_zero, rep.test.X, c, BoxCoxConfig{}, RandomStream(1)), InputError);
}

TEST_CASE("linear model without transformation matches sblm when correctly specified") {
  SimDesign d = design_preset("identity", 200, 10);
  d.n_test = 500;
  const SimReplicate rep = simulate_replicate(d, RandomStream(17));
  ExperimentConfig cfg;
  cfg.design = d;
  cfg.num_draws = 1000;
  const MetricReport blm = evaluate_method(Method::Blm, rep, cfg, RandomStream(18));
  const MetricReport sblm = evaluate_method(Method::Sblm, rep, cfg, RandomStream(18));
  MESSAGE("coverage blm " << blm.coverage << " sblm " << sblm.coverage);
  CHECK(std::abs(blm.coverage - sblm.coverage) < 0.05);
  CHECK(blm.tpr == 1.0);
}

TEST_CASE("quantile regression without transformation on the heteroskedastic design") {
  SimDesign d = design_preset("hetero", 200, 50);
  ExperimentConfig cfg;
  cfg.design = d;
  cfg.num_draws = 1000;
  const SimReplicate rep = simulate_replicate(d, RandomStream(19));
  cfg.tau = 0.5;
  const MetricReport median = evaluate_method(Method::Bqr, rep, cfg, RandomStream(20));
  cfg.tau = 0.05;
  const MetricReport low = evaluate_method(Method::Bqr, rep, cfg, RandomStream(20));
  MESSAGE("bqr calibration tau=0.5 " << median.quantile_calibration << " tau=0.05 " << low.quantile_calibration);
  CHECK((median.quantile_calibration >= 0.45 && median.quantile_calibration <= 0.55));
  CHECK((low.quantile_calibration < 0.02 || low.quantile_calibration > 0.08));
}

TEST_CASE("Gaussian process baselines") {
  RandomStream rng(21);
  Dataset data;
  data.X.resize(150, 1);
  data.y.resize(150);
  Eigen::MatrixXd query(200, 1);
  Eigen::VectorXd y_test(200);
  auto f = [](double x) { return std::sin(6.0 * x); };
  for (Eigen::Index i = 0; i < 150; ++i) {
    data.X(i, 0) = rng.uniform();
    data.y[i] = f(data.X(i, 0)) + 0.3 * rng.normal();
  }
  for (Eigen::Index j = 0; j < 200; ++j) {
    query(j, 0) = rng.uniform();
    y_test[j] = f(query(j, 0)) + 0.3 * rng.normal();
  }
  SbgpConfig sc;
  const SbgpDraws sb = sbgp_run(data, query, sc, RandomStream(22));
  const BaselineDraws gp = baseline_gp(data, query, GpFitOptions{}, 1000, RandomStream(22));
  const double crps_sb = metric_crps(sb.predictive, y_test);
  const double crps_gp = metric_crps(gp.predictive, y_test);
  MESSAGE("CRPS sbgp " << crps_sb << " gp " << crps_gp);
  CHECK(std::abs(crps_sb / crps_gp - 1.0) < 0.1);

  Dataset positive = data;
  positive.y = (data.y.array() + 3.0).square();
  const Eigen::VectorXd y_pos = (y_test.array() + 3.0).square();
  const BaselineDraws bc = baseline_gp_boxcox(positive, query, GpFitOptions{}, BoxCoxConfig{}, 500, RandomStream(23));
  MESSAGE("gp box-cox lambda mean " << bc.lambda.mean());
  CHECK(bc.lambda.mean() == doctest::Approx(0.5).epsilon(0.3));
  CHECK(metric_interval(bc.predictive, y_pos, 0.9).coverage > 0.8);
}
