#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sbtrans/dist.hpp"
#include "sbtrans/sbgp.hpp"

using namespace sbtrans;

namespace {

using Rows = std::vector<std::vector<double>>;

// exp(x) by its Taylor series.
double exp_series(double x) {
  double term = 1.0, total = 1.0;
  for (int k = 1; k < 80; ++k) {
    term *= x / k;
    total += term;
  }
  return total;
}

Eigen::MatrixXd uniform_points(Eigen::Index n, Eigen::Index d, RandomStream& rng) {
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = rng.uniform();
  }
  return X;
}

// Draw from a zero-mean GP with the given kernel plus unit noise.
Eigen::VectorXd gp_sample(const Eigen::MatrixXd& X, const MaternParams& p, RandomStream& rng) {
  Eigen::MatrixXd K = matern_matrix(X, X, p);
  K.diagonal().array() += 1e-9;
  const Eigen::LLT<Eigen::MatrixXd> llt(K);
  Eigen::VectorXd eta(X.rows()), noise(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    eta[i] = rng.normal();
    noise[i] = rng.normal();
  }
  return llt.matrixL() * eta + noise;
}

// Dense oracle for diag((K^{-1} + I)^{-1}) by two Gauss-Jordan inversions.
std::vector<double> dense_cov_diag(const Eigen::MatrixXd& K) {
  const auto n = static_cast<std::size_t>(K.rows());
  Rows k(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) k[i][j] = K(i, j);
  }
  Rows kinv = oracle::invert(k);
  for (std::size_t i = 0; i < n; ++i) kinv[i][i] += 1.0;
  const Rows out = oracle::invert(kinv);
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = out[i][i];
  return diag;
}

double mean_width(const Eigen::MatrixXd& draws, double level) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    std::vector<double> v(draws.col(j).data(), draws.col(j).data() + draws.rows());
    std::sort(v.begin(), v.end());
    const auto lo = static_cast<std::size_t>(std::floor((1 - level) / 2 * (v.size() - 1)));
    const auto hi = static_cast<std::size_t>(std::ceil((1 + level) / 2 * (v.size() - 1)));
    total += v[hi] - v[lo];
  }
  return total / static_cast<double>(draws.cols());
}

}  // namespace

TEST_CASE("Matern covariance closed forms") {
  MaternParams p;
  p.variance = 2.5;
  p.range = 0.7;
  const Eigen::Vector2d a(0.1, 0.2), b(0.5, -0.1);
  const double d = (a - b).norm();
  for (double nu : {0.5, 1.5, 2.5}) {
    p.smoothness = nu;
    CHECK(matern_cov(a, a, p) == doctest::Approx(2.5).epsilon(1e-15));
  }
  p.smoothness = 0.5;
  CHECK(matern_cov(a, b, p) == doctest::Approx(2.5 * exp_series(-d / 0.7)).epsilon(1e-13));
  p.smoothness = 1.5;
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd at_range = Eigen::VectorXd::Constant(1, 0.7);
  const double r3 = std::sqrt(3.0);
  CHECK(matern_cov(origin, at_range, p) == doctest::Approx(2.5 * (1 + r3) * exp_series(-r3)).epsilon(1e-13));
  p.smoothness = 2.5;
  const double r5 = std::sqrt(5.0) * d / 0.7;
  CHECK(matern_cov(a, b, p) == doctest::Approx(2.5 * (1 + r5 + r5 * r5 / 3) * exp_series(-r5)).epsilon(1e-13));
  p.smoothness = 1.0;
  CHECK_THROWS_AS(matern_cov(a, b, p), ConfigError);
}

TEST_CASE("covariance diagonal matches the dense inverse") {
  RandomStream rng(1);
  for (Eigen::Index n : {8, 25, 50}) {
    const Eigen::MatrixXd X = uniform_points(n, 2, rng);
    MaternParams p;
    p.variance = 2.0;
    p.range = 0.3;
    p.smoothness = 0.5;
    p.noise_scale = 0.7;
    const GpFit fit(X, Eigen::VectorXd::Random(n), p);
    Eigen::MatrixXd K = matern_matrix(X, X, p);
    K.diagonal().array() += p.variance * 1e-8;
    const auto ref = dense_cov_diag(K);
    for (Eigen::Index i = 0; i < n; ++i) {
      CHECK(std::abs(fit.cov_diag()[i] - ref[static_cast<std::size_t>(i)]) < 1e-8);
      CHECK(fit.cov_diag()[i] > 0.0);
      CHECK(fit.cov_diag()[i] <= 1.0);
    }
    if (n == 8) {
      const auto comps = sbgp_fzx_components(fit);
      for (std::size_t i = 0; i < 8; ++i) {
        const double sd = 0.7 * std::sqrt(1.0 + ref[i]);
        CHECK(comps->sd(i) == doctest::Approx(sd).epsilon(1e-9));
        CHECK(comps->mean(i) == doctest::Approx(fit.fitted_mean()[static_cast<Eigen::Index>(i)]));
      }
    }
  }
}

TEST_CASE("fitted mean is the kernel smoother") {
  RandomStream rng(2);
  const Eigen::MatrixXd X = uniform_points(12, 1, rng);
  MaternParams p;
  p.variance = 3.0;
  p.range = 0.4;
  p.smoothness = 2.5;
  p.mean_const = 0.5;
  const Eigen::VectorXd z = Eigen::VectorXd::Random(12);
  const GpFit fit(X, z, p);
  Eigen::MatrixXd K = matern_matrix(X, X, p);
  K.diagonal().array() += p.variance * 1e-8;
  Eigen::MatrixXd C = K;
  C.diagonal().array() += 1.0;
  const Eigen::VectorXd ref = (K * C.inverse() * (z.array() - 0.5).matrix()).array() + 0.5;
  CHECK((fit.fitted_mean() - ref).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("degenerate fits") {
  RandomStream rng(3);
  const Eigen::MatrixXd X = uniform_points(8, 1, rng);
  MaternParams p;
  p.variance = std::exp(-12.0);
  p.noise_scale = 1.3;
  const GpFit tiny(X, Eigen::VectorXd::Random(8), p);
  const auto comps = sbgp_fzx_components(tiny);
  for (std::size_t i = 0; i < 8; ++i) CHECK(comps->sd(i) == doctest::Approx(1.3).epsilon(1e-5));

  p.variance = 1.0;
  const GpFit flat(X, Eigen::VectorXd::Constant(8, 2.0), MaternParams{1.0, 1.0, 1.5, 2.0, 1.0});
  const auto same = sbgp_fzx_components(flat);
  for (std::size_t i = 1; i < 8; ++i) CHECK(same->mean(i) == doctest::Approx(same->mean(0)));

  CHECK_THROWS_AS(gp_mle_fit(uniform_points(9, 1, rng), Eigen::VectorXd::Zero(9)), InsufficientDataError);
  GpFitOptions bad;
  bad.smoothness = 2.0;
  CHECK_THROWS_AS(gp_mle_fit(uniform_points(20, 1, rng), Eigen::VectorXd::Random(20), bad), ConfigError);
}

TEST_CASE("likelihood maximization recovers the range") {
  MaternParams truth;
  truth.variance = 4.0;
  truth.range = 0.2;
  truth.smoothness = 1.5;
  GpFitOptions opts;
  opts.smoothness = 1.5;
  int hits = 0;
  for (int r = 0; r < 20; ++r) {
    RandomStream rng(100 + r);
    const Eigen::MatrixXd X = uniform_points(200, 1, rng);
    const Eigen::VectorXd z = gp_sample(X, truth, rng);
    const GpFit fit = gp_mle_fit(X, z, opts);
    const double ratio = fit.params().range / truth.range;
    hits += ratio > 0.5 && ratio < 2.0;
  }
  MESSAGE("range within a factor of 2 in " << hits << "/20");
  CHECK(hits >= 16);
}

TEST_CASE("pure noise gives a flat fit") {
  // The likelihood occasionally prefers a spurious short-range fit on pure
  // noise, so the degenerate outcome is required in most replicates.
  int flat = 0;
  for (int r = 0; r < 10; ++r) {
    RandomStream rng(4 + r);
    const Eigen::MatrixXd X = uniform_points(150, 1, rng);
    Eigen::VectorXd z(150);
    for (Eigen::Index i = 0; i < 150; ++i) z[i] = 3.0 + 2.0 * rng.normal();
    const GpFit fit = gp_mle_fit(X, z);
    const double zbar = z.mean();
    const double sd = std::sqrt((z.array() - zbar).square().sum() / 149.0);
    flat += fit.params().variance < 0.05 && (fit.fitted_mean().array() - zbar).abs().maxCoeff() < 0.2 * sd;
  }
  MESSAGE("flat fits " << flat << "/10");
  CHECK(flat >= 8);
}

TEST_CASE("returned parameters beat random probes") {
  RandomStream rng(5);
  const Eigen::MatrixXd X = uniform_points(80, 2, rng);
  Eigen::VectorXd z(80);
  for (Eigen::Index i = 0; i < 80; ++i) z[i] = std::sin(4 * X(i, 0)) + X(i, 1) + 0.3 * rng.normal();
  const GpFit fit = gp_mle_fit(X, z);
  const double best = gp_profile_log_likelihood(X, z, fit.params().variance, fit.params().range,
                                                fit.params().smoothness);
  CHECK(fit.log_likelihood() == doctest::Approx(best).epsilon(1e-10));
  for (int k = 0; k < 20; ++k) {
    const double v = std::exp(rng.normal(std::log(fit.params().variance), 1.0));
    const double r = std::exp(rng.normal(std::log(fit.params().range), 1.0));
    CHECK(gp_profile_log_likelihood(X, z, v, r, fit.params().smoothness) <= best + 1e-9);
  }
}

TEST_CASE("fast mode is no wider than function sampling and is fast") {
  RandomStream rng(6);
  Dataset data;
  data.X = uniform_points(220, 1, rng);
  data.y.resize(220);
  for (Eigen::Index i = 0; i < 220; ++i) data.y[i] = std::exp(std::sin(5 * data.X(i, 0)) + 0.3 * rng.normal());
  Eigen::MatrixXd query(30, 1);
  for (Eigen::Index j = 0; j < 30; ++j) query(j, 0) = (j + 0.5) / 30.0;
  SbgpConfig cfg;
  const auto start = std::chrono::steady_clock::now();
  const SbgpDraws fast = sbgp_run(data, query, cfg, RandomStream(9));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  MESSAGE("fast mode, n=220, 1000 draws: " << seconds << " s");
  CHECK(seconds < 30.0);
  cfg.mode = SbgpMode::SampleF;
  const SbgpDraws full = sbgp_run(data, query, cfg, RandomStream(9));
  const double wf = mean_width(fast.predictive, 0.9), ws = mean_width(full.predictive, 0.9);
  MESSAGE("mean 90% width fast " << wf << " sampled " << ws);
  CHECK(wf <= ws);
  CHECK(fast.g_draws.size() == 1000);
  CHECK(fast.predictive.allFinite());
}

TEST_CASE("intervals widen where the noise is larger") {
  RandomStream rng(7);
  Dataset data;
  data.X = uniform_points(200, 1, rng);
  data.y.resize(200);
  for (Eigen::Index i = 0; i < 200; ++i) {
    const double x = data.X(i, 0);
    data.y[i] = std::sin(2 * M_PI * x) + (0.05 + 0.6 * x) * rng.normal();
  }
  Eigen::MatrixXd query(2, 1);
  query << 0.1, 0.9;
  SbgpConfig cfg;
  cfg.num_draws = 500;
  const SbgpDraws out = sbgp_run(data, query, cfg, RandomStream(3));
  const double low = mean_width(out.predictive.col(0), 0.9);
  const double high = mean_width(out.predictive.col(1), 0.9);
  MESSAGE("90% width at x=0.1: " << low << ", at x=0.9: " << high);
  CHECK(high > low);
}

TEST_CASE("correctly specified data matches the plain Gaussian process") {
  RandomStream rng(8);
  Dataset data;
  data.X = uniform_points(150, 1, rng);
  data.y.resize(150);
  for (Eigen::Index i = 0; i < 150; ++i) data.y[i] = std::sin(3 * data.X(i, 0)) + 0.4 * rng.normal();
  Eigen::MatrixXd query(20, 1);
  for (Eigen::Index j = 0; j < 20; ++j) query(j, 0) = 0.05 + 0.9 * j / 19.0;
  SbgpConfig cfg;
  const SbgpDraws out = sbgp_run(data, query, cfg, RandomStream(4));
  const double semi = mean_width(out.predictive, 0.9);

  // Plain plug-in Gaussian process interval: f(x) +- z_{0.95} sigma sqrt(1 + v(x)).
  const GpFit plain = gp_mle_fit(data.X, data.y);
  const Eigen::VectorXd v = plain.predict_var(query);
  const double z95 = normal_quantile(0.95);
  double gp_width = 0.0;
  for (Eigen::Index j = 0; j < 20; ++j) gp_width += 2 * z95 * plain.params().noise_scale * std::sqrt(1 + v[j]);
  gp_width /= 20.0;
  MESSAGE("90% width sbgp " << semi << " gp " << gp_width);
  CHECK(std::abs(semi / gp_width - 1.0) < 0.10);
}
