#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sbtrans/dist.hpp"
#include "sbtrans/errors.hpp"

using namespace sbtrans;

namespace {

// |sample mean - mean| within 5 standard errors.
void check_moments(const DistKernel& k, std::size_t draws, std::uint64_t seed) {
  RandomStream rng(seed);
  std::vector<double> x(draws);
  for (auto& v : x) v = k.sample(rng);
  const double se_mean = std::sqrt(k.variance() / static_cast<double>(draws));
  CHECK(std::abs(oracle::mean(x) - k.mean()) < 5.0 * se_mean);
  // Variance check with a loose relative bound (fourth moment unknown in general).
  CHECK(std::abs(oracle::variance(x) / k.variance() - 1.0) < 0.03);
}

}  // namespace

TEST_CASE("normal_cdf reference values") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(normal_cdf(1.959964) - oracle::phi_series(1.959964)) < 1e-12);
  CHECK(std::abs(normal_cdf(1.959964) - 0.975) < 1e-6);
  CHECK(normal_cdf(3.0, 1.0, 2.0) == doctest::Approx(normal_cdf(1.0)).epsilon(1e-15));
  for (double t = -4.0; t <= 4.0; t += 0.37) CHECK(std::abs(normal_cdf(t) - oracle::phi_series(t)) < 1e-12);
}

TEST_CASE("normal_cdf rejects non-finite input") {
  CHECK_THROWS_AS(normal_cdf(std::nan("")), DomainError);
  CHECK_THROWS_AS(normal_cdf(0.0, 0.0, 0.0), DomainError);
  CHECK_THROWS_AS(normal_cdf(INFINITY), DomainError);
}

TEST_CASE("normal_quantile reference values") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  const double q = oracle::bisect([](double t) { return oracle::phi_series(t); }, 0.975, -10, 10);
  CHECK(std::abs(normal_quantile(0.975) - q) < 1e-9);
  CHECK(std::abs(normal_quantile(0.975) - 1.959964) < 1e-6);
  CHECK(normal_quantile(0.5, 3.0, 7.0) == doctest::Approx(3.0));
  for (double p : {1e-10, 1e-4, 0.1, 0.3, 0.77, 0.999, 1 - 1e-9}) {
    CHECK(std::abs(normal_cdf(normal_quantile(p)) - p) < 1e-10 * std::max(1.0, p));
  }
  CHECK_THROWS_AS(normal_quantile(0.0), DomainError);
  CHECK_THROWS_AS(normal_quantile(1.0), DomainError);
}

TEST_CASE("sample_dirichlet_flat") {
  RandomStream rng(7);
  CHECK(sample_dirichlet_flat(1, rng) == std::vector<double>{1.0});
  const auto w = sample_dirichlet_flat(3, rng);
  double s = 0.0;
  for (double v : w) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(std::abs(s - 1.0) < 1e-12);
  double first = 0.0;
  const int reps = 1000000;
  for (int r = 0; r < reps; ++r) first += sample_dirichlet_flat(2, rng)[0];
  CHECK(std::abs(first / reps - 0.5) < 0.002);
  CHECK_THROWS_AS(sample_dirichlet_flat(0, rng), DomainError);
}

TEST_CASE("ald_expansion_constants") {
  const auto c5 = ald_expansion_constants(0.5);
  CHECK(c5.a_tau == doctest::Approx(0.0));
  CHECK(c5.b_tau == doctest::Approx(2.8284271247461903));
  const auto c05 = ald_expansion_constants(0.05);
  CHECK(c05.a_tau == doctest::Approx(0.9 / 0.0475).epsilon(1e-12));
  CHECK(c05.a_tau == doctest::Approx(18.947368421).epsilon(1e-9));
  CHECK(c05.b_tau == doctest::Approx(6.488856845).epsilon(1e-9));
  CHECK(ald_expansion_constants(0.25).a_tau == doctest::Approx(-ald_expansion_constants(0.75).a_tau));
  CHECK_THROWS_AS(ald_expansion_constants(0.0), DomainError);
  CHECK_THROWS_AS(ald_expansion_constants(1.0), DomainError);
}

TEST_CASE("ALD mixture has tau-quantile zero") {
  for (double tau : {0.05, 0.25, 0.5, 0.9}) {
    const auto [a, b] = ald_expansion_constants(tau);
    RandomStream rng(11);
    const int m = 10000;
    int below = 0;
    for (int i = 0; i < m; ++i) {
      const double xi = rng.exponential();
      if (a * xi + b * std::sqrt(xi) * rng.normal() <= 0.0) ++below;
    }
    const double se = std::sqrt(tau * (1 - tau) / m);
    CHECK(std::abs(double(below) / m - tau) < 4.0 * se);
  }
}

TEST_CASE("sample_gig lambda -1/2 matches the inverse Gaussian mean") {
  for (auto [chi, psi] : std::vector<std::pair<double, double>>{{1.0, 1.0}, {4.0, 0.5}, {0.1, 3.0}}) {
    RandomStream rng(123);
    const int m = 1000000;
    double s = 0.0, s2 = 0.0;
    bool positive = true;
    for (int i = 0; i < m; ++i) {
      const double x = sample_gig(-0.5, chi, psi, rng);
      positive = positive && x > 0.0;
      s += x;
      s2 += x * x;
    }
    CHECK(positive);
    const double mu = std::sqrt(chi / psi);
    // IG(mu, shape chi) variance mu^3 / chi
    const double var = mu * mu * mu / chi;
    CHECK(std::abs(s / m - mu) < 5.0 * std::sqrt(var / m));
    CHECK(std::abs((s2 / m - (s / m) * (s / m)) / var - 1.0) < 0.03);
  }
}

TEST_CASE("sample_gig (0.5, 1, 1) mean matches quadrature") {
  auto dens = [](double x) { return x <= 0 ? 0.0 : std::pow(x, -0.5) * std::exp(-0.5 * (1.0 / x + x)); };
  // Substitute x = u^2 to remove the endpoint singularity.
  const double norm = oracle::simpson([&](double u) { return u == 0 ? 0.0 : 2 * u * dens(u * u); }, 0, 12, 200000);
  const double first =
      oracle::simpson([&](double u) { return u == 0 ? 0.0 : 2 * u * u * u * dens(u * u); }, 0, 12, 200000);
  const double oracle_mean = first / norm;
  RandomStream rng(5);
  const int m = 1000000;
  double s = 0.0;
  for (int i = 0; i < m; ++i) s += sample_gig(0.5, 1.0, 1.0, rng);
  CHECK(std::abs(s / m / oracle_mean - 1.0) < 0.01);
  CHECK(gig_mean(0.5, 1.0, 1.0) == doctest::Approx(oracle_mean).epsilon(1e-6));
}

TEST_CASE("sample_gig rejects bad parameters and covers extreme regimes") {
  RandomStream rng(1);
  CHECK_THROWS_AS(sample_gig(0.5, 0.0, 1.0, rng), DomainError);
  CHECK_THROWS_AS(sample_gig(0.5, 1.0, -1.0, rng), DomainError);
  for (auto [l, c, p] : std::vector<std::array<double, 3>>{{0.5, 1e-8, 2.5}, {0.5, 500, 200}, {3.0, 0.01, 0.01}, {-2.0, 30, 0.1}}) {
    const auto k = DistKernel::gig(l, c, p);
    check_moments(k, 200000, 99);
  }
}

TEST_CASE("beta_quantile") {
  CHECK(beta_quantile(0.0, 2, 3) == 0.0);
  CHECK(beta_quantile(1.0, 2, 3) == 1.0);
  CHECK(beta_quantile(0.5, 1, 1) == doctest::Approx(0.5));
  // Oracle: bisection on a quadrature of the Beta(0.1, 0.5) density after x = u^10.
  const double a = 0.1, b = 0.5;
  const double B = std::tgamma(a) * std::tgamma(b) / std::tgamma(a + b);
  auto cdf = [&](double x) {
    const double top = std::pow(x, 1.0 / 10.0);
    // d x = 10 u^9 du; x^(a-1) = u^(10a - 10) = u^-9
    return oracle::simpson([&](double u) { return 10.0 * std::pow(1 - std::pow(u, 10), b - 1); }, 0, top, 20000) / B;
  };
  const double ref = oracle::bisect(cdf, 0.3, 0.0, 0.999, 80);
  CHECK(std::abs(beta_quantile(0.3, a, b) - ref) < 1e-8 + 1e-6 * ref);
  for (double p : {0.01, 0.3, 0.8, 0.99}) CHECK(std::abs(beta_cdf(beta_quantile(p, a, b), a, b) - p) < 1e-8);
}

TEST_CASE("DistKernel quantile(cdf(t)) round trip") {
  std::vector<std::pair<DistKernel, std::vector<double>>> cases = {
      {DistKernel::normal(1, 2), {-3, 0, 1, 4}},
      {DistKernel::exponential(1.5), {0.1, 1, 3}},
      {DistKernel::gamma(2.5, 0.7), {0.5, 3, 9}},
      {DistKernel::beta(2, 5), {0.05, 0.3, 0.8}},
      {DistKernel::asymmetric_laplace(0.2, 0.5, 1.3), {-3, 0.4, 0.6, 5}},
      {DistKernel::gig(0.5, 2, 3), {0.2, 0.8, 2.5}},
      {DistKernel::truncated_normal(0.5, 0.5, 0, 2), {0.1, 0.5, 1.9}},
  };
  for (const auto& [k, pts] : cases) {
    for (double t : pts) CHECK(std::abs(k.quantile(k.cdf(t)) - t) < 1e-8 * std::max(1.0, std::abs(t)));
  }
}

TEST_CASE("DistKernel cdf is monotone with correct limits") {
  const std::vector<DistKernel> ks = {DistKernel::normal(0, 1),           DistKernel::exponential(2),
                                      DistKernel::gamma(0.5, 1),          DistKernel::beta(0.1, 0.5),
                                      DistKernel::asymmetric_laplace(0.9), DistKernel::gig(-1, 1, 2),
                                      DistKernel::truncated_normal(0, 1, -1, 1)};
  for (const auto& k : ks) {
    double prev = 0.0;
    for (double t = -20; t <= 20; t += 0.25) {
      const double c = k.cdf(t);
      CHECK(c >= prev - 1e-14);
      prev = c;
    }
    CHECK(k.cdf(-1e3) < 1e-9);
    CHECK(k.cdf(1e3) > 1 - 1e-9);
  }
}

TEST_CASE("DistKernel samplers match analytic moments and CDF") {
  const std::vector<DistKernel> ks = {DistKernel::normal(-1, 3),          DistKernel::exponential(0.5),
                                      DistKernel::gamma(3, 2),            DistKernel::beta(2, 3),
                                      DistKernel::asymmetric_laplace(0.3), DistKernel::gig(0.5, 1, 1),
                                      DistKernel::truncated_normal(0.5, 0.5, 0, 2)};
  std::uint64_t seed = 1000;
  for (const auto& k : ks) {
    check_moments(k, 1000000, seed++);
    RandomStream rng(seed++);
    std::vector<double> x(100000);
    for (auto& v : x) v = k.sample(rng);
    // Critical KS value at alpha = 0.001 is 1.95 / sqrt(m).
    CHECK(oracle::ks_one_sample(x, [&](double t) { return k.cdf(t); }) < 1.95 / std::sqrt(100000.0));
  }
}

TEST_CASE("truncated normal draws stay inside the interval") {
  RandomStream rng(3);
  bool inside = true;
  for (int i = 0; i < 100000; ++i) {
    const double x = sample_truncated_normal(0.5, 0.5, 0.0, 2.0, rng);
    inside = inside && x > 0.0 && x < 2.0;
  }
  CHECK(inside);
}
