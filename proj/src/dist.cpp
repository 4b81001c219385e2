#include "sbtrans/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "sbtrans/errors.hpp"

namespace sbtrans {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DomainError(std::string(what) + " must be finite");
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " must be positive");
}

void require_probability_open(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("probability must lie in (0, 1)");
}

// Bisection on a nondecreasing cdf, expanding the bracket geometrically.
template <class Cdf>
double invert_by_bisection(const Cdf& cdf, double p, double lo, double hi, double floor_lo) {
  double width = std::max(1.0, hi - lo);
  while (cdf(lo) > p) {
    lo -= width;
    width *= 2.0;
    if (lo < floor_lo) {
      lo = floor_lo;
      break;
    }
  }
  width = std::max(1.0, hi - lo);
  while (cdf(hi) < p) {
    hi += width;
    width *= 2.0;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

// ---------------------------------------------------------------------------

double normal_pdf(double t, double mean, double sd) {
  return std::exp(normal_log_pdf(t, mean, sd));
}

double normal_log_pdf(double t, double mean, double sd) {
  const double u = (t - mean) / sd;
  return -0.5 * u * u - kLogSqrt2Pi - std::log(sd);
}

double normal_cdf(double t, double mean, double sd) {
  require_finite(t, "normal_cdf argument");
  require_finite(mean, "normal mean");
  require_positive(sd, "normal sd");
  return 0.5 * std::erfc(-(t - mean) / sd * kInvSqrt2);
}

double normal_quantile(double p, double mean, double sd) {
  require_probability_open(p);
  require_finite(mean, "normal mean");
  require_positive(sd, "normal sd");
  // Phi^{-1}(p) = -sqrt(2) erfc^{-1}(2p)
  return mean - sd * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

std::vector<double> sample_dirichlet_flat(std::size_t n, RandomStream& rng) {
  if (n == 0) throw DomainError("Dirichlet dimension must be at least 1");
  std::vector<double> w(n);
  double total = 0.0;
  for (auto& v : w) {
    v = rng.exponential();
    total += v;
  }
  for (auto& v : w) v /= total;
  return w;
}

AldConstants ald_expansion_constants(double tau) {
  require_probability_open(tau);
  const double q = tau * (1.0 - tau);
  return {(1.0 - 2.0 * tau) / q, std::sqrt(2.0 / q)};
}

// ---------------------------------------------------------------------------
// GIG. Devroye, "Random variate generation for the generalized inverse
// Gaussian distribution", Statistics and Computing 24 (2014). The standard
// form has density proportional to x^(lambda-1) exp(-omega (x + 1/x) / 2);
// the algorithm samples log(x / m) by rejection from a flat-exponential hat.

namespace {

struct DevroyeGig {
  double lambda;  // |lambda|
  double alpha;
  double t, s;
  double eta, zeta, theta, xi;
  double p, q, r;
  double t_shift, s_shift;

  double log_target(double x) const {
    return -alpha * (std::cosh(x) - 1.0) - lambda * (std::exp(x) - x - 1.0);
  }
  double log_target_deriv(double x) const {
    return -alpha * std::sinh(x) - lambda * (std::exp(x) - 1.0);
  }

  DevroyeGig(double abs_lambda, double omega) : lambda(abs_lambda) {
    alpha = std::sqrt(omega * omega + lambda * lambda) - lambda;

    double x = -log_target(1.0);
    if (x >= 0.5 && x <= 2.0) {
      t = 1.0;
    } else if (x > 2.0) {
      t = std::sqrt(2.0 / (alpha + lambda));
    } else {
      t = std::log(4.0 / (alpha + 2.0 * lambda));
    }
    x = -log_target(-1.0);
    if (x >= 0.5 && x <= 2.0) {
      s = 1.0;
    } else if (x > 2.0) {
      s = std::sqrt(4.0 / (alpha * std::cosh(1.0) + lambda));
    } else {
      const double inv_lambda = lambda > 0.0 ? 1.0 / lambda : std::numeric_limits<double>::infinity();
      s = std::min(inv_lambda, std::log(1.0 + 1.0 / alpha + std::sqrt(1.0 / (alpha * alpha) + 2.0 / alpha)));
    }

    eta = -log_target(t);
    zeta = -log_target_deriv(t);
    theta = -log_target(-s);
    xi = log_target_deriv(-s);
    p = 1.0 / xi;
    r = 1.0 / zeta;
    t_shift = t - r * eta;
    s_shift = s - p * theta;
    q = t_shift + s_shift;
  }

  double log_hat(double x) const {
    if (x >= -s_shift && x <= t_shift) return 0.0;
    if (x > t_shift) return -eta - zeta * (x - t);
    return -theta + xi * (x + s);
  }

  double draw(RandomStream& rng) const {
    const double total = p + q + r;
    while (true) {
      const double u = rng.uniform();
      const double v = rng.uniform();
      const double w = rng.uniform();
      double x;
      if (u < q / total) {
        x = -s_shift + q * v;
      } else if (u < (q + r) / total) {
        x = t_shift - r * std::log(v);
      } else {
        x = -s_shift + p * std::log(v);
      }
      if (std::log(w) + log_hat(x) <= log_target(x)) return x;
    }
  }
};

}  // namespace

double sample_gig(double lambda, double chi, double psi, RandomStream& rng) {
  require_finite(lambda, "GIG lambda");
  require_positive(chi, "GIG chi");
  require_positive(psi, "GIG psi");
  const double omega = std::sqrt(chi * psi);
  const double abs_lambda = std::abs(lambda);
  const DevroyeGig gen(abs_lambda, omega);
  const double x = gen.draw(rng);
  const double mode_scale = abs_lambda / omega + std::sqrt(1.0 + abs_lambda * abs_lambda / (omega * omega));
  const double standard = mode_scale * std::exp(x);
  const double scale = std::sqrt(chi / psi);
  return lambda >= 0.0 ? scale * standard : scale / standard;
}

double gig_log_normalizer(double lambda, double chi, double psi) {
  require_positive(chi, "GIG chi");
  require_positive(psi, "GIG psi");
  const double omega = std::sqrt(chi * psi);
  // integral of x^(lambda-1) exp(-(chi/x + psi x)/2) = 2 K_lambda(omega) (chi/psi)^(lambda/2)
  return std::log(2.0 * boost::math::cyl_bessel_k(lambda, omega)) + 0.5 * lambda * std::log(chi / psi);
}

double gig_mean(double lambda, double chi, double psi) {
  const double omega = std::sqrt(chi * psi);
  return std::sqrt(chi / psi) * boost::math::cyl_bessel_k(lambda + 1.0, omega) /
         boost::math::cyl_bessel_k(lambda, omega);
}

// ---------------------------------------------------------------------------

double beta_cdf(double x, double a, double b) {
  require_positive(a, "beta a");
  require_positive(b, "beta b");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return boost::math::ibeta(a, b, x);
}

double beta_quantile(double p, double a, double b) {
  require_positive(a, "beta a");
  require_positive(b, "beta b");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("probability must lie in [0, 1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  return boost::math::ibeta_inv(a, b, p);
}

double sample_truncated_normal(double mean, double sd, double lower, double upper,
                               RandomStream& rng) {
  require_positive(sd, "truncated normal sd");
  if (!(lower < upper)) throw DomainError("truncation interval is empty");
  const double lo = normal_cdf((lower - mean) / sd);
  const double hi = normal_cdf((upper - mean) / sd);
  if (!(hi > lo)) throw NumericalError("truncation interval has no normal mass");
  const double u = lo + (hi - lo) * rng.uniform();
  const double x = mean + sd * normal_quantile(std::clamp(u, 1e-300, 1.0 - 1e-16));
  return std::clamp(x, std::nextafter(lower, upper), std::nextafter(upper, lower));
}

// ---------------------------------------------------------------------------
// DistKernel

DistKernel::DistKernel(Family family, std::vector<double> params)
    : family_(family), params_(std::move(params)) {}

DistKernel DistKernel::normal(double mean, double sd) {
  require_finite(mean, "normal mean");
  require_positive(sd, "normal sd");
  return DistKernel(Family::Normal, {mean, sd});
}

DistKernel DistKernel::exponential(double rate) {
  require_positive(rate, "exponential rate");
  return DistKernel(Family::Exponential, {rate});
}

DistKernel DistKernel::gamma(double shape, double rate) {
  require_positive(shape, "gamma shape");
  require_positive(rate, "gamma rate");
  return DistKernel(Family::Gamma, {shape, rate});
}

DistKernel DistKernel::beta(double a, double b) {
  require_positive(a, "beta a");
  require_positive(b, "beta b");
  return DistKernel(Family::Beta, {a, b});
}

DistKernel DistKernel::asymmetric_laplace(double tau, double location, double scale) {
  require_probability_open(tau);
  require_finite(location, "ALD location");
  require_positive(scale, "ALD scale");
  return DistKernel(Family::AsymmetricLaplace, {tau, location, scale});
}

DistKernel DistKernel::gig(double lambda, double chi, double psi) {
  require_finite(lambda, "GIG lambda");
  require_positive(chi, "GIG chi");
  require_positive(psi, "GIG psi");
  return DistKernel(Family::GeneralizedInverseGaussian, {lambda, chi, psi});
}

DistKernel DistKernel::truncated_normal(double mean, double sd, double lower, double upper) {
  require_finite(mean, "truncated normal mean");
  require_positive(sd, "truncated normal sd");
  if (!(lower < upper)) throw DomainError("truncation interval is empty");
  return DistKernel(Family::TruncatedNormal, {mean, sd, lower, upper});
}

double DistKernel::pdf(double t) const {
  const auto& q = params_;
  switch (family_) {
    case Family::Normal:
      return normal_pdf(t, q[0], q[1]);
    case Family::Exponential:
      return t < 0.0 ? 0.0 : q[0] * std::exp(-q[0] * t);
    case Family::Gamma:
      return t < 0.0 ? 0.0 : boost::math::gamma_p_derivative(q[0], q[1] * t) * q[1];
    case Family::Beta:
      return (t < 0.0 || t > 1.0) ? 0.0 : boost::math::ibeta_derivative(q[0], q[1], t);
    case Family::AsymmetricLaplace: {
      const double tau = q[0];
      const double u = (t - q[1]) / q[2];
      const double rho = u * (tau - (u < 0.0 ? 1.0 : 0.0));
      return tau * (1.0 - tau) / q[2] * std::exp(-rho);
    }
    case Family::GeneralizedInverseGaussian: {
      if (t <= 0.0) return 0.0;
      const double log_f = (q[0] - 1.0) * std::log(t) - 0.5 * (q[1] / t + q[2] * t);
      return std::exp(log_f - gig_log_normalizer(q[0], q[1], q[2]));
    }
    case Family::TruncatedNormal: {
      if (t < q[2] || t > q[3]) return 0.0;
      const double mass = normal_cdf(q[3], q[0], q[1]) - normal_cdf(q[2], q[0], q[1]);
      return normal_pdf(t, q[0], q[1]) / mass;
    }
  }
  return 0.0;
}

double DistKernel::cdf(double t) const {
  const auto& q = params_;
  switch (family_) {
    case Family::Normal:
      return normal_cdf(t, q[0], q[1]);
    case Family::Exponential:
      return t <= 0.0 ? 0.0 : -std::expm1(-q[0] * t);
    case Family::Gamma:
      return t <= 0.0 ? 0.0 : boost::math::gamma_p(q[0], q[1] * t);
    case Family::Beta:
      return beta_cdf(t, q[0], q[1]);
    case Family::AsymmetricLaplace: {
      const double tau = q[0];
      const double u = (t - q[1]) / q[2];
      if (u < 0.0) return tau * std::exp((1.0 - tau) * u);
      return 1.0 - (1.0 - tau) * std::exp(-tau * u);
    }
    case Family::GeneralizedInverseGaussian: {
      if (t <= 0.0) return 0.0;
      const double log_norm = gig_log_normalizer(q[0], q[1], q[2]);
      auto density = [&](double x) {
        if (x <= 0.0) return 0.0;
        return std::exp((q[0] - 1.0) * std::log(x) - 0.5 * (q[1] / x + q[2] * x) - log_norm);
      };
      // Integrate from the nearer end to keep the integrand mass small.
      const double mean = gig_mean(q[0], q[1], q[2]);
      if (t <= mean) {
        return std::clamp(boost::math::quadrature::gauss_kronrod<double, 61>::integrate(density, 0.0, t, 15, 1e-13),
                          0.0, 1.0);
      }
      const double upper = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
          density, t, std::numeric_limits<double>::infinity(), 15, 1e-13);
      return std::clamp(1.0 - upper, 0.0, 1.0);
    }
    case Family::TruncatedNormal: {
      if (t <= q[2]) return 0.0;
      if (t >= q[3]) return 1.0;
      const double lo = normal_cdf(q[2], q[0], q[1]);
      const double hi = normal_cdf(q[3], q[0], q[1]);
      return (normal_cdf(t, q[0], q[1]) - lo) / (hi - lo);
    }
  }
  return 0.0;
}

double DistKernel::quantile(double p) const {
  const auto& q = params_;
  switch (family_) {
    case Family::Normal:
      return normal_quantile(p, q[0], q[1]);
    case Family::Exponential:
      require_probability_open(p);
      return -std::log1p(-p) / q[0];
    case Family::Gamma:
      require_probability_open(p);
      return boost::math::gamma_p_inv(q[0], p) / q[1];
    case Family::Beta:
      return beta_quantile(p, q[0], q[1]);
    case Family::AsymmetricLaplace: {
      require_probability_open(p);
      const double tau = q[0];
      const double u = p < tau ? std::log(p / tau) / (1.0 - tau) : -std::log((1.0 - p) / (1.0 - tau)) / tau;
      return q[1] + q[2] * u;
    }
    case Family::GeneralizedInverseGaussian: {
      require_probability_open(p);
      const double m = gig_mean(q[0], q[1], q[2]);
      return invert_by_bisection([this](double x) { return cdf(x); }, p, 0.0, 2.0 * m, 0.0);
    }
    case Family::TruncatedNormal: {
      require_probability_open(p);
      const double lo = normal_cdf(q[2], q[0], q[1]);
      const double hi = normal_cdf(q[3], q[0], q[1]);
      return normal_quantile(lo + p * (hi - lo), q[0], q[1]);
    }
  }
  return 0.0;
}

double DistKernel::sample(RandomStream& rng) const {
  const auto& q = params_;
  switch (family_) {
    case Family::Normal:
      return rng.normal(q[0], q[1]);
    case Family::Exponential:
      return rng.exponential() / q[0];
    case Family::Gamma:
      return rng.gamma(q[0], q[1]);
    case Family::Beta: {
      const double x = rng.gamma(q[0], 1.0);
      const double y = rng.gamma(q[1], 1.0);
      return x / (x + y);
    }
    case Family::AsymmetricLaplace: {
      const auto [a, b] = ald_expansion_constants(q[0]);
      const double xi = rng.exponential();
      return q[1] + q[2] * (a * xi + b * std::sqrt(xi) * rng.normal());
    }
    case Family::GeneralizedInverseGaussian:
      return sample_gig(q[0], q[1], q[2], rng);
    case Family::TruncatedNormal:
      return sample_truncated_normal(q[0], q[1], q[2], q[3], rng);
  }
  return 0.0;
}

double DistKernel::mean() const {
  const auto& q = params_;
  switch (family_) {
    case Family::Normal:
      return q[0];
    case Family::Exponential:
      return 1.0 / q[0];
    case Family::Gamma:
      return q[0] / q[1];
    case Family::Beta:
      return q[0] / (q[0] + q[1]);
    case Family::AsymmetricLaplace:
      return q[1] + q[2] * ald_expansion_constants(q[0]).a_tau;
    case Family::GeneralizedInverseGaussian:
      return gig_mean(q[0], q[1], q[2]);
    case Family::TruncatedNormal: {
      const double a = (q[2] - q[0]) / q[1];
      const double b = (q[3] - q[0]) / q[1];
      const double z = normal_cdf(b) - normal_cdf(a);
      return q[0] + q[1] * (normal_pdf(a) - normal_pdf(b)) / z;
    }
  }
  return 0.0;
}

double DistKernel::variance() const {
  const auto& q = params_;
  switch (family_) {
    case Family::Normal:
      return q[1] * q[1];
    case Family::Exponential:
      return 1.0 / (q[0] * q[0]);
    case Family::Gamma:
      return q[0] / (q[1] * q[1]);
    case Family::Beta: {
      const double s = q[0] + q[1];
      return q[0] * q[1] / (s * s * (s + 1.0));
    }
    case Family::AsymmetricLaplace: {
      const double tau = q[0];
      const double v = (1.0 - 2.0 * tau + 2.0 * tau * tau) / (tau * tau * (1.0 - tau) * (1.0 - tau));
      return q[2] * q[2] * v;
    }
    case Family::GeneralizedInverseGaussian: {
      const double omega = std::sqrt(q[1] * q[2]);
      const double k0 = boost::math::cyl_bessel_k(q[0], omega);
      const double k1 = boost::math::cyl_bessel_k(q[0] + 1.0, omega);
      const double k2 = boost::math::cyl_bessel_k(q[0] + 2.0, omega);
      const double ratio = q[1] / q[2];
      return ratio * (k2 / k0 - (k1 / k0) * (k1 / k0));
    }
    case Family::TruncatedNormal: {
      const double a = (q[2] - q[0]) / q[1];
      const double b = (q[3] - q[0]) / q[1];
      const double z = normal_cdf(b) - normal_cdf(a);
      const double pa = normal_pdf(a);
      const double pb = normal_pdf(b);
      const double term = (pa - pb) / z;
      const double apa = std::isfinite(a) ? a * pa : 0.0;
      const double bpb = std::isfinite(b) ? b * pb : 0.0;
      return q[1] * q[1] * (1.0 + (apa - bpb) / z - term * term);
    }
  }
  return 0.0;
}

}  // namespace sbtrans
