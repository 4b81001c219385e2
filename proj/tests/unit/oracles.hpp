#pragma once

// Independent reference computations used by the unit tests. Nothing here
// calls into the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

/// erf by its Maclaurin series in long double; accurate for |x| <= 2.
inline long double erf_series(long double x) {
  long double term = x;
  long double sum = x;
  for (int k = 1; k < 200; ++k) {
    term *= -x * x / k;
    const long double add = term / (2 * k + 1);
    sum += add;
    if (std::fabs(add) < 1e-30L) break;
  }
  return sum * 2.0L / std::sqrt(3.14159265358979323846264338327950288L);
}

/// erfc(x) for x >= 2 by Laplace's continued fraction, evaluated backward.
inline long double erfc_fraction(long double x) {
  long double f = x;
  for (int k = 400; k >= 1; --k) f = x + (k / 2.0L) / f;
  return std::exp(-x * x) / (std::sqrt(3.14159265358979323846264338327950288L) * f);
}

inline double phi_series(double t, double mean = 0.0, double sd = 1.0) {
  const long double u = (static_cast<long double>(t) - mean) / sd;
  const long double x = u / std::sqrt(2.0L);
  if (x >= 2.0L) return static_cast<double>(1.0L - 0.5L * erfc_fraction(x));
  if (x <= -2.0L) return static_cast<double>(0.5L * erfc_fraction(-x));
  return static_cast<double>(0.5L * (1.0L + erf_series(x)));
}

inline double phi_pdf(double t, double mean = 0.0, double sd = 1.0) {
  const double u = (t - mean) / sd;
  return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * M_PI));
}

/// Composite Simpson rule with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

/// Root of an increasing function on [lo, hi] by plain bisection.
inline double bisect(const std::function<double(double)>& f, double target, double lo, double hi, int iters = 200) {
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// One-sample Kolmogorov-Smirnov statistic.
inline double ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double F = cdf(x[i]);
    d = std::max({d, (i + 1) / n - F, F - i / n});
  }
  return d;
}

/// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

/// Dense Gauss-Jordan inverse of a small row-major matrix.
inline std::vector<std::vector<double>> invert(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    std::swap(inv[c], inv[piv]);
    const double d = a[c][c];
    for (std::size_t k = 0; k < n; ++k) {
      a[c][k] /= d;
      inv[c][k] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c];
      for (std::size_t k = 0; k < n; ++k) {
        a[r][k] -= f * a[c][k];
        inv[r][k] -= f * inv[c][k];
      }
    }
  }
  return inv;
}

/// Solves the normal equations (X'X) b = X'y with the dense inverse above.
inline std::vector<double> ols(const std::vector<std::vector<double>>& X, const std::vector<double>& y) {
  const std::size_t n = X.size();
  const std::size_t d = X[0].size();
  std::vector<std::vector<double>> xtx(d, std::vector<double>(d, 0.0));
  std::vector<double> xty(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      xty[a] += X[i][a] * y[i];
      for (std::size_t b = 0; b < d; ++b) xtx[a][b] += X[i][a] * X[i][b];
    }
  }
  const auto inv = invert(xtx);
  std::vector<double> beta(d, 0.0);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) beta[a] += inv[a][b] * xty[b];
  }
  return beta;
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

/// Closed-form CRPS of N(mu, sigma^2) at y.
inline double gaussian_crps(double mu, double sigma, double y) {
  const double z = (y - mu) / sigma;
  return sigma * (z * (2.0 * phi_series(z) - 1.0) + 2.0 * phi_pdf(z) - 1.0 / std::sqrt(M_PI));
}

}  // namespace oracle
