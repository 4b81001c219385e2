#include "sbtrans/transform.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace sbtrans {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline double std_normal_cdf(double u) { return 0.5 * std::erfc(-u * kInvSqrt2); }
inline double std_normal_pdf(double u) { return kInvSqrt2Pi * std::exp(-0.5 * u * u); }

// Cubic Hermite basis on s in [0, 1] for an interval of width h.
inline double hermite_value(double y0, double y1, double m0, double m1, double h, double s) {
  const double s2 = s * s;
  const double s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * m0 + (-2 * s3 + 3 * s2) * y1 +
         (s3 - s2) * h * m1;
}

// d/ds of hermite_value.
inline double hermite_slope_s(double y0, double y1, double m0, double m1, double h, double s) {
  const double s2 = s * s;
  return (6 * s2 - 6 * s) * y0 + (3 * s2 - 4 * s + 1) * h * m0 + (-6 * s2 + 6 * s) * y1 +
         (3 * s2 - 2 * s) * h * m1;
}

// Solves hermite_value(s) = target for s in [0, 1], assuming the endpoint
// values bracket the target. Newton steps, falling back to bisection.
double solve_hermite(double y0, double y1, double m0, double m1, double h, double target) {
  if (target <= y0) return 0.0;
  if (target >= y1) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  double s = (target - y0) / (y1 - y0);
  for (int it = 0; it < 100; ++it) {
    const double val = hermite_value(y0, y1, m0, m1, h, s) - target;
    if (val == 0.0) return s;
    if (val < 0.0) {
      lo = s;
    } else {
      hi = s;
    }
    if (hi - lo < 1e-15) break;
    const double d = hermite_slope_s(y0, y1, m0, m1, h, s);
    double next = d > 0.0 ? s - val / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) < 1e-16) {
      s = next;
      break;
    }
    s = next;
  }
  return s;
}

// Quintic Hermite on [0, 1] from values, first and second derivatives
// (derivatives already scaled by the interval width).
struct Quintic {
  double y0, y1, d0, d1, e0, e1;

  double value(double s) const {
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s, s5 = s4 * s;
    return y0 * (1 - 10 * s3 + 15 * s4 - 6 * s5) + d0 * (s - 6 * s3 + 8 * s4 - 3 * s5) +
           e0 * (0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5) + e1 * (0.5 * s3 - s4 + 0.5 * s5) +
           d1 * (-4 * s3 + 7 * s4 - 3 * s5) + y1 * (10 * s3 - 15 * s4 + 6 * s5);
  }

  double slope(double s) const {
    const double s2 = s * s, s3 = s2 * s, s4 = s3 * s;
    return y0 * (-30 * s2 + 60 * s3 - 30 * s4) + d0 * (1 - 18 * s2 + 32 * s3 - 15 * s4) +
           e0 * (s - 4.5 * s2 + 6 * s3 - 2.5 * s4) + e1 * (1.5 * s2 - 4 * s3 + 2.5 * s4) +
           d1 * (-12 * s2 + 28 * s3 - 15 * s4) + y1 * (30 * s2 - 60 * s3 + 30 * s4);
  }

  // s in [0, 1] with value(s) = target; endpoints bracket the target.
  double solve(double target) const {
    if (target <= y0) return 0.0;
    if (target >= y1) return 1.0;
    double lo = 0.0;
    double hi = 1.0;
    double s = (target - y0) / (y1 - y0);
    for (int it = 0; it < 100; ++it) {
      const double val = value(s) - target;
      if (val == 0.0) return s;
      if (val < 0.0) {
        lo = s;
      } else {
        hi = s;
      }
      if (hi - lo < 1e-15) break;
      const double d = slope(s);
      double next = d > 0.0 ? s - val / d : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - s) < 1e-16) return next;
      s = next;
    }
    return s;
  }
};

}  // namespace

// ---------------------------------------------------------------------------

ResponseAtoms ResponseAtoms::from(std::span<const double> y) {
  for (double v : y) {
    if (!std::isfinite(v)) throw InputError("responses must be finite");
  }
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
  ResponseAtoms atoms;
  atoms.atom_of.resize(y.size());
  for (std::size_t idx : order) {
    if (atoms.values.empty() || y[idx] != atoms.values.back()) atoms.values.push_back(y[idx]);
    atoms.atom_of[idx] = atoms.values.size() - 1;
  }
  return atoms;
}

EmpiricalCdf::EmpiricalCdf(std::vector<double> atoms, std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
  if (atoms_.empty() || atoms_.size() != weights_.size()) {
    throw DomainError("empirical CDF needs matching, nonempty atoms and weights");
  }
  for (std::size_t j = 1; j < atoms_.size(); ++j) {
    if (!(atoms_[j] > atoms_[j - 1])) throw DomainError("empirical CDF atoms must be strictly increasing");
  }
}

double EmpiricalCdf::evaluate(double t) const {
  const auto end = std::upper_bound(atoms_.begin(), atoms_.end(), t);
  const auto count = static_cast<std::size_t>(end - atoms_.begin());
  if (count == atoms_.size()) return 1.0;
  double total = 0.0;
  for (std::size_t j = 0; j < count; ++j) total += weights_[j];
  return std::min(total, 1.0);
}

std::vector<double> EmpiricalCdf::cumulative() const {
  std::vector<double> out(weights_.size());
  double total = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    total += weights_[j];
    out[j] = std::min(total, 1.0);
  }
  out.back() = 1.0;
  return out;
}

EmpiricalCdf sample_Fy(const ResponseAtoms& atoms, RandomStream& rng) {
  if (atoms.num_obs() < 2) throw InsufficientDataError("the response bootstrap needs at least two observations");
  const std::vector<double> alpha = sample_dirichlet_flat(atoms.num_obs(), rng);
  std::vector<double> weights(atoms.num_atoms(), 0.0);
  for (std::size_t i = 0; i < alpha.size(); ++i) weights[atoms.atom_of[i]] += alpha[i];
  return EmpiricalCdf(atoms.values, std::move(weights));
}

EmpiricalCdf sample_Fy(std::span<const double> y, RandomStream& rng) {
  if (y.size() < 2) throw InsufficientDataError("the response bootstrap needs at least two observations");
  return sample_Fy(ResponseAtoms::from(y), rng);
}

EmpiricalCdf empirical_cdf(const ResponseAtoms& atoms) {
  if (atoms.num_obs() == 0) throw InsufficientDataError("no observations");
  std::vector<double> weights(atoms.num_atoms(), 0.0);
  const double w = 1.0 / static_cast<double>(atoms.num_obs());
  for (std::size_t a : atoms.atom_of) weights[a] += w;
  return EmpiricalCdf(atoms.values, std::move(weights));
}

std::vector<double> rescaled_empirical_targets(const ResponseAtoms& atoms) {
  std::vector<std::size_t> counts(atoms.num_atoms(), 0);
  for (std::size_t a : atoms.atom_of) ++counts[a];
  const double denom = static_cast<double>(atoms.num_obs()) + 1.0;
  std::vector<double> out(counts.size());
  std::size_t running = 0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    running += counts[j];
    out[j] = static_cast<double>(running) / denom;
  }
  return out;
}

// ---------------------------------------------------------------------------

NormalComponents::NormalComponents(std::vector<double> means, std::vector<double> sds)
    : means_(std::move(means)), sds_(std::move(sds)) {
  if (means_.empty() || means_.size() != sds_.size()) throw DomainError("normal components need matching means and sds");
  for (std::size_t i = 0; i < sds_.size(); ++i) {
    if (!std::isfinite(means_[i])) throw NumericalError("component mean is not finite");
    if (!(sds_[i] > 0.0) || !std::isfinite(sds_[i])) throw NumericalError("component sd must be positive and finite");
  }
}

double NormalComponents::cdf(std::size_t i, double t) const { return std_normal_cdf((t - means_[i]) / sds_[i]); }

double NormalComponents::pdf(std::size_t i, double t) const {
  return std_normal_pdf((t - means_[i]) / sds_[i]) / sds_[i];
}

double NormalComponents::pdf_slope(std::size_t i, double t) const {
  const double u = (t - means_[i]) / sds_[i];
  return -u * std_normal_pdf(u) / (sds_[i] * sds_[i]);
}

double NormalComponents::min_scale() const { return *std::min_element(sds_.begin(), sds_.end()); }

ScaleMixtureComponents::ScaleMixtureComponents(std::vector<double> means, std::vector<double> extra_var,
                                               std::vector<double> xi, double a, double b)
    : means_(std::move(means)), extra_var_(std::move(extra_var)), xi_(std::move(xi)), a_(a), b2_(b * b) {
  if (means_.empty() || means_.size() != extra_var_.size()) {
    throw DomainError("scale-mixture components need matching means and variances");
  }
  if (xi_.empty()) throw DomainError("scale-mixture components need at least one mixing draw");
  for (double v : xi_) {
    if (!(v > 0.0)) throw DomainError("mixing draws must be positive");
  }
  for (double v : extra_var_) {
    if (!(v >= 0.0)) throw NumericalError("component variance must be nonnegative");
  }
  const double S = static_cast<double>(xi_.size());
  xi_mean_ = std::accumulate(xi_.begin(), xi_.end(), 0.0) / S;
  for (double v : xi_) xi_var_ += (v - xi_mean_) * (v - xi_mean_);
  xi_var_ /= S;
}

double ScaleMixtureComponents::cdf(std::size_t i, double t) const {
  double total = 0.0;
  for (double x : xi_) total += std_normal_cdf((t - means_[i] - a_ * x) / std::sqrt(b2_ * x + extra_var_[i]));
  return total / static_cast<double>(xi_.size());
}

double ScaleMixtureComponents::pdf(std::size_t i, double t) const {
  double total = 0.0;
  for (double x : xi_) {
    const double sd = std::sqrt(b2_ * x + extra_var_[i]);
    total += std_normal_pdf((t - means_[i] - a_ * x) / sd) / sd;
  }
  return total / static_cast<double>(xi_.size());
}

double ScaleMixtureComponents::pdf_slope(std::size_t i, double t) const {
  double total = 0.0;
  for (double x : xi_) {
    const double var = b2_ * x + extra_var_[i];
    const double sd = std::sqrt(var);
    const double u = (t - means_[i] - a_ * x) / sd;
    total += -u * std_normal_pdf(u) / var;
  }
  return total / static_cast<double>(xi_.size());
}

void ScaleMixtureComponents::tabulate(std::size_t i, double lower, double step, std::size_t count, double* cdf,
                                      double* pdf, double* slope) const {
  std::fill(cdf, cdf + count, 0.0);
  std::fill(pdf, pdf + count, 0.0);
  std::fill(slope, slope + count, 0.0);
  // Each normal piece only touches the grid within +-kReach of its center;
  // beyond that its CDF is 0 or 1 to double precision.
  constexpr double kReach = 9.0;
  const auto last = static_cast<double>(count - 1);
  for (double x : xi_) {
    const double var = b2_ * x + extra_var_[i];
    const double sd = std::sqrt(var);
    const double center = means_[i] + a_ * x;
    const double lo = std::clamp(std::ceil((center - kReach * sd - lower) / step), 0.0, last + 1.0);
    const double hi = std::clamp(std::floor((center + kReach * sd - lower) / step), -1.0, last);
    const auto k0 = static_cast<std::size_t>(lo);
    for (std::size_t k = 0; k < count; ++k) {
      if (static_cast<double>(k) > hi) {
        for (; k < count; ++k) cdf[k] += 1.0;
        break;
      }
      if (k < k0) continue;
      const double u = (lower + step * static_cast<double>(k) - center) / sd;
      const double dens = std_normal_pdf(u) / sd;
      cdf[k] += std_normal_cdf(u);
      pdf[k] += dens;
      slope[k] -= u * dens / sd;
    }
  }
  const double inv = 1.0 / static_cast<double>(xi_.size());
  for (std::size_t k = 0; k < count; ++k) {
    cdf[k] = std::min(cdf[k] * inv, 1.0);
    pdf[k] *= inv;
    slope[k] *= inv;
  }
}

double ScaleMixtureComponents::mean(std::size_t i) const { return means_[i] + a_ * xi_mean_; }

double ScaleMixtureComponents::sd(std::size_t i) const {
  return std::sqrt(b2_ * xi_mean_ + extra_var_[i] + a_ * a_ * xi_var_);
}

double ScaleMixtureComponents::min_scale() const {
  const double xi_min = *std::min_element(xi_.begin(), xi_.end());
  const double v_min = *std::min_element(extra_var_.begin(), extra_var_.end());
  return std::sqrt(b2_ * xi_min + v_min);
}

LocationScaleComponents::LocationScaleComponents(ComponentsPtr base, double mu, double sigma)
    : base_(std::move(base)), mu_(mu), sigma_(sigma) {
  if (!base_) throw DomainError("missing base components");
  if (!(sigma_ > 0.0)) throw DomainError("scale must be positive");
}

double LocationScaleComponents::cdf(std::size_t i, double t) const { return base_->cdf(i, (t - mu_) / sigma_); }

double LocationScaleComponents::pdf(std::size_t i, double t) const {
  return base_->pdf(i, (t - mu_) / sigma_) / sigma_;
}

double LocationScaleComponents::pdf_slope(std::size_t i, double t) const {
  return base_->pdf_slope(i, (t - mu_) / sigma_) / (sigma_ * sigma_);
}

// ---------------------------------------------------------------------------

void LatentComponents::tabulate(std::size_t i, double lower, double step, std::size_t count, double* cdf,
                                double* pdf, double* slope) const {
  for (std::size_t k = 0; k < count; ++k) {
    const double t = lower + step * static_cast<double>(k);
    cdf[k] = this->cdf(i, t);
    pdf[k] = this->pdf(i, t);
    slope[k] = pdf_slope(i, t);
  }
}

ComponentTable::ComponentTable(const LatentComponents& components, std::size_t max_points) {
  const std::size_t n = components.size();
  if (n == 0) throw DomainError("no components to tabulate");
  if (max_points < 16) max_points = 16;
  double lower = std::numeric_limits<double>::infinity();
  double upper = -lower;
  for (std::size_t i = 0; i < n; ++i) {
    lower = std::min(lower, components.mean(i) - 10.0 * components.sd(i));
    upper = std::max(upper, components.mean(i) + 10.0 * components.sd(i));
  }
  const double span = upper - lower;
  step_ = std::max(0.05 * components.min_scale(), span / static_cast<double>(max_points - 1));
  lower_ = lower;
  const auto points = static_cast<Eigen::Index>(std::ceil(span / step_)) + 1;
  cdf_.resize(points, static_cast<Eigen::Index>(n));
  pdf_.resize(points, static_cast<Eigen::Index>(n));
  slope_.resize(points, static_cast<Eigen::Index>(n));
  const auto count = static_cast<std::size_t>(points);
#pragma omp parallel
  {
    std::vector<double> c(count), p(count), s(count);
#pragma omp for schedule(dynamic, 4)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      components.tabulate(static_cast<std::size_t>(i), lower_, step_, count, c.data(), p.data(), s.data());
      const auto col = static_cast<Eigen::Index>(i);
      for (Eigen::Index g = 0; g < points; ++g) {
        cdf_(g, col) = c[static_cast<std::size_t>(g)];
        pdf_(g, col) = p[static_cast<std::size_t>(g)];
        slope_(g, col) = s[static_cast<std::size_t>(g)];
      }
    }
  }
}

// ---------------------------------------------------------------------------

MixtureCdf::MixtureCdf(ComponentsPtr components, std::vector<double> weights, TablePtr table)
    : components_(std::move(components)), weights_(std::move(weights)), table_(std::move(table)) {
  if (!components_ || components_->size() == 0) throw DomainError("mixture needs at least one component");
  if (weights_.size() != components_->size()) throw DomainError("mixture weights must match the components");
  if (table_ && static_cast<std::size_t>(table_->cdf().cols()) != components_->size()) {
    throw DomainError("component table does not match the components");
  }
}

double MixtureCdf::evaluate(double t) const {
  double total = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] != 0.0) total += weights_[i] * components_->cdf(i, t);
  }
  return std::clamp(total, 0.0, 1.0);
}

double MixtureCdf::density(double t) const {
  double total = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i] != 0.0) total += weights_[i] * components_->pdf(i, t);
  }
  return total;
}

double MixtureCdf::weighted_mean() const {
  double total = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) total += weights_[i] * components_->mean(i);
  return total;
}

double MixtureCdf::weighted_sd() const {
  const double m = weighted_mean();
  double second = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const double mi = components_->mean(i);
    const double si = components_->sd(i);
    second += weights_[i] * (si * si + (mi - m) * (mi - m));
  }
  return std::sqrt(std::max(second, 0.0));
}

MixtureCdf sample_Fz(ComponentsPtr components, RandomStream& rng, TablePtr table) {
  if (!components || components->size() == 0) throw DomainError("mixture needs at least one component");
  std::vector<double> alpha = sample_dirichlet_flat(components->size(), rng);
  return MixtureCdf(std::move(components), std::move(alpha), std::move(table));
}

double invert_mixture(const MixtureCdf& F, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("mixture inversion needs p in (0, 1)");
  const double center = F.weighted_mean();
  const double spread = std::max(F.weighted_sd(), 1e-12);
  double lo = center - 8.0 * spread;
  double hi = center + 8.0 * spread;
  double width = hi - lo;
  for (int it = 0; F.evaluate(lo) > p; ++it) {
    if (it > 200) throw NumericalError("could not bracket the mixture quantile from below");
    lo -= width;
    width *= 2.0;
  }
  width = hi - lo;
  for (int it = 0; F.evaluate(hi) < p; ++it) {
    if (it > 200) throw NumericalError("could not bracket the mixture quantile from above");
    hi += width;
    width *= 2.0;
  }
  // Newton on the density, falling back to bisection whenever a step leaves
  // the bracket.
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 300; ++it) {
    const double f = F.evaluate(x) - p;
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double tol = 1e-12 * std::max(1.0, std::abs(x));
    if (hi - lo <= tol) break;
    const double dens = F.density(x);
    double next = dens > 0.0 ? x - f / dens : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next <= lo || next >= hi) break;
    if (std::abs(next - x) <= tol) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

std::vector<double> invert_mixture_sorted(const MixtureCdf& F, std::span<const double> targets) {
  std::vector<double> out(targets.size());
  const TablePtr& table = F.table();
  if (!table) {
    for (std::size_t j = 0; j < targets.size(); ++j) out[j] = invert_mixture(F, targets[j]);
    return out;
  }

  const Eigen::Map<const Eigen::VectorXd> alpha(F.weights().data(), static_cast<Eigen::Index>(F.weights().size()));
  const Eigen::VectorXd cdf = table->cdf() * alpha;
  const Eigen::VectorXd pdf = table->pdf() * alpha;
  const Eigen::VectorXd slope = table->pdf_slope() * alpha;
  const auto G = static_cast<std::size_t>(cdf.size());
  const double h = table->step();

  std::size_t g = 0;
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const double p = targets[j];
    if (j > 0 && p < targets[j - 1]) throw DomainError("inversion targets must be ascending");
    if (!(p > cdf[0] && p < cdf[static_cast<Eigen::Index>(G - 1)])) {
      out[j] = invert_mixture(F, p);
      continue;
    }
    while (g + 2 < G && cdf[static_cast<Eigen::Index>(g + 1)] < p) ++g;
    const auto gi = static_cast<Eigen::Index>(g);
    const Quintic piece{cdf[gi], cdf[gi + 1], h * pdf[gi], h * pdf[gi + 1], h * h * slope[gi], h * h * slope[gi + 1]};
    out[j] = table->point(g) + piece.solve(p) * h;
  }
  for (std::size_t j = 1; j < out.size(); ++j) out[j] = std::max(out[j], out[j - 1]);
  return out;
}

// ---------------------------------------------------------------------------

MonotoneMap::MonotoneMap(std::vector<double> knots_t, std::vector<double> knots_g, std::vector<double> slopes,
                         TailPolicy tails)
    : knots_t_(std::move(knots_t)), knots_g_(std::move(knots_g)), slopes_(std::move(slopes)), tails_(tails) {}

double MonotoneMap::hermite(std::size_t k, double t) const {
  const double h = knots_t_[k + 1] - knots_t_[k];
  const double s = (t - knots_t_[k]) / h;
  return hermite_value(knots_g_[k], knots_g_[k + 1], slopes_[k], slopes_[k + 1], h, s);
}

double MonotoneMap::hermite_deriv(std::size_t k, double t) const {
  const double h = knots_t_[k + 1] - knots_t_[k];
  const double s = (t - knots_t_[k]) / h;
  return hermite_slope_s(knots_g_[k], knots_g_[k + 1], slopes_[k], slopes_[k + 1], h, s) / h;
}

double MonotoneMap::forward(double t) const {
  const std::size_t K = knots_t_.size();
  if (t <= knots_t_.front()) {
    if (tails_ == TailPolicy::Linear) return knots_g_.front() + slopes_.front() * (t - knots_t_.front());
    return knots_g_.front();
  }
  if (t >= knots_t_.back()) {
    if (tails_ == TailPolicy::Linear) return knots_g_.back() + slopes_.back() * (t - knots_t_.back());
    return knots_g_.back();
  }
  const auto it = std::upper_bound(knots_t_.begin(), knots_t_.end(), t);
  const auto k = std::min(static_cast<std::size_t>(it - knots_t_.begin()) - 1, K - 2);
  return hermite(k, t);
}

double MonotoneMap::inverse(double z) const {
  if (z <= knots_g_.front()) {
    if (tails_ == TailPolicy::Linear && slopes_.front() > 0.0 && z < knots_g_.front()) {
      return knots_t_.front() + (z - knots_g_.front()) / slopes_.front();
    }
    return knots_t_.front();
  }
  if (z >= knots_g_.back()) {
    if (tails_ == TailPolicy::Linear && slopes_.back() > 0.0 && z > knots_g_.back()) {
      return knots_t_.back() + (z - knots_g_.back()) / slopes_.back();
    }
    return knots_t_.back();
  }
  // First knot with g >= z; the solution lies in the interval ending there.
  const auto it = std::lower_bound(knots_g_.begin() + 1, knots_g_.end(), z);
  const auto k = static_cast<std::size_t>(it - knots_g_.begin()) - 1;
  const double h = knots_t_[k + 1] - knots_t_[k];
  const double s = solve_hermite(knots_g_[k], knots_g_[k + 1], slopes_[k], slopes_[k + 1], h, z);
  return knots_t_[k] + s * h;
}

MonotoneMap fit_monotone_interpolant(std::vector<double> knots_t, std::vector<double> knots_g, TailPolicy tails) {
  const std::size_t K = knots_t.size();
  if (K < 2 || knots_g.size() != K) throw DomainError("monotone interpolation needs at least two matching knots");
  for (std::size_t k = 0; k < K; ++k) {
    if (!std::isfinite(knots_t[k]) || !std::isfinite(knots_g[k])) throw NumericalError("knots must be finite");
  }
  for (std::size_t k = 1; k < K; ++k) {
    if (!(knots_t[k] > knots_t[k - 1])) throw DomainError("knot locations must be strictly increasing");
    if (knots_g[k] < knots_g[k - 1]) throw DomainError("knot values must be nondecreasing");
  }

  std::vector<double> secant(K - 1);
  for (std::size_t k = 0; k + 1 < K; ++k) {
    secant[k] = (knots_g[k + 1] - knots_g[k]) / (knots_t[k + 1] - knots_t[k]);
  }
  std::vector<double> m(K);
  m.front() = secant.front();
  m.back() = secant.back();
  for (std::size_t k = 1; k + 1 < K; ++k) {
    m[k] = (secant[k - 1] * secant[k] > 0.0) ? 0.5 * (secant[k - 1] + secant[k]) : 0.0;
  }
  // Fritsch-Carlson: keep (alpha, beta) inside the circle of radius 3.
  for (std::size_t k = 0; k + 1 < K; ++k) {
    if (secant[k] == 0.0) {
      m[k] = 0.0;
      m[k + 1] = 0.0;
      continue;
    }
    const double a = m[k] / secant[k];
    const double b = m[k + 1] / secant[k];
    const double r2 = a * a + b * b;
    if (r2 > 9.0) {
      const double scale = 3.0 / std::sqrt(r2);
      m[k] = scale * a * secant[k];
      m[k + 1] = scale * b * secant[k];
    }
  }
  return MonotoneMap(std::move(knots_t), std::move(knots_g), std::move(m), tails);
}

std::vector<double> compose_knot_values(const MixtureCdf& Fz, const EmpiricalCdf& Fy, std::size_t n) {
  if (n == 0) throw DomainError("sample size must be positive");
  std::vector<double> targets = Fy.cumulative();
  const double shrink = static_cast<double>(n) / (static_cast<double>(n) + 1.0);
  for (double& p : targets) p *= shrink;
  std::vector<double> values = invert_mixture_sorted(Fz, targets);
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError("transformation draw produced a non-finite knot value");
  }
  return values;
}

MonotoneMap compose_transform(const MixtureCdf& Fz, const EmpiricalCdf& Fy, std::size_t n, TailPolicy tails) {
  if (Fy.atoms().size() < 2) throw InsufficientDataError("need at least two distinct responses");
  std::vector<double> values = compose_knot_values(Fz, Fy, n);
  return fit_monotone_interpolant(std::vector<double>(Fy.atoms().begin(), Fy.atoms().end()), std::move(values),
                                  tails);
}

TransformDraw sample_transform(const ResponseAtoms& atoms, const ComponentsPtr& components, const TablePtr& table,
                               TailPolicy tails, RandomStream& rng) {
  const std::size_t n = atoms.num_obs();
  if (!components || components->size() != n) throw ConfigError("need one latent component per observation");
  MixtureCdf Fz = sample_Fz(components, rng, table);
  const EmpiricalCdf Fy = sample_Fy(atoms, rng);
  std::vector<double> knots = compose_knot_values(Fz, Fy, n);
  TransformDraw out;
  out.latent.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.latent[i] = knots[atoms.atom_of[i]];
  out.g = fit_monotone_interpolant(atoms.values, std::move(knots), tails);
  out.latent_weights.assign(Fz.weights().begin(), Fz.weights().end());
  return out;
}

double inverse_map(const MonotoneMap& g, double z) { return g.inverse(z); }

MonotoneMap location_scale_map(const MonotoneMap& g, double mu, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("location-scale map needs sigma > 0");
  std::vector<double> values(g.knots_g().begin(), g.knots_g().end());
  for (double& v : values) v = mu + sigma * v;
  return fit_monotone_interpolant(std::vector<double>(g.knots_t().begin(), g.knots_t().end()), std::move(values),
                                  g.tails());
}

// ---------------------------------------------------------------------------

double effective_sample_size(std::span<const double> log_weights) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(top)) throw DegenerateWeightsError("all importance weights are zero");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double lw : log_weights) {
    const double w = std::exp(lw - top);
    sum += w;
    sum_sq += w * w;
  }
  return sum * sum / sum_sq;
}

SirResult sir_resample(std::span<const double> log_weights, std::size_t keep, RandomStream& rng) {
  const std::size_t S = log_weights.size();
  if (S == 0) throw DomainError("no draws to resample");
  if (keep == 0 || keep >= S) throw ConfigError("resample size must be in [1, number of draws)");
  for (double lw : log_weights) {
    if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity()) {
      throw NumericalError("importance log weights must be finite or -inf");
    }
  }
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(top)) throw DegenerateWeightsError("all importance weights are zero");
  std::vector<double> cumulative(S);
  double total = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    total += std::exp(log_weights[s] - top);
    cumulative[s] = total;
  }
  SirResult result;
  result.indices.reserve(keep);
  for (std::size_t k = 0; k < keep; ++k) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    auto idx = static_cast<std::size_t>(it - cumulative.begin());
    if (idx >= S) idx = S - 1;
    // Skip zero-weight entries that share a cumulative value with their predecessor.
    while (idx > 0 && cumulative[idx] == cumulative[idx - 1] && !std::isfinite(log_weights[idx])) --idx;
    result.indices.push_back(idx);
  }
  result.ess = effective_sample_size(log_weights);
  return result;
}

// ---------------------------------------------------------------------------

void ApproxPosterior::validate() const {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size()) {
    throw DomainError("approximate posterior mean and covariance sizes disagree");
  }
  if (cov.size() == 0) return;
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw NumericalError("approximate posterior covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw NumericalError("approximate posterior covariance is not positive semidefinite");
  }
}

// ---------------------------------------------------------------------------

std::string format_monotone_map(const MonotoneMap& g) {
  std::ostringstream out;
  out << "# tails=" << (g.tails() == TailPolicy::Linear ? "linear" : "clamp") << '\n';
  out << "knot_t,knot_g\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < g.size(); ++k) out << g.knots_t()[k] << ',' << g.knots_g()[k] << '\n';
  return out.str();
}

MonotoneMap parse_monotone_map(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  TailPolicy tails = TailPolicy::Clamp;
  if (!std::getline(in, line) || line.rfind("# tails=", 0) != 0) throw InputError("missing tails header line");
  const std::string policy = line.substr(8);
  if (policy == "linear") {
    tails = TailPolicy::Linear;
  } else if (policy != "clamp") {
    throw InputError("unknown tail policy '" + policy + "'");
  }
  if (!std::getline(in, line) || line != "knot_t,knot_g") throw InputError("missing knot column header");
  std::vector<double> t;
  std::vector<double> g;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InputError("malformed knot row: " + line);
    try {
      t.push_back(std::stod(line.substr(0, comma)));
      g.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw InputError("malformed knot row: " + line);
    }
  }
  return fit_monotone_interpolant(std::move(t), std::move(g), tails);
}

}  // namespace sbtrans
