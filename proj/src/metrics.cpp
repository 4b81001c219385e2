#include "sbtrans/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "sbtrans/errors.hpp"

namespace sbtrans {

namespace {

std::vector<double> sorted_column(const Eigen::MatrixXd& draws, Eigen::Index j) {
  std::vector<double> v(draws.col(j).data(), draws.col(j).data() + draws.rows());
  std::sort(v.begin(), v.end());
  return v;
}

void check_shapes(const Eigen::MatrixXd& predictive, const Eigen::VectorXd& y) {
  if (predictive.cols() != y.size()) throw InputError("predictive draws and test responses disagree in size");
  if (predictive.rows() < 1) throw InputError("need at least one predictive draw");
}

}  // namespace

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InputError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double crps_sample(std::span<const double> draws, double y) {
  const std::size_t S = draws.size();
  if (S < 2) throw InputError("CRPS needs at least two draws");
  std::vector<double> v(draws.begin(), draws.end());
  std::sort(v.begin(), v.end());
  double abs_dev = 0.0;
  double pair_sum = 0.0;
  for (std::size_t k = 0; k < S; ++k) {
    abs_dev += std::abs(v[k] - y);
    // v[k] is larger than k draws and smaller than S - 1 - k.
    pair_sum += (2.0 * static_cast<double>(k) - static_cast<double>(S) + 1.0) * v[k];
  }
  const double s = static_cast<double>(S);
  return abs_dev / s - pair_sum / (s * (s - 1.0));
}

double metric_crps(const Eigen::MatrixXd& predictive, const Eigen::VectorXd& y) {
  check_shapes(predictive, y);
  double total = 0.0;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    total += crps_sample(std::span<const double>(predictive.col(j).data(), static_cast<std::size_t>(predictive.rows())),
                         y[j]);
  }
  return total / static_cast<double>(y.size());
}

std::pair<double, double> hpd_interval(std::span<const double> draws, double level) {
  if (draws.empty()) throw InputError("HPD interval of an empty sample");
  if (!(level > 0.0 && level <= 1.0)) throw ConfigError("HPD level must lie in (0, 1]");
  std::vector<double> v(draws.begin(), draws.end());
  std::sort(v.begin(), v.end());
  const std::size_t S = v.size();
  const auto keep = std::min(S, static_cast<std::size_t>(std::ceil(level * static_cast<double>(S) - 1e-9)));
  const std::size_t span = std::max<std::size_t>(keep, 1) - 1;
  std::size_t best = 0;
  for (std::size_t i = 1; i + span < S; ++i) {
    if (v[i + span] - v[i] < v[best + span] - v[best]) best = i;
  }
  return {v[best], v[best + span]};
}

SelectionRates metric_selection(const Eigen::MatrixXd& theta_draws, const Eigen::VectorXd& theta_true, double level) {
  if (theta_draws.cols() != theta_true.size()) throw InputError("coefficient draws and truth disagree in size");
  if (theta_draws.rows() < 100) throw InputError("selection needs at least 100 draws");
  int pos = 0, neg = 0, true_pos = 0, true_neg = 0;
  for (Eigen::Index j = 0; j < theta_true.size(); ++j) {
    const auto col = sorted_column(theta_draws, j);
    const auto [lo, hi] = hpd_interval(col, level);
    const bool selected = lo > 0.0 || hi < 0.0;
    if (theta_true[j] != 0.0) {
      ++pos;
      true_pos += selected;
    } else {
      ++neg;
      true_neg += !selected;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {pos > 0 ? static_cast<double>(true_pos) / pos : nan, neg > 0 ? static_cast<double>(true_neg) / neg : nan};
}

IntervalSummary metric_interval(const Eigen::MatrixXd& predictive, const Eigen::VectorXd& y, double level) {
  check_shapes(predictive, y);
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("interval level must lie in (0, 1)");
  double width = 0.0;
  int covered = 0;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    const auto col = sorted_column(predictive, j);
    const double lo = sorted_quantile(col, (1.0 - level) / 2.0);
    const double hi = sorted_quantile(col, (1.0 + level) / 2.0);
    width += hi - lo;
    covered += y[j] >= lo && y[j] <= hi;
  }
  const auto m = static_cast<double>(y.size());
  return {width / m, covered / m};
}

double metric_quantile_calibration(const Eigen::VectorXd& quantile_estimates, const Eigen::VectorXd& y) {
  if (quantile_estimates.size() != y.size() || y.size() == 0) {
    throw InputError("quantile estimates and test responses disagree in size");
  }
  return (y.array() < quantile_estimates.array()).cast<double>().mean();
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("KS distance of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

}  // namespace sbtrans
