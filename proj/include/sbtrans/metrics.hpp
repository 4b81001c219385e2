#pragma once

// Predictive and inferential scores for the simulation harness.

#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace sbtrans {

/// Per-replicate scores. Fields that do not apply to a method are NaN.
struct MetricReport {
  double interval_width = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double crps = std::numeric_limits<double>::quiet_NaN();
  double tpr = std::numeric_limits<double>::quiet_NaN();
  double tnr = std::numeric_limits<double>::quiet_NaN();
  double quantile_calibration = std::numeric_limits<double>::quiet_NaN();
};

/// Linear-interpolation sample quantile of sorted data (the usual type 7).
double sorted_quantile(std::span<const double> sorted, double p);

/// Sample CRPS of draws against y: mean |Y - y| - mean |Y - Y'| / 2, the
/// second term over all S(S-1) ordered pairs of distinct draws. Pairs are
/// summed in O(S log S) from the order statistics.
double crps_sample(std::span<const double> draws, double y);

/// crps_sample averaged over test points; predictive is S x m.
double metric_crps(const Eigen::MatrixXd& predictive, const Eigen::VectorXd& y);

/// Shortest interval holding ceil(level * S) of the draws.
std::pair<double, double> hpd_interval(std::span<const double> draws, double level);

struct SelectionRates {
  double tpr;
  double tnr;
};

/// A coefficient is selected when its HPD interval excludes zero. theta_draws
/// is S x p (no intercept column). A rate with no eligible coefficients is NaN.
SelectionRates metric_selection(const Eigen::MatrixXd& theta_draws, const Eigen::VectorXd& theta_true,
                                double level = 0.95);

struct IntervalSummary {
  double width;
  double coverage;
};

/// Equal-tailed predictive intervals per test point; mean width and the share
/// of y inside its interval (endpoints included).
IntervalSummary metric_interval(const Eigen::MatrixXd& predictive, const Eigen::VectorXd& y, double level);

/// Share of y strictly below its quantile estimate.
double metric_quantile_calibration(const Eigen::VectorXd& quantile_estimates, const Eigen::VectorXd& y);

/// Two-sample Kolmogorov-Smirnov distance.
double ks_distance(std::vector<double> a, std::vector<double> b);

}  // namespace sbtrans
