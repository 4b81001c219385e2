#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sbtrans {

/// Covariates X (n x d, no intercept column) and a continuous response y.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> covariate_names;
  std::string response_name = "y";

  std::size_t n() const { return static_cast<std::size_t>(y.size()); }
  std::size_t d() const { return static_cast<std::size_t>(X.cols()); }

  /// Throws InputError on shape mismatch or non-finite entries.
  void validate() const;
};

/// [1, X].
Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X);

}  // namespace sbtrans
