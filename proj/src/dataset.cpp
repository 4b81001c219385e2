#include "sbtrans/dataset.hpp"

#include "sbtrans/errors.hpp"

namespace sbtrans {

void Dataset::validate() const {
  if (X.rows() != y.size()) throw InputError("covariate rows and response length differ");
  if (!y.allFinite()) throw InputError("response contains non-finite values");
  if (!X.allFinite()) throw InputError("covariates contain non-finite values");
  if (!covariate_names.empty() && covariate_names.size() != d()) {
    throw InputError("covariate names do not match the covariate columns");
  }
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd out(X.rows(), X.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(X.cols()) = X;
  return out;
}

}  // namespace sbtrans
