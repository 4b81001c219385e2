#pragma once

#include <string>

#include <Eigen/Dense>

#include "sbtrans/errors.hpp"

namespace sbtrans {

/// Cholesky factor of a symmetric positive-definite matrix. Throws
/// LinearAlgebraError naming `context` when the factorization fails or the
/// matrix is numerically singular.
inline Eigen::LLT<Eigen::MatrixXd> cholesky_or_throw(const Eigen::MatrixXd& A, const std::string& context) {
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw LinearAlgebraError(context + ": matrix is not positive definite");
  const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
  const double largest = diag.cwiseAbs().maxCoeff();
  if (!(diag.minCoeff() > 1e-10 * largest)) throw LinearAlgebraError(context + ": matrix is numerically singular");
  return llt;
}

}  // namespace sbtrans
