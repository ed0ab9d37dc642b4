// Copyright 2026 The selinf Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "selinf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "selinf/error.hpp"

namespace selinf {

namespace {
constexpr double kPivotThreshold = 1e-10;
}

SpdFactor::SpdFactor(const MatrixXd& m, const std::string& what) {
  if (m.rows() != m.cols()) {
    throw DimensionError(what + " is not square");
  }
  if (m.rows() == 0) {
    return;
  }
  llt_.compute(m);
  if (llt_.info() != Eigen::Success) {
    throw NumericalError(what + " is not positive definite");
  }
  const double max_diag = m.diagonal().cwiseAbs().maxCoeff();
  const VectorXd pivots = llt_.matrixLLT().diagonal().array().square();
  if (!(pivots.minCoeff() > kPivotThreshold * max_diag)) {
    throw NumericalError(what + " is numerically singular");
  }
}

MatrixXd SpdFactor::inverse() const {
  return llt_.solve(MatrixXd::Identity(size(), size()));
}

double SpdFactor::log_det() const {
  return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

MatrixXd SpdFactor::whiten(const MatrixXd& b) const {
  return llt_.matrixL().solve(b);
}

bool is_positive_definite(const MatrixXd& m) {
  try {
    SpdFactor f(m);
    return true;
  } catch (const Error&) {
    return false;
  }
}

double relative_frobenius(const MatrixXd& a, const MatrixXd& b) {
  const double denom = std::max(b.norm(), std::numeric_limits<double>::min());
  return (a - b).norm() / denom;
}

MatrixXd pseudo_inverse(const MatrixXd& m, double rel_threshold) {
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod;
  cod.setThreshold(rel_threshold);
  cod.compute(m);
  return cod.pseudoInverse();
}

Index numerical_rank(const MatrixXd& m, double rel_threshold) {
  if (m.size() == 0) {
    return 0;
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(m);
  qr.setThreshold(rel_threshold);
  return qr.rank();
}

MatrixXd block_diagonal(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out = MatrixXd::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace selinf
