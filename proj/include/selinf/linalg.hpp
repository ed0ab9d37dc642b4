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

#ifndef SELINF_LINALG_HPP
#define SELINF_LINALG_HPP

#include <string>

#include <Eigen/Dense>

namespace selinf {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Cholesky factor of a symmetric positive definite matrix.
///
/// Factorization fails with NumericalError when a pivot drops below
/// 1e-10 times the largest diagonal entry; nothing is regularized.
class SpdFactor {
 public:
  SpdFactor() = default;
  explicit SpdFactor(const MatrixXd& m, const std::string& what = "matrix");

  Index size() const { return llt_.rows(); }
  MatrixXd solve(const MatrixXd& b) const { return llt_.solve(b); }
  VectorXd solve(const VectorXd& b) const { return llt_.solve(b); }
  MatrixXd inverse() const;
  double log_det() const;
  MatrixXd lower() const { return llt_.matrixL(); }
  /// L^{-1} b
  MatrixXd whiten(const MatrixXd& b) const;

 private:
  Eigen::LLT<MatrixXd> llt_;
};

/// True when `m` is symmetric PD under the SpdFactor pivot rule.
bool is_positive_definite(const MatrixXd& m);

/// ||a - b||_F / max(||b||_F, tiny)
double relative_frobenius(const MatrixXd& a, const MatrixXd& b);

/// Moore-Penrose inverse through a complete orthogonal decomposition.
MatrixXd pseudo_inverse(const MatrixXd& m, double rel_threshold = 1e-10);

/// Numerical column rank (relative threshold on the pivoted QR diagonal).
Index numerical_rank(const MatrixXd& m, double rel_threshold = 1e-9);

/// (m + m^T) / 2
inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

/// Block-diagonal matrix from two blocks.
MatrixXd block_diagonal(const MatrixXd& a, const MatrixXd& b);

}  // namespace selinf

#endif  // SELINF_LINALG_HPP
