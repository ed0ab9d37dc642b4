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

#ifndef SELINF_SPLINES_HPP
#define SELINF_SPLINES_HPP

#include <string>
#include <vector>

#include "selinf/model.hpp"

namespace selinf {

/// B-spline basis on equidistant knots with a difference penalty.
///
/// The knot grid covers [lower, upper] with `degree` additional knots beyond
/// each boundary at the same spacing.
class SplineBasis {
 public:
  SplineBasis() = default;
  SplineBasis(double lower, double upper, Index n_basis, int degree, int diff_order);

  double lower() const { return lower_; }
  double upper() const { return upper_; }
  Index n_basis() const { return n_basis_; }
  int degree() const { return degree_; }
  int diff_order() const { return diff_order_; }
  const VectorXd& knots() const { return knots_; }
  /// D^T D for the difference matrix D of order diff_order.
  const MatrixXd& penalty_raw() const { return penalty_; }

  /// Row (B_1(z), ..., B_d(z)); zero outside the knot range.
  RowVectorXd eval(double z) const;
  MatrixXd eval(const VectorXd& x) const;

 private:
  double lower_ = 0.0;
  double upper_ = 1.0;
  Index n_basis_ = 0;
  int degree_ = 3;
  int diff_order_ = 2;
  VectorXd knots_;
  MatrixXd penalty_;
};

/// Basis over [min(x), max(x)].
SplineBasis build_basis(const VectorXd& x, Index d = 10, int degree = 3, int diff_order = 2);

/// Difference matrix of the given order on d coefficients.
MatrixXd difference_matrix(Index d, int order);

/// Minimizes ||y - C gamma||^2 + lambda gamma' P gamma.
VectorXd fit_pls(const SplineBasis& basis, const VectorXd& x, const VectorXd& y, double lambda);

/// gamma = fixed_map * beta + random_map * b turns the penalty into diag(0, I).
struct MixedReparam {
  MatrixXd fixed_map;
  MatrixXd random_map;
};

MixedReparam reparametrize(const SplineBasis& basis);
/// Same construction for an arbitrary PSD penalty whose null space is spanned
/// by `null_basis`.
MixedReparam reparametrize_penalty(const MatrixXd& penalty, const MatrixXd& null_basis);

// ---------------------------------------------------------------------------
// Additive model assembly

struct AdditiveTerm {
  enum class Kind { Linear, Smooth, Tensor };
  Kind kind = Kind::Linear;
  std::string name;
  VectorXd x;
  VectorXd x2;  ///< second covariate of a tensor term
  Index d = 10;
  int degree = 3;
  int diff_order = 2;

  static AdditiveTerm linear(std::string name, VectorXd x);
  static AdditiveTerm smooth(std::string name, VectorXd x, Index d = 10, int degree = 3,
                             int diff_order = 2);
  static AdditiveTerm tensor(std::string name, VectorXd x, VectorXd x2, Index d = 5);
};

/// Builds an intercept plus the listed terms in mixed-model form.
///
/// Smooth terms are column-centered; their penalty null space (without the
/// constant) becomes fixed columns and the penalized part becomes one i.i.d.
/// random block labelled with the term name. Tensor terms use a row-wise
/// Kronecker basis with a Kronecker-sum penalty and have no pointwise
/// evaluator.
ModelSpec build_additive_model(const std::string& id, const std::vector<AdditiveTerm>& terms);

}  // namespace selinf

#endif  // SELINF_SPLINES_HPP
