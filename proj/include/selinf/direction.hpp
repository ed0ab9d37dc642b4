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

#ifndef SELINF_DIRECTION_HPP
#define SELINF_DIRECTION_HPP

#include <string>

#include "selinf/mmfit.hpp"
#include "selinf/model.hpp"

namespace selinf {

enum class KappaVariant { Classical, Bayesian };

std::string to_string(KappaVariant k);
KappaVariant kappa_variant_from_string(const std::string& s);
std::string to_string(ShrinkageMode m);
ShrinkageMode shrinkage_mode_from_string(const std::string& s);

/// A resolved inference target.
///
/// Scalar kind: T = v'Y with null variance kappa and decomposition
/// Y = lift * T + zeta, lift = M v / (v'M v) for the metric M.
/// Group kind: T = ||P_W L^-1 Y|| where L is the whitening factor of the
/// metric (identity when the metric is spherical, in which case `scale` is
/// its standard deviation). Under the null T ~ scale * chi_dof.
struct TestDirection {
  enum class Kind { Scalar, Group };
  Kind kind = Kind::Scalar;
  std::string label;

  VectorXd v;
  VectorXd v_sde;
  double kappa = 0.0;
  VectorXd lift;

  MatrixXd basis;    ///< orthonormal basis of the (whitened) W, n x dof
  MatrixXd whiten;   ///< lower-triangular L, empty for spherical metrics
  Index dof = 0;
  double scale = 1.0;

  MatrixXd metric;
  double rho0 = 0.0;

  double statistic(const VectorXd& y) const;
  /// The part of y held fixed during resampling.
  VectorXd orthogonal(const VectorXd& y) const;
  /// Response whose statistic equals t and whose orthogonal part is zeta.
  /// `unit` is the group direction of y_obs (ignored for scalar kind).
  VectorXd rebuild(const VectorXd& zeta, const VectorXd& unit, double t) const;
  /// Unit direction of the observed group component.
  VectorXd group_unit(const VectorXd& y) const;
  /// Convenience: rebuild from y_obs directly.
  VectorXd rebuild_from(const VectorXd& y_obs, double t) const;
};

/// Marginal test vector for fixed coefficient `term` (single column).
/// Plain: v = X (X'X)^-1 e_j. GLS: v = Sigma^-1 X (X'Sigma^-1 X)^-1 e_j.
TestDirection lm_marginal(const ModelSpec& model, const CovarianceModel& cov,
                          const std::string& term, bool use_gls, double rho0 = 0.0);

/// Conditional test vector for a linear target c over (beta, b):
/// v' = c V with V from the working shrinkage, v_sde' = c V_breve.
TestDirection conditional(const ModelSpec& model, const CovarianceModel& cov,
                          const RowVectorXd& target, KappaVariant kappa, ShrinkageMode mode,
                          double rho0 = 0.0);

/// Conditional test of a single-column fixed term.
TestDirection conditional_coefficient(const ModelSpec& model, const CovarianceModel& cov,
                                      const std::string& term, KappaVariant kappa,
                                      ShrinkageMode mode, double rho0 = 0.0);

/// Pointwise test of a smooth term at z.
TestDirection spline_pointwise(const ModelSpec& model, const CovarianceModel& cov,
                               const std::string& term, double z, KappaVariant kappa,
                               ShrinkageMode mode = ShrinkageMode::Working, double rho0 = 0.0);

/// Group direction of a term: its design columns residualized on the fixed
/// columns of all other terms under the metric.
TestDirection group_direction(const ModelSpec& model, const std::string& term,
                              const MatrixXd& metric);

}  // namespace selinf

#endif  // SELINF_DIRECTION_HPP
