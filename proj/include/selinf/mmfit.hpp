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

#ifndef SELINF_MMFIT_HPP
#define SELINF_MMFIT_HPP

#include <optional>
#include <vector>

#include "selinf/model.hpp"

namespace selinf {

/// How the random-effects covariance enters the joint solve.
enum class ShrinkageMode {
  Working,      ///< A built from G (zero-variance directions are removed)
  Unpenalized,  ///< A = 0
};

struct FitResult {
  VectorXd beta;
  VectorXd b;
  /// (p+q) x n operator with (beta, b) = V y.
  MatrixXd V;
  /// Bayesian covariance (C' R^-1 C + A)^-1 on the (beta, b) scale.
  MatrixXd K_inv;
  CovarianceModel cov;
  VectorXd fitted;
  /// Conditional Gaussian log-likelihood of y given (beta, b).
  double loglik = 0.0;
  /// trace(C V)
  double edf = 0.0;
};

/// Joint estimate (C' R^-1 C + A)^-1 C' R^-1 y.
///
/// An explicit model.penalty is used as A when present. Otherwise A follows
/// from G: with G = L L' the random effects are written b = L u, so rank
/// deficient G is handled by dropping its null directions.
FitResult solve_blup(const ModelSpec& model, const CovarianceModel& cov, const VectorXd& y,
                     ShrinkageMode mode = ShrinkageMode::Working);

/// L with G = L L', keeping only directions with eigenvalue above 1e-10 of
/// the largest. Returns a q x 0 matrix for G = 0.
MatrixXd psd_factor(const MatrixXd& g);

struct RemlOptions {
  int max_iter = 500;
  /// Simplex size at which the optimizer stops.
  double size_tol = 1e-7;
  /// Optional residual variance groups; row i has variance sigma^2 * r_g.
  std::vector<int> residual_group;
};

/// REML problem with design cross-products cached for repeated fits.
class RemlProblem {
 public:
  RemlProblem() = default;
  RemlProblem(ModelSpec model, RemlOptions options = {});

  const ModelSpec& model() const { return model_; }
  Index n_params() const;

  CovarianceModel fit(const VectorXd& y) const;
  /// REML deviance at a parameter vector (exposed for testing).
  double deviance(const std::vector<double>& theta, const VectorXd& y) const;
  /// cAIC of the model under a covariance of the structure this problem
  /// estimates (spherical or group-diagonal R).
  double caic(const VectorXd& y, const CovarianceModel& cov) const;

 private:
  struct Cross {
    VectorXd cty;
    double yty = 0.0;
  };
  std::vector<Cross> cross_y(const VectorXd& y) const;
  double deviance_impl(const double* theta, const std::vector<Cross>& cy, double* sigma2) const;
  MatrixXd relative_factor(const double* theta, std::vector<bool>* at_bound,
                           double* floor_penalty = nullptr) const;
  std::vector<double> group_ratios(const double* theta) const;

  ModelSpec model_;
  RemlOptions options_;
  Index n_groups_ = 1;
  std::vector<std::vector<Index>> group_rows_;
  std::vector<MatrixXd> ctc_;
  std::vector<MatrixXd> c_rows_;
  Index n_cov_params_ = 0;
};

/// REML estimate of (sigma^2, G) with residual structure from `options`.
CovarianceModel fit_reml(const ModelSpec& model, const VectorXd& y, const RemlOptions& options = {});

/// Inputs of a covariance plug-in. Fields not needed by a kind may be empty.
struct PluginContext {
  const ModelSpec* selected = nullptr;
  const CovarianceModel* truth = nullptr;
  VectorXd y;
  RemlOptions reml;
};

CovarianceModel plugin_covariance(Provenance kind, const PluginContext& ctx);

/// Intercept plus the random structure of `model`.
ModelSpec intercept_model(const ModelSpec& model);

/// -2 conditional log-likelihood + 2 (edf + number of R parameters).
double caic(const ModelSpec& model, const CovarianceModel& cov, const VectorXd& y);

}  // namespace selinf

#endif  // SELINF_MMFIT_HPP
