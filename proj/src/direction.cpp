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

#include "selinf/direction.hpp"

#include <algorithm>
#include <cmath>

#include "selinf/error.hpp"

namespace selinf {

std::string to_string(KappaVariant k) {
  return k == KappaVariant::Classical ? "classical" : "bayesian";
}

KappaVariant kappa_variant_from_string(const std::string& s) {
  if (s == "classical") return KappaVariant::Classical;
  if (s == "bayesian") return KappaVariant::Bayesian;
  throw ConfigError("unknown kappa variant '" + s + "'");
}

std::string to_string(ShrinkageMode m) {
  return m == ShrinkageMode::Working ? "working" : "unpenalized";
}

ShrinkageMode shrinkage_mode_from_string(const std::string& s) {
  if (s == "working") return ShrinkageMode::Working;
  if (s == "unpenalized") return ShrinkageMode::Unpenalized;
  throw ConfigError("unknown shrinkage mode '" + s + "'");
}

// ---------------------------------------------------------------------------

double TestDirection::statistic(const VectorXd& y) const {
  if (kind == Kind::Scalar) {
    return v.dot(y);
  }
  const VectorXd yw = whiten.size() > 0 ? VectorXd(whiten.triangularView<Eigen::Lower>().solve(y))
                                        : y;
  return (basis.transpose() * yw).norm();
}

namespace {

VectorXd group_component(const TestDirection& d, const VectorXd& y) {
  if (d.whiten.size() > 0) {
    const VectorXd yw = d.whiten.triangularView<Eigen::Lower>().solve(y);
    return d.whiten.triangularView<Eigen::Lower>() *
           VectorXd(d.basis * (d.basis.transpose() * yw));
  }
  return d.basis * (d.basis.transpose() * y);
}

}  // namespace

VectorXd TestDirection::orthogonal(const VectorXd& y) const {
  if (y.size() != metric.rows()) {
    throw DimensionError("response length differs from the direction");
  }
  if (kind == Kind::Scalar) {
    return y - lift * v.dot(y);
  }
  return y - group_component(*this, y);
}

VectorXd TestDirection::group_unit(const VectorXd& y) const {
  if (kind == Kind::Scalar) {
    return VectorXd();
  }
  const double t = statistic(y);
  if (t == 0.0) {
    return VectorXd::Zero(y.size());
  }
  return group_component(*this, y) / t;
}

VectorXd TestDirection::rebuild(const VectorXd& zeta, const VectorXd& unit, double t) const {
  if (kind == Kind::Scalar) {
    return zeta + lift * t;
  }
  if (t < 0.0) {
    throw ConfigError("group statistics must be non-negative");
  }
  return zeta + unit * t;
}

VectorXd TestDirection::rebuild_from(const VectorXd& y_obs, double t) const {
  return rebuild(orthogonal(y_obs), group_unit(y_obs), t);
}

// ---------------------------------------------------------------------------

namespace {

Index single_column(const ModelSpec& model, const std::string& term) {
  const auto cols = model.fixed_columns(term);
  if (cols.empty()) {
    throw ConfigError("term '" + term + "' is not a fixed term of model '" + model.id + "'");
  }
  if (cols.size() != 1) {
    throw ConfigError("term '" + term + "' has several columns; use a group test");
  }
  return cols.front();
}

void finish_scalar(TestDirection& d) {
  const VectorXd mv = d.metric * d.v;
  const double vmv = d.v.dot(mv);
  if (!(vmv > 0.0)) {
    throw NumericalError("test vector has zero variance under the metric");
  }
  d.lift = mv / vmv;
}

}  // namespace

TestDirection lm_marginal(const ModelSpec& model, const CovarianceModel& cov,
                          const std::string& term, bool use_gls, double rho0) {
  const Index j = single_column(model, term);
  const MatrixXd& x = model.fixed_design;
  TestDirection d;
  d.kind = TestDirection::Kind::Scalar;
  d.label = term;
  d.rho0 = rho0;
  d.metric = marginal_covariance(model, cov);
  const VectorXd e = VectorXd::Unit(model.p(), j);
  if (use_gls) {
    const SpdFactor sf(d.metric, "marginal covariance");
    const MatrixXd si_x = sf.solve(x);
    const SpdFactor xf(MatrixXd(x.transpose() * si_x), "X'Sigma^-1 X");
    const VectorXd a = xf.solve(e);
    d.v = si_x * a;
    d.kappa = a(j);
  } else {
    const SpdFactor xf(MatrixXd(x.transpose() * x), "X'X");
    d.v = x * xf.solve(e);
    d.kappa = d.v.dot(d.metric * d.v);
  }
  d.v_sde = d.v;
  finish_scalar(d);
  return d;
}

TestDirection conditional(const ModelSpec& model, const CovarianceModel& cov,
                          const RowVectorXd& target, KappaVariant kappa, ShrinkageMode mode,
                          double rho0) {
  model.validate();
  if (target.size() != model.p() + model.q()) {
    throw DimensionError("conditional target must have p + q entries");
  }
  TestDirection d;
  d.kind = TestDirection::Kind::Scalar;
  d.rho0 = rho0;
  d.metric = cov.error.to_dense();
  const MatrixXd c = model.joint_design();
  const MatrixXd rinv_c = cov.error.solve(c);
  const MatrixXd k0_pinv = pseudo_inverse(symmetrize(c.transpose() * rinv_c));
  d.v_sde = rinv_c * (k0_pinv * target.transpose());
  MatrixXd k_inv;
  if (mode == ShrinkageMode::Working && (model.q() > 0 || model.penalty)) {
    const FitResult fit = solve_blup(model, cov, VectorXd::Zero(model.n()), mode);
    d.v = fit.V.transpose() * target.transpose();
    k_inv = fit.K_inv;
  } else {
    d.v = d.v_sde;
    k_inv = k0_pinv;
  }
  if (kappa == KappaVariant::Classical) {
    d.kappa = d.v.dot(cov.error.multiply(d.v));
  } else {
    d.kappa = target.dot(k_inv * target.transpose());
  }
  finish_scalar(d);
  return d;
}

TestDirection conditional_coefficient(const ModelSpec& model, const CovarianceModel& cov,
                                      const std::string& term, KappaVariant kappa,
                                      ShrinkageMode mode, double rho0) {
  const Index j = single_column(model, term);
  RowVectorXd target = RowVectorXd::Zero(model.p() + model.q());
  target(j) = 1.0;
  TestDirection d = conditional(model, cov, target, kappa, mode, rho0);
  d.label = term;
  return d;
}

TestDirection spline_pointwise(const ModelSpec& model, const CovarianceModel& cov,
                               const std::string& term, double z, KappaVariant kappa,
                               ShrinkageMode mode, double rho0) {
  TestDirection d = conditional(model, cov, model.smooth_row(term, z), kappa, mode, rho0);
  d.label = term + "@" + std::to_string(z);
  return d;
}

namespace {

bool is_spherical(const MatrixXd& m, double* variance) {
  const double s = m(0, 0);
  if (!(s > 0.0)) return false;
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) {
      if (m(i, j) != (i == j ? s : 0.0)) return false;
    }
  }
  *variance = s;
  return true;
}

}  // namespace

TestDirection group_direction(const ModelSpec& model, const std::string& term,
                              const MatrixXd& metric) {
  model.validate();
  if (metric.rows() != model.n() || metric.cols() != model.n()) {
    throw DimensionError("metric does not match the number of rows");
  }
  const auto cols = model.joint_columns(term);
  if (cols.empty()) {
    throw ConfigError("term '" + term + "' is not part of model '" + model.id + "'");
  }
  const MatrixXd c = model.joint_design();
  MatrixXd xj(model.n(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    xj.col(static_cast<Index>(k)) = c.col(cols[k]);
  }
  std::vector<Index> other;
  for (Index j = 0; j < model.p(); ++j) {
    if (model.fixed_labels[j] != term) other.push_back(j);
  }
  MatrixXd xo(model.n(), static_cast<Index>(other.size()));
  for (std::size_t k = 0; k < other.size(); ++k) {
    xo.col(static_cast<Index>(k)) = model.fixed_design.col(other[k]);
  }

  TestDirection d;
  d.kind = TestDirection::Kind::Group;
  d.label = term;
  d.metric = metric;
  double variance = 0.0;
  if (is_spherical(metric, &variance)) {
    d.scale = std::sqrt(variance);
  } else {
    const SpdFactor f(metric, "metric");
    d.whiten = f.lower();
    xj = f.whiten(xj);
    xo = f.whiten(xo);
    d.scale = 1.0;
  }
  MatrixXd w = xj;
  if (xo.cols() > 0) {
    Eigen::ColPivHouseholderQR<MatrixXd> qo(xo);
    w = xj - xo * qo.solve(xj);
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(w);
  // rank relative to the term's own scale, not to the residual's
  const double scale = xj.colwise().norm().maxCoeff();
  qr.setThreshold(qr.maxPivot() > 0.0 ? std::min(1.0, 1e-9 * scale / qr.maxPivot()) : 1.0);
  d.dof = qr.rank();
  if (d.dof == 0) {
    throw NumericalError("group design of '" + term + "' lies in the span of the other terms");
  }
  d.basis = MatrixXd(qr.householderQ()).leftCols(d.dof);
  return d;
}

}  // namespace selinf
