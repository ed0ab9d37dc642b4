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

#include "selinf/mmfit.hpp"

#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "selinf/error.hpp"

namespace selinf {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kThetaFloor = -12.0;
constexpr double kBoundaryTheta = -11.5;

MatrixXd u_transform(Index p, const MatrixXd& l) {
  MatrixXd t = MatrixXd::Zero(p + l.rows(), p + l.cols());
  t.topLeftCorner(p, p).setIdentity();
  t.bottomRightCorner(l.rows(), l.cols()) = l;
  return t;
}

}  // namespace

MatrixXd psd_factor(const MatrixXd& g) {
  if (g.rows() == 0) {
    return MatrixXd(0, 0);
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(g));
  if (es.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition of G failed");
  }
  const VectorXd& ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  if (top == 0.0) {
    return MatrixXd(g.rows(), 0);
  }
  if (ev.minCoeff() < -1e-8 * top) {
    throw NumericalError("random-effects covariance has a negative eigenvalue");
  }
  std::vector<Index> keep;
  for (Index i = ev.size() - 1; i >= 0; --i) {
    if (ev(i) > 1e-10 * top) {
      keep.push_back(i);
    }
  }
  MatrixXd l(g.rows(), static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    l.col(static_cast<Index>(k)) = es.eigenvectors().col(keep[k]) * std::sqrt(ev(keep[k]));
  }
  return l;
}

FitResult solve_blup(const ModelSpec& model, const CovarianceModel& cov, const VectorXd& y,
                     ShrinkageMode mode) {
  model.validate();
  check_response(y, model.n());
  if (cov.error.size() != model.n()) {
    throw DimensionError("R does not match the number of rows");
  }
  const Index p = model.p();
  const Index q = model.q();
  const MatrixXd c = model.joint_design();
  const MatrixXd rinv_c = cov.error.solve(c);
  const MatrixXd ctrc = symmetrize(c.transpose() * rinv_c);

  FitResult out;
  out.cov = cov;
  if (model.penalty || mode == ShrinkageMode::Unpenalized || q == 0) {
    MatrixXd k = ctrc;
    if (model.penalty) {
      k += *model.penalty;
    }
    const SpdFactor f(k, "C'R^-1C + A");
    out.K_inv = f.inverse();
    out.V = out.K_inv * rinv_c.transpose();
  } else {
    if (cov.ranef.rows() != q || cov.ranef.cols() != q) {
      throw DimensionError("G does not match the random design");
    }
    const MatrixXd t = u_transform(p, psd_factor(cov.ranef));
    MatrixXd ku = t.transpose() * ctrc * t;
    ku.diagonal().tail(t.cols() - p).array() += 1.0;
    const SpdFactor f(symmetrize(ku), "C'R^-1C + A");
    const MatrixXd ku_inv = f.inverse();
    out.K_inv = symmetrize(t * ku_inv * t.transpose());
    out.V = t * (ku_inv * (t.transpose() * rinv_c.transpose()));
  }
  const VectorXd theta = out.V * y;
  out.beta = theta.head(p);
  out.b = theta.tail(q);
  out.fitted = c * theta;
  const VectorXd resid = y - out.fitted;
  out.loglik = -0.5 * (static_cast<double>(model.n()) * kLog2Pi + cov.error.log_det() +
                       resid.dot(cov.error.solve(resid)));
  out.edf = (out.V * c).trace();
  return out;
}

// ---------------------------------------------------------------------------
// REML

RemlProblem::RemlProblem(ModelSpec model, RemlOptions options)
    : model_(std::move(model)), options_(std::move(options)) {
  model_.validate();
  const Index n = model_.n();
  if (n <= model_.p()) {
    throw DimensionError("REML needs more rows than fixed-effect columns");
  }
  if (!options_.residual_group.empty()) {
    if (static_cast<Index>(options_.residual_group.size()) != n) {
      throw DimensionError("residual groups must have one entry per row");
    }
    const int top = *std::max_element(options_.residual_group.begin(),
                                      options_.residual_group.end());
    n_groups_ = top + 1;
  }
  group_rows_.assign(n_groups_, {});
  for (Index i = 0; i < n; ++i) {
    const int g = options_.residual_group.empty() ? 0 : options_.residual_group[i];
    if (g < 0) {
      throw DimensionError("negative residual group index");
    }
    group_rows_[g].push_back(i);
  }
  const MatrixXd c = model_.joint_design();
  for (const auto& rows : group_rows_) {
    if (rows.empty()) {
      throw DimensionError("empty residual group");
    }
    MatrixXd cg(rows.size(), c.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      cg.row(static_cast<Index>(i)) = c.row(rows[i]);
    }
    ctc_.push_back(cg.transpose() * cg);
    c_rows_.push_back(std::move(cg));
  }
  for (const auto& b : model_.ranef) {
    n_cov_params_ += b.n_params();
  }
}

Index RemlProblem::n_params() const { return n_cov_params_ + (n_groups_ - 1); }

std::vector<RemlProblem::Cross> RemlProblem::cross_y(const VectorXd& y) const {
  check_response(y, model_.n());
  std::vector<Cross> out(group_rows_.size());
  for (std::size_t g = 0; g < group_rows_.size(); ++g) {
    VectorXd yg(group_rows_[g].size());
    for (std::size_t i = 0; i < group_rows_[g].size(); ++i) {
      yg(static_cast<Index>(i)) = y(group_rows_[g][i]);
    }
    out[g].cty = c_rows_[g].transpose() * yg;
    out[g].yty = yg.squaredNorm();
  }
  return out;
}

MatrixXd RemlProblem::relative_factor(const double* theta, std::vector<bool>* at_bound,
                                      double* floor_penalty) const {
  const Index q = model_.q();
  MatrixXd lambda = MatrixXd::Zero(q, q);
  Index idx = 0;
  auto diag_value = [&](double t) {
    // below the floor the deviance is flat; a small slope keeps the simplex
    // from drifting
    if (floor_penalty != nullptr && t < kThetaFloor) {
      *floor_penalty += 1e-3 * (kThetaFloor - t) * (kThetaFloor - t);
    }
    if (at_bound != nullptr) {
      const bool hit = t <= kBoundaryTheta;
      at_bound->push_back(hit);
      if (hit) {
        return 0.0;
      }
    }
    return std::exp(std::max(t, kThetaFloor));
  };
  for (const auto& b : model_.ranef) {
    MatrixXd lb = MatrixXd::Zero(b.dim, b.dim);
    switch (b.cov) {
      case RanefCov::Unstructured:
        for (Index r = 0; r < b.dim; ++r) {
          for (Index c = 0; c <= r; ++c) {
            lb(r, c) = r == c ? diag_value(theta[idx]) : theta[idx];
            ++idx;
          }
        }
        break;
      case RanefCov::Diagonal:
        for (Index r = 0; r < b.dim; ++r) {
          lb(r, r) = diag_value(theta[idx++]);
        }
        break;
      case RanefCov::Scalar: {
        const double s = diag_value(theta[idx++]);
        lb.diagonal().setConstant(s);
        break;
      }
    }
    if (b.kind == RanefKind::Iid) {
      lambda.block(b.offset, b.offset, b.dim, b.dim) = lb;
    } else {
      for (Index l = 0; l < b.levels; ++l) {
        lambda.block(b.offset + l * b.dim, b.offset + l * b.dim, b.dim, b.dim) = lb;
      }
    }
  }
  return lambda;
}

std::vector<double> RemlProblem::group_ratios(const double* theta) const {
  std::vector<double> r(n_groups_, 1.0);
  for (Index g = 1; g < n_groups_; ++g) {
    r[g] = std::exp(theta[n_cov_params_ + g - 1]);
  }
  return r;
}

double RemlProblem::deviance_impl(const double* theta, const std::vector<Cross>& cy,
                                  double* sigma2) const {
  const Index n = model_.n();
  const Index p = model_.p();
  const Index q = model_.q();
  const std::vector<double> ratio = group_ratios(theta);
  MatrixXd ctwc = MatrixXd::Zero(p + q, p + q);
  VectorXd ctwy = VectorXd::Zero(p + q);
  double ytwy = 0.0;
  double log_ratio = 0.0;
  for (Index g = 0; g < n_groups_; ++g) {
    const double w = 1.0 / ratio[g];
    ctwc += w * ctc_[g];
    ctwy += w * cy[g].cty;
    ytwy += w * cy[g].yty;
    log_ratio += static_cast<double>(group_rows_[g].size()) * std::log(ratio[g]);
  }
  MatrixXd m(p + q, p + q);
  VectorXd r(p + q);
  double floor_penalty = 0.0;
  if (q > 0) {
    const MatrixXd lambda = relative_factor(theta, nullptr, &floor_penalty);
    m.topLeftCorner(p, p) = ctwc.topLeftCorner(p, p);
    m.topRightCorner(p, q) = ctwc.topRightCorner(p, q) * lambda;
    m.bottomLeftCorner(q, p) = m.topRightCorner(p, q).transpose();
    m.bottomRightCorner(q, q) = lambda.transpose() * ctwc.bottomRightCorner(q, q) * lambda;
    m.bottomRightCorner(q, q).diagonal().array() += 1.0;
    r.head(p) = ctwy.head(p);
    r.tail(q) = lambda.transpose() * ctwy.tail(q);
  } else {
    m = ctwc;
    r = ctwy;
  }
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    return std::numeric_limits<double>::max();
  }
  const VectorXd phi = llt.solve(r);
  const double pwrss = std::max(ytwy - phi.dot(r), 1e-300);
  const double dof = static_cast<double>(n - p);
  if (sigma2 != nullptr) {
    *sigma2 = pwrss / dof;
  }
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return log_det + dof * (1.0 + std::log(2.0 * M_PI * pwrss / dof)) + log_ratio + floor_penalty;
}

double RemlProblem::deviance(const std::vector<double>& theta, const VectorXd& y) const {
  if (static_cast<Index>(theta.size()) != n_params()) {
    throw DimensionError("wrong number of REML parameters");
  }
  return deviance_impl(theta.data(), cross_y(y), nullptr);
}

namespace {

struct SimplexContext {
  const RemlProblem* problem;
  const void* cross;
  double (*fn)(const RemlProblem*, const void*, const double*);
};

double simplex_objective(const gsl_vector* x, void* params) {
  const auto* ctx = static_cast<const SimplexContext*>(params);
  return ctx->fn(ctx->problem, ctx->cross, x->data);
}

struct MinimizerDeleter {
  void operator()(gsl_multimin_fminimizer* m) const { gsl_multimin_fminimizer_free(m); }
};
struct VectorDeleter {
  void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};

}  // namespace

CovarianceModel RemlProblem::fit(const VectorXd& y) const {
  const std::vector<Cross> cy = cross_y(y);
  const Index k = n_params();
  std::vector<double> theta(static_cast<std::size_t>(k), 0.0);
  {
    Index idx = 0;
    const double start = std::log(std::sqrt(0.1));
    for (const auto& b : model_.ranef) {
      switch (b.cov) {
        case RanefCov::Unstructured:
          for (Index r = 0; r < b.dim; ++r) {
            for (Index c = 0; c <= r; ++c) {
              theta[idx++] = r == c ? start : 0.0;
            }
          }
          break;
        case RanefCov::Diagonal:
          for (Index r = 0; r < b.dim; ++r) theta[idx++] = start;
          break;
        case RanefCov::Scalar:
          theta[idx++] = start;
          break;
      }
    }
  }

  if (k > 0) {
    auto fn = +[](const RemlProblem* self, const void* cross, const double* t) {
      return self->deviance_impl(t, *static_cast<const std::vector<Cross>*>(cross), nullptr);
    };
    SimplexContext ctx{this, &cy, fn};
    gsl_multimin_function f{&simplex_objective, static_cast<std::size_t>(k), &ctx};
    std::unique_ptr<gsl_vector, VectorDeleter> x(gsl_vector_alloc(k));
    std::unique_ptr<gsl_vector, VectorDeleter> step(gsl_vector_alloc(k));
    for (Index i = 0; i < k; ++i) {
      gsl_vector_set(x.get(), i, theta[i]);
    }
    gsl_vector_set_all(step.get(), 1.0);
    std::unique_ptr<gsl_multimin_fminimizer, MinimizerDeleter> s(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, k));
    gsl_multimin_fminimizer_set(s.get(), &f, x.get(), step.get());
    bool converged = false;
    double best_f = std::numeric_limits<double>::infinity();
    int last_gain = 0;
    for (int it = 0; it < options_.max_iter; ++it) {
      if (gsl_multimin_fminimizer_iterate(s.get()) != GSL_SUCCESS) {
        break;
      }
      const double size = gsl_multimin_fminimizer_size(s.get());
      if (gsl_multimin_test_size(size, options_.size_tol) == GSL_SUCCESS) {
        converged = true;
        break;
      }
      // near the optimum the deviance is flat to rounding error and the
      // simplex can wander without shrinking further
      if (s->fval < best_f - 1e-10 * std::max(1.0, std::abs(best_f))) {
        best_f = s->fval;
        last_gain = it;
      }
      // a floor-clamped coordinate is flat and keeps the simplex from shrinking
      if ((it - last_gain >= 50 && size < 1e-3) || it - last_gain >= 150) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw NumericalError("REML optimizer did not converge for model '" + model_.id + "'");
    }
    for (Index i = 0; i < k; ++i) {
      theta[i] = gsl_vector_get(s->x, i);
    }
  }

  double sigma2 = 0.0;
  deviance_impl(theta.data(), cy, &sigma2);
  std::vector<bool> at_bound;
  const MatrixXd lambda = relative_factor(theta.data(), &at_bound);
  CovarianceModel cov;
  cov.provenance = Provenance::ModelEstimate;
  cov.boundary = std::find(at_bound.begin(), at_bound.end(), true) != at_bound.end();
  cov.ranef = symmetrize(sigma2 * lambda * lambda.transpose());
  for (const auto& b : model_.ranef) {
    if (b.kind == RanefKind::Iid) {
      cov.block_cov.push_back(cov.ranef.block(b.offset, b.offset, 1, 1));
    } else {
      cov.block_cov.push_back(cov.ranef.block(b.offset, b.offset, b.dim, b.dim));
    }
  }
  const std::vector<double> ratio = group_ratios(theta.data());
  if (n_groups_ == 1) {
    cov.error = ErrorCovariance::spherical(model_.n(), sigma2);
  } else {
    VectorXd v(model_.n());
    for (Index g = 0; g < n_groups_; ++g) {
      for (Index i : group_rows_[g]) {
        v(i) = sigma2 * ratio[g];
      }
    }
    cov.error = ErrorCovariance::diagonal(std::move(v));
  }
  cov.n_error_params = n_groups_;
  return cov;
}

double RemlProblem::caic(const VectorXd& y, const CovarianceModel& cov) const {
  const auto* diag = std::get_if<ErrorCovariance::Diagonal>(&cov.error.storage());
  if (diag == nullptr || cov.error.size() != model_.n()) {
    return selinf::caic(model_, cov, y);
  }
  std::vector<double> var(n_groups_);
  for (Index g = 0; g < n_groups_; ++g) {
    var[g] = diag->variances(group_rows_[g].front());
    for (Index i : group_rows_[g]) {
      if (diag->variances(i) != var[g]) {
        return selinf::caic(model_, cov, y);
      }
    }
  }
  const std::vector<Cross> cy = cross_y(y);
  const Index p = model_.p();
  const Index q = model_.q();
  MatrixXd ctrc = MatrixXd::Zero(p + q, p + q);
  VectorXd ctry = VectorXd::Zero(p + q);
  double ytry = 0.0;
  double log_det_r = 0.0;
  for (Index g = 0; g < n_groups_; ++g) {
    ctrc += ctc_[g] / var[g];
    ctry += cy[g].cty / var[g];
    ytry += cy[g].yty / var[g];
    log_det_r += static_cast<double>(group_rows_[g].size()) * std::log(var[g]);
  }
  const MatrixXd t = u_transform(p, psd_factor(cov.ranef));
  const MatrixXd tct = t.transpose() * ctrc * t;
  MatrixXd ku = tct;
  ku.diagonal().tail(t.cols() - p).array() += 1.0;
  const SpdFactor f(symmetrize(ku), "C'R^-1C + A");
  const VectorXd theta = t * f.solve(VectorXd(t.transpose() * ctry));
  const double rss = ytry - 2.0 * theta.dot(ctry) + theta.dot(ctrc * theta);
  const double edf = f.solve(tct).trace();
  const double n = static_cast<double>(model_.n());
  return n * kLog2Pi + log_det_r + rss + 2.0 * (edf + static_cast<double>(cov.n_error_params));
}

CovarianceModel fit_reml(const ModelSpec& model, const VectorXd& y, const RemlOptions& options) {
  return RemlProblem(model, options).fit(y);
}

ModelSpec intercept_model(const ModelSpec& model) {
  ModelSpec m = model;
  m.id = model.id + "-icm";
  m.fixed_design = MatrixXd::Ones(model.n(), 1);
  m.fixed_labels = {"(Intercept)"};
  m.smooths.clear();
  m.penalty.reset();
  return m;
}

CovarianceModel plugin_covariance(Provenance kind, const PluginContext& ctx) {
  switch (kind) {
    case Provenance::Truth: {
      if (ctx.truth == nullptr) {
        throw ConfigError("the truth plug-in needs the true covariance");
      }
      CovarianceModel c = *ctx.truth;
      c.provenance = Provenance::Truth;
      return c;
    }
    case Provenance::ModelEstimate: {
      if (ctx.selected == nullptr) {
        throw ConfigError("the model-estimate plug-in needs the selected model");
      }
      return fit_reml(*ctx.selected, ctx.y, ctx.reml);
    }
    case Provenance::ICM: {
      if (ctx.selected == nullptr) {
        throw ConfigError("the ICM plug-in needs the random-effect structure");
      }
      CovarianceModel c = fit_reml(intercept_model(*ctx.selected), ctx.y, ctx.reml);
      c.provenance = Provenance::ICM;
      return c;
    }
    case Provenance::VarY: {
      const Index n = ctx.y.size();
      if (n < 2) {
        throw ConfigError("the Var(Y) plug-in needs at least two observations");
      }
      const double mean = ctx.y.mean();
      const double s2 = (ctx.y.array() - mean).square().sum() / static_cast<double>(n - 1);
      CovarianceModel c;
      c.error = ErrorCovariance::spherical(n, s2);
      const Index q = ctx.selected != nullptr ? ctx.selected->q() : 0;
      c.ranef = MatrixXd::Zero(q, q);
      c.provenance = Provenance::VarY;
      c.n_error_params = 1;
      return c;
    }
  }
  throw ConfigError("unknown plug-in kind");
}

double caic(const ModelSpec& model, const CovarianceModel& cov, const VectorXd& y) {
  const FitResult fit = solve_blup(model, cov, y, ShrinkageMode::Working);
  return -2.0 * fit.loglik + 2.0 * (fit.edf + static_cast<double>(cov.n_error_params));
}

}  // namespace selinf
