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

#include "selinf/splines.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "selinf/error.hpp"

namespace selinf {

SplineBasis::SplineBasis(double lower, double upper, Index n_basis, int degree, int diff_order)
    : lower_(lower), upper_(upper), n_basis_(n_basis), degree_(degree), diff_order_(diff_order) {
  if (degree < 0) {
    throw ConfigError("spline degree must be non-negative");
  }
  if (n_basis <= degree + 1) {
    throw ConfigError("number of basis functions must exceed degree + 1");
  }
  if (diff_order < 1 || n_basis <= diff_order) {
    throw ConfigError("difference order must lie in [1, d)");
  }
  if (!(upper > lower)) {
    throw ConfigError("spline covariate range is empty");
  }
  const Index segments = n_basis - degree;
  const double h = (upper - lower) / static_cast<double>(segments);
  knots_.resize(n_basis + degree + 1);
  for (Index i = 0; i < knots_.size(); ++i) {
    knots_(i) = lower + static_cast<double>(i - degree) * h;
  }
  // pin the boundary knots so that eval(upper) lands exactly in the last span
  knots_(degree) = lower;
  knots_(n_basis) = upper;
  const MatrixXd d = difference_matrix(n_basis, diff_order);
  penalty_ = d.transpose() * d;
}

RowVectorXd SplineBasis::eval(double z) const {
  RowVectorXd row = RowVectorXd::Zero(n_basis_);
  if (!(z >= lower_ && z <= upper_)) {
    return row;
  }
  const Index k = degree_;
  Index m = k;
  while (m < n_basis_ - 1 && z >= knots_(m + 1)) {
    ++m;
  }
  std::vector<double> n(k + 1, 0.0), left(k + 1, 0.0), right(k + 1, 0.0);
  n[0] = 1.0;
  for (Index j = 1; j <= k; ++j) {
    left[j] = z - knots_(m + 1 - j);
    right[j] = knots_(m + j) - z;
    double saved = 0.0;
    for (Index r = 0; r < j; ++r) {
      const double temp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    n[j] = saved;
  }
  for (Index r = 0; r <= k; ++r) {
    row(m - k + r) = n[r];
  }
  return row;
}

MatrixXd SplineBasis::eval(const VectorXd& x) const {
  MatrixXd out(x.size(), n_basis_);
  for (Index i = 0; i < x.size(); ++i) {
    out.row(i) = eval(x(i));
  }
  return out;
}

SplineBasis build_basis(const VectorXd& x, Index d, int degree, int diff_order) {
  if (x.size() == 0 || !x.allFinite()) {
    throw ConfigError("spline covariate must be finite and non-empty");
  }
  std::set<double> distinct(x.data(), x.data() + x.size());
  if (static_cast<Index>(distinct.size()) < d) {
    throw ConfigError("spline covariate has fewer distinct values than basis functions");
  }
  return SplineBasis(x.minCoeff(), x.maxCoeff(), d, degree, diff_order);
}

MatrixXd difference_matrix(Index d, int order) {
  MatrixXd m = MatrixXd::Identity(d, d);
  for (int o = 0; o < order; ++o) {
    MatrixXd next = m.bottomRows(m.rows() - 1) - m.topRows(m.rows() - 1);
    m = std::move(next);
  }
  return m;
}

VectorXd fit_pls(const SplineBasis& basis, const VectorXd& x, const VectorXd& y, double lambda) {
  if (!(lambda >= 0.0)) {
    throw ConfigError("smoothing parameter must be non-negative");
  }
  check_response(y, x.size());
  const MatrixXd c = basis.eval(x);
  const MatrixXd d = difference_matrix(basis.n_basis(), basis.diff_order());
  // augmented least squares keeps large lambda well conditioned
  MatrixXd a(c.rows() + d.rows(), c.cols());
  a.topRows(c.rows()) = c;
  a.bottomRows(d.rows()) = std::sqrt(lambda) * d;
  VectorXd rhs = VectorXd::Zero(a.rows());
  rhs.head(y.size()) = y;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
  qr.setThreshold(1e-12);
  if (qr.rank() < c.cols()) {
    throw NumericalError("penalized normal equations are singular");
  }
  return qr.solve(rhs);
}

namespace {

MatrixXd polynomial_null_basis(Index d, int order) {
  MatrixXd f(d, order);
  const double mid = 0.5 * static_cast<double>(d - 1);
  for (Index i = 0; i < d; ++i) {
    const double k = (static_cast<double>(i) - mid) / std::max(mid, 1.0);
    for (int j = 0; j < order; ++j) {
      f(i, j) = std::pow(k, j);
    }
  }
  return f;
}

MatrixXd row_kronecker(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.cols(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      out.col(i * b.cols() + j) = a.col(i).cwiseProduct(b.col(j));
    }
  }
  return out;
}

MatrixXd kronecker(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

}  // namespace

MixedReparam reparametrize_penalty(const MatrixXd& penalty, const MatrixXd& null_basis) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(penalty));
  if (es.info() != Eigen::Success) {
    throw NumericalError("eigendecomposition of the penalty failed");
  }
  const VectorXd& ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  if (!(top > 0.0)) {
    throw NumericalError("penalty matrix is zero");
  }
  const double cut = 1e-9 * top;
  std::vector<Index> keep;
  for (Index i = 0; i < ev.size(); ++i) {
    const double rel = ev(i) / top;
    if (rel > 1e-11 && rel < 1e-7) {
      throw NumericalError("penalty rank is numerically indeterminate");
    }
    if (ev(i) > cut) {
      keep.push_back(i);
    }
  }
  const Index nulls = ev.size() - static_cast<Index>(keep.size());
  if (nulls != null_basis.cols()) {
    throw NumericalError("penalty null space does not match the polynomial basis");
  }
  MixedReparam out;
  out.fixed_map = null_basis;
  out.random_map.resize(penalty.rows(), static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.random_map.col(static_cast<Index>(k)) =
        es.eigenvectors().col(keep[k]) / std::sqrt(ev(keep[k]));
  }
  return out;
}

MixedReparam reparametrize(const SplineBasis& basis) {
  return reparametrize_penalty(basis.penalty_raw(),
                               polynomial_null_basis(basis.n_basis(), basis.diff_order()));
}

AdditiveTerm AdditiveTerm::linear(std::string name, VectorXd x) {
  AdditiveTerm t;
  t.kind = Kind::Linear;
  t.name = std::move(name);
  t.x = std::move(x);
  return t;
}

AdditiveTerm AdditiveTerm::smooth(std::string name, VectorXd x, Index d, int degree,
                                  int diff_order) {
  AdditiveTerm t;
  t.kind = Kind::Smooth;
  t.name = std::move(name);
  t.x = std::move(x);
  t.d = d;
  t.degree = degree;
  t.diff_order = diff_order;
  return t;
}

AdditiveTerm AdditiveTerm::tensor(std::string name, VectorXd x, VectorXd x2, Index d) {
  AdditiveTerm t;
  t.kind = Kind::Tensor;
  t.name = std::move(name);
  t.x = std::move(x);
  t.x2 = std::move(x2);
  t.d = d;
  return t;
}

namespace {

struct Block {
  MatrixXd fixed;
  MatrixXd random;
};

Block centered_split(const MatrixXd& basis_eval, const MixedReparam& rp, RowVectorXd& means) {
  means = basis_eval.colwise().mean();
  const MatrixXd centered = basis_eval.rowwise() - means;
  Block b;
  // the constant column of the null space is absorbed by the intercept
  b.fixed = centered * rp.fixed_map.rightCols(rp.fixed_map.cols() - 1);
  b.random = centered * rp.random_map;
  return b;
}

}  // namespace

ModelSpec build_additive_model(const std::string& id, const std::vector<AdditiveTerm>& terms) {
  if (terms.empty()) {
    throw ConfigError("additive model needs at least one term");
  }
  const Index n = terms.front().x.size();
  std::vector<MatrixXd> fixed_parts{MatrixXd::Ones(n, 1)};
  std::vector<MatrixXd> random_parts;
  ModelSpec m;
  m.id = id;
  m.fixed_labels.push_back("(Intercept)");
  Index q = 0;
  for (const auto& t : terms) {
    if (t.x.size() != n) {
      throw DimensionError("term '" + t.name + "' has a different number of rows");
    }
    switch (t.kind) {
      case AdditiveTerm::Kind::Linear: {
        fixed_parts.push_back(t.x);
        m.fixed_labels.push_back(t.name);
        break;
      }
      case AdditiveTerm::Kind::Smooth: {
        const SplineBasis basis = build_basis(t.x, t.d, t.degree, t.diff_order);
        const MixedReparam rp = reparametrize(basis);
        RowVectorXd means;
        Block b = centered_split(basis.eval(t.x), rp, means);
        for (Index j = 0; j < b.fixed.cols(); ++j) {
          m.fixed_labels.push_back(t.name);
        }
        for (Index j = 0; j < b.random.cols(); ++j) {
          m.random_labels.push_back(t.name);
        }
        m.ranef.push_back(RanefBlock{t.name, RanefKind::Iid, q, b.random.cols(), 1,
                                     RanefCov::Scalar});
        q += b.random.cols();
        fixed_parts.push_back(std::move(b.fixed));
        random_parts.push_back(std::move(b.random));
        const MatrixXd fixed_map = rp.fixed_map.rightCols(rp.fixed_map.cols() - 1);
        const MatrixXd random_map = rp.random_map;
        m.smooths.push_back(SmoothEvaluator{
            t.name, basis.lower(), basis.upper(),
            [basis, means, fixed_map, random_map](double z) {
              const RowVectorXd c = basis.eval(z) - means;
              return std::make_pair(RowVectorXd(c * fixed_map), RowVectorXd(c * random_map));
            }});
        break;
      }
      case AdditiveTerm::Kind::Tensor: {
        if (t.x2.size() != n) {
          throw DimensionError("tensor term '" + t.name + "' covariates differ in length");
        }
        const SplineBasis b1 = build_basis(t.x, t.d, 3, 2);
        const SplineBasis b2 = build_basis(t.x2, t.d, 3, 2);
        const MatrixXd eye = MatrixXd::Identity(t.d, t.d);
        const MatrixXd penalty =
            kronecker(b1.penalty_raw(), eye) + kronecker(eye, b2.penalty_raw());
        const MatrixXd null1 = polynomial_null_basis(t.d, 2);
        const MixedReparam rp = reparametrize_penalty(penalty, kronecker(null1, null1));
        RowVectorXd means;
        Block b = centered_split(row_kronecker(b1.eval(t.x), b2.eval(t.x2)), rp, means);
        for (Index j = 0; j < b.fixed.cols(); ++j) {
          m.fixed_labels.push_back(t.name);
        }
        for (Index j = 0; j < b.random.cols(); ++j) {
          m.random_labels.push_back(t.name);
        }
        m.ranef.push_back(RanefBlock{t.name, RanefKind::Iid, q, b.random.cols(), 1,
                                     RanefCov::Scalar});
        q += b.random.cols();
        fixed_parts.push_back(std::move(b.fixed));
        random_parts.push_back(std::move(b.random));
        break;
      }
    }
  }
  Index p = 0;
  for (const auto& f : fixed_parts) p += f.cols();
  m.fixed_design.resize(n, p);
  Index c = 0;
  for (const auto& f : fixed_parts) {
    m.fixed_design.middleCols(c, f.cols()) = f;
    c += f.cols();
  }
  m.random_design.resize(n, q);
  c = 0;
  for (const auto& r : random_parts) {
    m.random_design.middleCols(c, r.cols()) = r;
    c += r.cols();
  }
  m.validate();
  return m;
}

}  // namespace selinf
