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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "selinf/direction.hpp"
#include "selinf/error.hpp"
#include "selinf/splines.hpp"
#include "test_util.hpp"

using namespace selinf;
using namespace selinf::testing;

namespace {

ModelSpec regression(Index n, Index k, std::uint64_t seed) {
  ModelSpec m;
  m.id = "reg";
  m.fixed_design.resize(n, k + 1);
  m.fixed_design.col(0).setOnes();
  m.fixed_design.rightCols(k) = random_matrix(n, k, seed);
  m.random_design = MatrixXd(n, 0);
  m.fixed_labels = {"(Intercept)"};
  for (Index j = 1; j <= k; ++j) m.fixed_labels.push_back("x" + std::to_string(j));
  return m;
}

CovarianceModel dense_cov(const MatrixXd& sigma) {
  return CovarianceModel{ErrorCovariance::dense(sigma), MatrixXd(0, 0)};
}

/// Regression with a random intercept over `groups` groups.
ModelSpec mixed(Index groups, Index k, std::uint64_t seed) {
  ModelSpec m = regression(groups * 4, 2, seed);
  std::vector<int> g(static_cast<std::size_t>(m.n()));
  for (Index i = 0; i < m.n(); ++i) g[static_cast<std::size_t>(i)] = static_cast<int>(i / 4);
  (void)k;
  add_grouped_ranef(m, "(1|g)", g, groups, MatrixXd::Ones(m.n(), 1));
  return m;
}

CovarianceModel mixed_cov(const ModelSpec& m, double tau2, double s2) {
  CovarianceModel c;
  c.error = ErrorCovariance::spherical(m.n(), s2);
  c.block_cov = {MatrixXd::Constant(1, 1, tau2)};
  c.ranef = assemble_ranef_covariance(m, c.block_cov);
  return c;
}

}  // namespace

TEST_CASE("marginal GLS direction reduces to least squares for spherical metrics") {
  const ModelSpec m = regression(30, 3, 1);
  const CovarianceModel cov = dense_cov(2.5 * MatrixXd::Identity(30, 30));
  for (const char* term : {"x1", "x2", "x3"}) {
    const TestDirection gls = lm_marginal(m, cov, term, true);
    const TestDirection ols = lm_marginal(m, cov, term, false);
    CHECK(max_abs(gls.v - ols.v) < 1e-12);
    CHECK(gls.kappa == doctest::Approx(ols.kappa).epsilon(1e-12));
  }
}

TEST_CASE("marginal directions recover coefficients and GLS has the smallest variance") {
  const ModelSpec m = regression(25, 3, 2);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const MatrixXd sigma = random_pd(25, 100 + s);
    const CovarianceModel cov = dense_cov(sigma);
    const VectorXd beta = random_vector(4, 200 + s);
    for (Index j = 1; j <= 3; ++j) {
      const std::string term = "x" + std::to_string(j);
      const TestDirection gls = lm_marginal(m, cov, term, true);
      const TestDirection ols = lm_marginal(m, cov, term, false);
      CHECK(gls.v.dot(m.fixed_design * beta) == doctest::Approx(beta(j)).epsilon(1e-9));
      CHECK(ols.v.dot(m.fixed_design * beta) == doctest::Approx(beta(j)).epsilon(1e-9));
      CHECK(gls.kappa == doctest::Approx(gls.v.dot(sigma * gls.v)).epsilon(1e-9));
      CHECK(gls.kappa <= ols.kappa * (1.0 + 1e-10));
    }
  }
}

TEST_CASE("scalar toy model kappa variants") {
  ModelSpec m;
  m.id = "toy";
  m.fixed_design = MatrixXd::Ones(1, 1);
  m.random_design = MatrixXd(1, 0);
  m.fixed_labels = {"b"};
  m.penalty = MatrixXd::Ones(1, 1);
  const CovarianceModel cov{ErrorCovariance::spherical(1, 1.0), MatrixXd(0, 0)};
  const TestDirection c =
      conditional_coefficient(m, cov, "b", KappaVariant::Classical, ShrinkageMode::Working);
  const TestDirection b =
      conditional_coefficient(m, cov, "b", KappaVariant::Bayesian, ShrinkageMode::Working);
  CHECK(c.v(0) == doctest::Approx(0.5));
  CHECK(c.kappa == doctest::Approx(0.25));
  CHECK(b.kappa == doctest::Approx(0.5));
  CHECK(c.v_sde(0) == doctest::Approx(1.0));
}

TEST_CASE("unpenalized test vectors coincide with the SDE vector") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const ModelSpec m = mixed(8, 2, 300 + s);
    const CovarianceModel cov = mixed_cov(m, 1.5, 0.7);
    for (KappaVariant kv : {KappaVariant::Classical, KappaVariant::Bayesian}) {
      const TestDirection d = conditional_coefficient(m, cov, "x1", kv, ShrinkageMode::Unpenalized);
      CHECK(max_abs(d.v - d.v_sde) < 1e-12);
    }
    // the SDE vector reads off the coefficient of any mean in the span of C
    const VectorXd theta = random_vector(m.p() + m.q(), 400 + s);
    const VectorXd psi = m.joint_design() * theta;
    const TestDirection w =
        conditional_coefficient(m, cov, "x1", KappaVariant::Classical, ShrinkageMode::Working);
    CHECK(w.v_sde.dot(psi) == doctest::Approx(theta(1)).epsilon(1e-8));
  }
}

TEST_CASE("Bayesian kappa dominates the classical one") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const ModelSpec m = mixed(6, 2, 500 + s);
    const CovarianceModel cov = mixed_cov(m, 0.2 + 0.1 * static_cast<double>(s), 1.0);
    const RowVectorXd target = random_vector(m.p() + m.q(), 600 + s).transpose();
    const TestDirection c =
        conditional(m, cov, target, KappaVariant::Classical, ShrinkageMode::Working);
    const TestDirection b =
        conditional(m, cov, target, KappaVariant::Bayesian, ShrinkageMode::Working);
    CHECK(b.kappa >= c.kappa * (1.0 - 1e-10));
    CHECK(max_abs(b.v - c.v) == 0.0);
  }
}

TEST_CASE("pointwise spline vector reproduces the fitted curve") {
  CounterRng rng(7);
  const Index n = 120;
  VectorXd z(n), y(n);
  for (Index i = 0; i < n; ++i) {
    z(i) = -2.0 + 4.0 * rng.uniform();
    y(i) = 1.0 + std::sin(2.0 * z(i)) + 0.3 * rng.normal();
  }
  const ModelSpec m = build_additive_model("am", {AdditiveTerm::smooth("s(z)", z, 8)});
  CovarianceModel cov;
  cov.error = ErrorCovariance::spherical(n, 0.09);
  cov.block_cov = {MatrixXd::Constant(1, 1, 0.5)};
  cov.ranef = assemble_ranef_covariance(m, cov.block_cov);
  const FitResult fit = solve_blup(m, cov, y);
  VectorXd coef(m.p() + m.q());
  coef << fit.beta, fit.b;
  for (double at : {-1.5, -1.0, 0.0, 0.7, 1.9}) {
    const TestDirection d = spline_pointwise(m, cov, "s(z)", at, KappaVariant::Classical);
    CHECK(d.statistic(y) == doctest::Approx(m.smooth_row("s(z)", at).dot(coef)).epsilon(1e-10));
  }

  // with vanishing random-effect variance only the linear part remains
  CovarianceModel stiff = cov;
  stiff.block_cov = {MatrixXd::Constant(1, 1, 1e-12)};
  stiff.ranef = assemble_ranef_covariance(m, stiff.block_cov);
  const MatrixXd& x = m.fixed_design;
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  for (double at : {-1.0, 0.5}) {
    const RowVectorXd row = m.smooth_row("s(z)", at);
    const VectorXd fixed_row = row.head(m.p()).transpose();
    const VectorXd v_ols = x * (x.transpose() * x).ldlt().solve(fixed_row);
    const TestDirection d = spline_pointwise(m, stiff, "s(z)", at, KappaVariant::Classical);
    CHECK(max_abs(d.v - v_ols) < 1e-6);
  }
}

TEST_CASE("group direction of an orthogonal term is its own design") {
  const Index n = 16;
  MatrixXd x(n, 3);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = (i % 2 == 0) ? 1.0 : -1.0;
    x(i, 2) = ((i / 2) % 2 == 0) ? 1.0 : -1.0;
  }
  ModelSpec m;
  m.id = "orth";
  m.fixed_design = x;
  m.random_design = MatrixXd(n, 0);
  m.fixed_labels = {"(Intercept)", "g", "g"};
  const TestDirection d = group_direction(m, "g", MatrixXd::Identity(n, n));
  CHECK(d.dof == 2);
  const MatrixXd proj_basis = d.basis * d.basis.transpose();
  const MatrixXd xj = x.rightCols(2);
  const MatrixXd proj_x = xj * (xj.transpose() * xj).inverse() * xj.transpose();
  CHECK(max_abs(proj_basis - proj_x) < 1e-12);
  const VectorXd y = random_vector(n, 9);
  CHECK(d.statistic(y) == doctest::Approx((proj_x * y).norm()));
}

TEST_CASE("degenerate group designs are rejected") {
  const ModelSpec base = regression(20, 2, 10);
  ModelSpec m = base;
  m.fixed_design.conservativeResize(Eigen::NoChange, 4);
  m.fixed_design.col(3) = 2.0 * m.fixed_design.col(1) - m.fixed_design.col(0);
  m.fixed_labels.push_back("dup");
  CHECK_THROWS_AS(group_direction(m, "dup", MatrixXd::Identity(20, 20)), NumericalError);
  CHECK_THROWS_AS(group_direction(base, "nope", MatrixXd::Identity(20, 20)), ConfigError);
}

TEST_CASE("reconstruction identity and projector idempotency") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const ModelSpec m = regression(18, 3, 700 + s);
    const MatrixXd sigma = random_pd(18, 800 + s);
    const VectorXd y = random_vector(18, 900 + s);
    const TestDirection scalar = lm_marginal(m, dense_cov(sigma), "x2", true);
    CHECK(max_abs(scalar.rebuild_from(y, scalar.statistic(y)) - y) < 1e-10);
    const VectorXd moved = scalar.rebuild_from(y, 3.5);
    CHECK(scalar.statistic(moved) == doctest::Approx(3.5).epsilon(1e-10));
    CHECK(max_abs(scalar.orthogonal(moved) - scalar.orthogonal(y)) < 1e-10);

    ModelSpec g = m;
    g.fixed_labels[2] = "grp";
    g.fixed_labels[3] = "grp";
    const TestDirection group = group_direction(g, "grp", sigma);
    CHECK(group.dof == 2);
    CHECK(max_abs(group.rebuild_from(y, group.statistic(y)) - y) < 1e-10);
    CHECK(group.statistic(group.rebuild_from(y, 1.25)) == doctest::Approx(1.25).epsilon(1e-10));

    const MatrixXd p = projector(sigma, scalar.v);
    CHECK(max_abs(p * p - p) < 1e-9);
  }
}
