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

#include "selinf/error.hpp"
#include "selinf/model.hpp"
#include "test_util.hpp"

using namespace selinf;
using namespace selinf::testing;

namespace {

ModelSpec intercept_only(Index n) {
  ModelSpec m;
  m.id = "m";
  m.fixed_design = MatrixXd::Ones(n, 1);
  m.random_design = MatrixXd(n, 0);
  m.fixed_labels = {"(Intercept)"};
  return m;
}

}  // namespace

TEST_CASE("marginal covariance without random effects is R") {
  ModelSpec m = intercept_only(3);
  CovarianceModel cov{ErrorCovariance::spherical(3, 2.5), MatrixXd(0, 0)};
  CHECK(relative_frobenius(marginal_covariance(m, cov), 2.5 * MatrixXd::Identity(3, 3)) < 1e-15);
}

TEST_CASE("random intercept with two rows") {
  ModelSpec m = intercept_only(2);
  m.random_design = MatrixXd::Ones(2, 1);
  m.random_labels = {"g"};
  m.ranef.push_back(RanefBlock{"g", RanefKind::Grouped, 0, 1, 1, RanefCov::Scalar});
  CovarianceModel cov{ErrorCovariance::spherical(2, 1.0), MatrixXd::Constant(1, 1, 4.0)};
  MatrixXd expected(2, 2);
  expected << 5, 4, 4, 5;
  CHECK(relative_frobenius(marginal_covariance(m, cov), expected) < 1e-15);
}

TEST_CASE("intercept and slope block covariance from sd and correlation") {
  const double g12 = 0.5 * std::sqrt(4.0 * 2.0);
  CHECK(g12 == doctest::Approx(1.41421356).epsilon(1e-8));
  MatrixXd g(2, 2);
  g << 4, g12, g12, 2;
  ModelSpec m = intercept_only(6);
  add_grouped_ranef(m, "grp", {0, 0, 1, 1, 2, 2}, 3,
                    (MatrixXd(6, 2) << 1, 0.3, 1, -1, 1, 2, 1, 0.1, 1, 0.5, 1, -0.7).finished());
  const MatrixXd big = assemble_ranef_covariance(m, {g});
  CHECK(big.rows() == 6);
  CHECK(big(2, 3) == doctest::Approx(g12));
  CHECK(big(0, 2) == 0.0);
  CovarianceModel cov{ErrorCovariance::spherical(6, 1.0), big};
  const MatrixXd sigma = marginal_covariance(m, cov);
  CHECK(relative_frobenius(sigma, sigma.transpose()) < 1e-12);
  CHECK(is_positive_definite(sigma));
  // rows of different groups are uncorrelated
  CHECK(sigma(0, 2) == 0.0);
}

TEST_CASE("axis and diagonal projections") {
  auto d = project(MatrixXd::Identity(2, 2), VectorXd::Unit(2, 0), (VectorXd(2) << 3, 5).finished());
  CHECK(d.parallel(0) == doctest::Approx(3));
  CHECK(d.parallel(1) == doctest::Approx(0));
  CHECK(d.orthogonal(1) == doctest::Approx(5));
  auto e = project(MatrixXd::Identity(2, 2), (VectorXd(2) << 1, 1).finished() / std::sqrt(2.0),
                   VectorXd::Unit(2, 0));
  CHECK(e.parallel(0) == doctest::Approx(0.5));
  CHECK(e.parallel(1) == doctest::Approx(0.5));
}

TEST_CASE("oblique projector is idempotent and covariance-orthogonal") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const MatrixXd sigma = random_pd(5, 100 + s);
    const VectorXd v = random_vector(5, 200 + s);
    const VectorXd y = random_vector(5, 300 + s);
    const MatrixXd p = projector(sigma, MatrixXd(v));
    const MatrixXd eye = MatrixXd::Identity(5, 5);
    CHECK(max_abs(p * p - p) < 1e-10);
    CHECK(max_abs(p * sigma * (eye - p).transpose()) < 1e-10 * sigma.norm());
    const auto d = project(sigma, v, y);
    CHECK(max_abs(d.parallel + d.orthogonal - y) <= 1e-10 * y.norm());
    CHECK(std::abs(v.dot(d.orthogonal)) < 1e-10 * y.norm() * v.norm());
  }
}

TEST_CASE("projection errors") {
  CHECK_THROWS_AS(project(MatrixXd::Identity(2, 2), VectorXd::Zero(2), VectorXd::Ones(2)),
                  NumericalError);
  MatrixXd singular = MatrixXd::Ones(2, 2);
  CHECK_THROWS_AS(project(singular, VectorXd::Unit(2, 0), VectorXd::Ones(2)), NumericalError);
  CHECK_THROWS_AS(project(MatrixXd::Identity(2, 2), VectorXd::Unit(3, 0), VectorXd::Ones(2)),
                  DimensionError);
}

TEST_CASE("marginal covariance is PD whenever R is") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Index n = 10 + static_cast<Index>(s) * 4;
    ModelSpec m = intercept_only(n);
    m.random_design = random_matrix(n, 3, 400 + s);
    m.random_labels = {"u", "u", "u"};
    m.ranef.push_back(RanefBlock{"u", RanefKind::Iid, 0, 3, 1, RanefCov::Scalar});
    CovarianceModel cov{ErrorCovariance::dense(random_pd(n, 500 + s)),
                        MatrixXd::Identity(3, 3) * 2.0};
    const MatrixXd sigma = marginal_covariance(m, cov);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK(relative_frobenius(sigma, sigma.transpose()) < 1e-12);
  }
}

TEST_CASE("Cholesky solves agree with the explicit inverse") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Index n = 2 + static_cast<Index>(s) * 2;
    const MatrixXd a = random_pd(n, 600 + s);
    const MatrixXd b = random_matrix(n, 3, 700 + s);
    const SpdFactor f(a);
    CHECK(relative_frobenius(f.solve(b), MatrixXd(a.inverse() * b)) < 1e-9);
    CHECK(f.log_det() == doctest::Approx(std::log(a.determinant())).epsilon(1e-9));
  }
}

TEST_CASE("error covariance storages agree") {
  const Index n = 6;
  const std::vector<int> group{0, 1, 0, 1, 1, 0};
  const MatrixXd b0 = random_pd(3, 800);
  const MatrixXd b1 = random_pd(3, 801);
  const ErrorCovariance bd = ErrorCovariance::block_diagonal(group, {b0, b1});
  const ErrorCovariance dense = ErrorCovariance::dense(bd.to_dense());
  const MatrixXd x = random_matrix(n, 2, 802);
  CHECK(relative_frobenius(bd.solve(x), dense.solve(x)) < 1e-12);
  CHECK(relative_frobenius(bd.multiply(x), dense.multiply(x)) < 1e-12);
  CHECK(bd.log_det() == doctest::Approx(dense.log_det()));
  const ErrorCovariance diag = ErrorCovariance::diagonal((VectorXd(3) << 1, 2, 3).finished());
  CHECK(diag.solve(VectorXd(VectorXd::Ones(3)))(2) == doctest::Approx(1.0 / 3.0));
  CHECK(!diag.spherical_variance());
  CHECK(*ErrorCovariance::spherical(4, 2.0).spherical_variance() == 2.0);
  CHECK_THROWS_AS(ErrorCovariance::dense(MatrixXd::Ones(2, 2)), NumericalError);
  CHECK_THROWS_AS(ErrorCovariance::spherical(3, -1.0), NumericalError);
}

TEST_CASE("model bookkeeping") {
  ModelSpec m = intercept_only(4);
  m.fixed_design.conservativeResize(4, 3);
  m.fixed_design.col(1) << 1, 2, 3, 4;
  m.fixed_design.col(2) << 0, 1, 0, 1;
  m.fixed_labels = {"(Intercept)", "x", "g"};
  m.validate();
  CHECK(m.fixed_terms().size() == 3);
  const ModelSpec r = m.without_fixed_term("x");
  CHECK(r.p() == 2);
  CHECK(r.fixed_labels[1] == "g");
  CHECK_THROWS_AS(m.without_fixed_term("nope"), ConfigError);
  const ModelSpec sub = m.restricted({true, false, true, false});
  CHECK(sub.n() == 2);
  CHECK(sub.fixed_design(1, 1) == 3.0);
  VectorXd bad(4);
  bad << 1, 2, NAN, 4;
  CHECK_THROWS_AS(check_response(bad, 4), DimensionError);
  CHECK_THROWS_AS(check_response(VectorXd::Ones(3), 4), DimensionError);
}
