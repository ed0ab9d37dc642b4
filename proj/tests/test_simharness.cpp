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
#include <set>

#include <nlohmann/json.hpp>

#include "selinf/error.hpp"
#include "selinf/simharness.hpp"
#include "selinf/stats.hpp"
#include "test_util.hpp"

using namespace selinf;
using namespace selinf::testing;

namespace {

double sd(const VectorXd& v) {
  return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

double rate(const std::vector<double>& p, double alpha) {
  double r = 0.0;
  for (double x : p) r += x < alpha ? 1.0 : 0.0;
  return r / static_cast<double>(p.size());
}

}  // namespace

TEST_CASE("lmm51 generator") {
  for (double snr : {2.0, 4.0}) {
    Lmm51Options o;
    o.snr = snr;
    const Lmm51Data d = generate_lmm51(17, o);
    CHECK(d.full.n() == 150);
    CHECK(d.full.p() == 7);
    CHECK(d.full.q() == 60);
    CHECK(sd(d.eta) / d.sigma == doctest::Approx(snr).epsilon(1e-12));
    double max_cor = 0.0;
    for (Index a = 1; a <= 6; ++a) {
      for (Index b = a + 1; b <= 6; ++b) {
        const VectorXd xa = d.full.fixed_design.col(a).array() - d.full.fixed_design.col(a).mean();
        const VectorXd xb = d.full.fixed_design.col(b).array() - d.full.fixed_design.col(b).mean();
        max_cor = std::max(max_cor, std::abs(xa.dot(xb)) / (xa.norm() * xb.norm()));
      }
    }
    CHECK(max_cor < 0.3);
    CHECK(d.truth.block_cov.front()(0, 1) == doctest::Approx(0.5 * 2.0 * std::sqrt(2.0)));
  }
  Lmm51Options low;
  low.low_signal = true;
  low.snr = 2.0;
  const Lmm51Data l = generate_lmm51(1, low);
  CHECK(l.beta(1) == 0.5);
  CHECK(l.beta(2) == 0.25);
  CHECK(l.beta(3) == -0.5);
  CHECK(l.beta.tail(3).isZero());

  Lmm51Options fixed;
  fixed.design_seed = 99;
  const Lmm51Data a = generate_lmm51(1, fixed);
  const Lmm51Data b = generate_lmm51(2, fixed);
  CHECK(a.full.fixed_design == b.full.fixed_design);
  CHECK(a.b == b.b);
  CHECK(a.y != b.y);

  // by default every replicate draws its own covariates and random effects
  const Lmm51Data c = generate_lmm51(1);
  const Lmm51Data e = generate_lmm51(2);
  CHECK(c.full.fixed_design != e.full.fixed_design);
  CHECK(c.b != e.b);
}

TEST_CASE("am52 generator") {
  const Am52Data d = generate_am52(3, 1.0, 10);
  CHECK(d.y.size() == 500);
  CHECK(d.candidates.size() == 5);
  std::set<std::string> ids;
  for (const auto& c : d.candidates) ids.insert(c.id);
  CHECK(ids == std::set<std::string>{"linear", "s(z1)", "s(z3)", "s(z1)+s(z2)", "s(z1)+s(z3)"});
  double s1 = 0.0, s2 = 0.0;
  for (Index i = 0; i < 500; ++i) {
    s1 += f1_true(d.z(i, 0));
    s2 += f2_true(d.z(i, 1));
  }
  CHECK(std::abs(s1) < 1e-10);
  CHECK(std::abs(s2) < 1e-10);
  CHECK(f1_true(-1.0) == doctest::Approx(0.76159).epsilon(1e-5));
  CHECK(f2_true(-1.0) == doctest::Approx(-0.14112).epsilon(1e-4));
  CHECK(f1_true(0.0) == 0.0);
  CHECK(f2_true(0.0) == 0.0);
  const ModelSpec& lin = d.candidates.front();
  CHECK(lin.q() == 0);
  CHECK(lin.p() == 5);
  CHECK_THROWS_AS(generate_am52(1, 1.0, 10, 7), ConfigError);
}

TEST_CASE("Kolmogorov-Smirnov helpers") {
  CHECK(kolmogorov_survival(1.358) == doctest::Approx(0.05).epsilon(0.01));
  std::vector<double> even, small, high;
  for (int i = 0; i < 200; ++i) {
    const double u = (i + 0.5) / 200.0;
    even.push_back(u);
    small.push_back(0.05 * u);
    high.push_back(std::sqrt(u));
  }
  CHECK(ks_uniform(even).p_value > 0.99);
  CHECK(ks_uniform(small).p_value < 1e-10);
  CHECK(ks_uniform(high).p_value < 1e-3);
  CHECK(ks_uniform_upper(high).p_value > 0.99);
  CHECK(ks_uniform_upper(small).p_value < 1e-10);
  CHECK_THROWS_AS(ks_uniform({}), ConfigError);
}

TEST_CASE("REML variance estimates on lmm51 are nearly unbiased") {
  double s2 = 0.0, g00 = 0.0, g11 = 0.0, truth_s2 = 0.0;
  const int reps = 40;
  for (int r = 0; r < reps; ++r) {
    const Lmm51Data d = generate_lmm51(1000 + static_cast<std::uint64_t>(r));
    const CovarianceModel est = fit_reml(d.full, d.y);
    s2 += *est.error.spherical_variance();
    truth_s2 += d.sigma * d.sigma;
    g00 += est.block_cov.front()(0, 0);
    g11 += est.block_cov.front()(1, 1);
  }
  CHECK(std::abs(s2 / truth_s2 - 1.0) < 0.15);
  CHECK(std::abs(g00 / reps / 4.0 - 1.0) < 0.15);
  CHECK(std::abs(g11 / reps / 2.0 - 1.0) < 0.15);
}

TEST_CASE("plug-in ordering and report plumbing") {
  SimDesign d;
  d.replicates = 60;
  d.samples = 100;
  d.perspectives = {Perspective::Marginal};
  d.plugins = {Provenance::Truth, Provenance::ModelEstimate, Provenance::ICM, Provenance::VarY};
  const StudyReport rep = run_study(d);
  CHECK(rep.conditioned == 60);
  CHECK(rep.attempted >= rep.conditioned);
  auto null_p = [&](const std::string& setting) {
    std::vector<double> p = rep.pooled(setting, "noise");
    const auto s = rep.pooled(setting, "signal@truth");
    p.insert(p.end(), s.begin(), s.end());
    return p;
  };
  const double truth = rate(null_p("marginal/truth"), 0.05);
  const double est = rate(null_p("marginal/model_estimate"), 0.05);
  const double icm = rate(null_p("marginal/icm"), 0.05);
  const double vary = rate(null_p("marginal/var_y"), 0.05);
  CHECK(truth < 0.12);
  CHECK(icm <= est + 0.02);
  CHECK(vary <= est + 0.02);
  // x1 is a strong signal
  CHECK(rate(rep.pooled("marginal/truth", "x1"), 0.05) > 0.8);

  const std::string csv = rep.to_csv();
  CHECK(csv.rfind("setting,term,replicate,p_naive,p_selective,power_flag\n", 0) == 0);
  const auto j = nlohmann::json::parse(rep.to_json());
  CHECK(j["conditioned"] == 60);
  CHECK(j["pools"].size() == rep.summary().size());

  SimDesign par = d;
  par.replicates = 10;
  par.workers = 1;
  const std::string one = run_study(par).to_csv();
  par.workers = 3;
  CHECK(run_study(par).to_csv() == one);
}

TEST_CASE("am52 study produces pointwise records") {
  SimDesign d;
  d.design_id = "am52";
  d.replicates = 2;
  d.samples = 20;
  d.min_congruent = 1;
  d.spline_d = 6;
  d.perspectives = {Perspective::Conditional};
  d.kappas = {KappaVariant::Classical, KappaVariant::Bayesian};
  const StudyReport rep = run_study(d);
  CHECK(rep.conditioned == 2);
  std::set<std::string> classes;
  for (const auto& r : rep.records) classes.insert(r.term_class);
  CHECK(classes.count("f1(0)") == 1);
  CHECK(classes.count("f1(-1)") == 1);
  for (const auto& r : rep.records) {
    CHECK((r.null_true == (r.term_class != "f1(-1)" && r.term_class != "f2(-1)")));
  }
}

TEST_CASE("design validation") {
  SimDesign d;
  d.snr = 3.0;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.allow_extension = true;
  CHECK_NOTHROW(d.validate());
  SimDesign a;
  a.design_id = "am52";
  a.sigma2 = 2.0;
  CHECK_THROWS_AS(a.validate(), ConfigError);
  a.sigma2 = 10.0;
  a.perspectives = {Perspective::Marginal};
  CHECK_THROWS_AS(a.validate(), ConfigError);
  SimDesign bad;
  bad.design_id = "lmm99";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
