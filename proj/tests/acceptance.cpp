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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Pass criterion numbers as arguments to
// run a subset, e.g. `acceptance 1 2 3`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "selinf/analysis.hpp"
#include "selinf/direction.hpp"
#include "selinf/engine.hpp"
#include "selinf/mmfit.hpp"
#include "selinf/oracle.hpp"
#include "selinf/parallel.hpp"
#include "selinf/rng.hpp"
#include "selinf/simharness.hpp"
#include "selinf/splines.hpp"
#include "selinf/stats.hpp"

using namespace selinf;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

unsigned workers() { return default_workers(); }

double max_abs(const MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

MatrixXd gaussian(Index rows, Index cols, std::uint64_t seed) {
  CounterRng rng(seed);
  MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

const PoolSummary* find_pool(const std::vector<PoolSummary>& pools, const std::string& setting,
                             const std::string& term_class) {
  for (const auto& p : pools) {
    if (p.setting == setting && p.term_class == term_class) return &p;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------

void oracle_report(Verdict& v, const std::vector<OracleCase>& cases, const char* name) {
  double worst = 0.0;
  for (const auto& c : cases) worst = std::max(worst, c.error());
  v.detail << " " << name << ": " << cases.size() << " cases, max |mc - exact| = " << fmt(worst);
  v.require(worst <= 0.005, std::string(name) + " error above 0.005");
}

Verdict criterion1() {
  Verdict v;
  OracleOptions o;
  o.workers = workers();
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = normal_oracle_suite(o);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::set<std::string> rules;
  for (const auto& c : cases) rules.insert(c.rule);
  v.require(rules.size() == 3 && cases.size() == 30, "3 rules x 10 configurations");
  oracle_report(v, cases, "truncated normal, B = 1e5");
  v.detail << ", " << fmt(secs, 1) << " s";
  v.require(secs < 60.0, "runtime below one minute");
  return v;
}

Verdict criterion2() {
  Verdict v;
  OracleOptions o;
  o.workers = workers();
  const auto cases = chi_oracle_suite(o);
  std::set<Index> dofs;
  for (const auto& c : cases) dofs.insert(c.dof);
  v.require(dofs == std::set<Index>{2, 3, 5}, "w in {2, 3, 5}");
  oracle_report(v, cases, "truncated chi, B = 1e5");
  return v;
}

Verdict criterion3() {
  Verdict v;
  const double z = normal_upper_quantile(0.025);
  double worst = 0.0;
  const SelectionProcedure always =
      custom_procedure("always", [](const VectorXd&) { return make_outcome({}, {}, "all"); });
  for (std::uint64_t s = 0; s < 10; ++s) {
    ModelSpec m;
    m.id = "reg";
    m.fixed_design.resize(20, 3);
    m.fixed_design.col(0).setOnes();
    m.fixed_design.rightCols(2) = gaussian(20, 2, substream(31, s));
    m.random_design = MatrixXd(20, 0);
    m.fixed_labels = {"(Intercept)", "x1", "x2"};
    CovarianceModel cov;
    cov.error = ErrorCovariance::spherical(20, 2.0 + static_cast<double>(s));
    const TestDirection dir = lm_marginal(m, cov, "x1", true);
    const VectorXd y = gaussian(20, 1, substream(32, s)).col(0) * std::sqrt(cov.error.to_dense()(0, 0));
    const double t = dir.statistic(y);
    EngineOptions eo;
    eo.samples = 100000;
    eo.workers = workers();
    const ProposalSpec wide = ProposalSpec::obs_centered(t, 6.25 * dir.kappa, substream(33, s));
    const InferenceResult r = selective_pvalue(dir, always, y, wide, eo);
    const double half = z * std::sqrt(dir.kappa);
    worst = std::max({worst, std::abs(r.ci->first - (t - half)),
                      std::abs(r.ci->second - (t + half))});
  }
  v.detail << " no truncation: max CI endpoint deviation " << fmt(worst);
  v.require(worst <= 0.02, "CI within 0.02 of t +- z sqrt(kappa)");

  const auto cases = duality_suite(20, 20000, 17, workers());
  std::size_t consistent = 0, rejected = 0;
  for (const auto& c : cases) {
    consistent += c.consistent() ? 1 : 0;
    rejected += c.p_value < c.alpha ? 1 : 0;
  }
  v.detail << "; duality " << consistent << "/" << cases.size() << " (" << rejected
           << " rejections)";
  v.require(consistent == cases.size(), "p/CI duality on every case");
  return v;
}

Verdict criterion8() {
  Verdict v;
  double worst_bridge = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    CounterRng rng(substream(81, s));
    const Index n = 40 + static_cast<Index>(s);
    const Index d = 8 + static_cast<Index>(s % 5);
    VectorXd x(n), y(n);
    for (Index i = 0; i < n; ++i) {
      x(i) = -2.0 + 4.0 * rng.uniform();
      y(i) = std::sin(1.5 * x(i)) + 0.5 * rng.normal();
    }
    const double lambda = std::exp(8.0 * rng.uniform() - 4.0);
    const double sigma2 = 0.3 + rng.uniform();
    const SplineBasis basis = build_basis(x, d);
    const MixedReparam rp = reparametrize(basis);
    const MatrixXd c = basis.eval(x);
    ModelSpec m;
    m.id = "bridge";
    m.fixed_design = c * rp.fixed_map;
    m.fixed_labels.assign(static_cast<std::size_t>(rp.fixed_map.cols()), "f");
    m.random_design = c * rp.random_map;
    const Index q = rp.random_map.cols();
    m.random_labels.assign(static_cast<std::size_t>(q), "f");
    m.ranef.push_back(RanefBlock{"f", RanefKind::Iid, 0, q, 1, RanefCov::Scalar});
    const CovarianceModel cov{ErrorCovariance::spherical(n, sigma2),
                              MatrixXd::Identity(q, q) * (sigma2 / lambda)};
    const FitResult fit = solve_blup(m, cov, y);
    const VectorXd gamma = fit_pls(basis, x, y, lambda);
    // compare the two curves on a fine grid, not only at the data
    const VectorXd grid = VectorXd::LinSpaced(200, x.minCoeff(), x.maxCoeff());
    const MatrixXd cg = basis.eval(grid);
    VectorXd theta(rp.fixed_map.cols() + q);
    theta << fit.beta, fit.b;
    MatrixXd map(d, theta.size());
    map << rp.fixed_map, rp.random_map;
    worst_bridge = std::max(worst_bridge, max_abs(cg * (map * theta) - cg * gamma));
  }
  v.detail << " PLS vs mixed model, 20 configurations: sup-norm " << std::scientific
           << worst_bridge << std::defaultfloat;
  v.require(worst_bridge <= 1e-8, "PLS and BLUP curves agree to 1e-8");

  double worst_poly = 0.0;
  for (int order : {1, 2, 3}) {
    CounterRng rng(substream(82, static_cast<std::uint64_t>(order)));
    const Index n = 80;
    VectorXd x(n), y(n);
    for (Index i = 0; i < n; ++i) {
      x(i) = 3.0 * rng.uniform();
      y(i) = std::cos(2.0 * x(i)) + 0.3 * rng.normal();
    }
    const SplineBasis basis = build_basis(x, 12, 3, order);
    const VectorXd grid = VectorXd::LinSpaced(100, x.minCoeff(), x.maxCoeff());
    const VectorXd spline = basis.eval(grid) * fit_pls(basis, x, y, 1e12);
    // the null space of an order-k difference penalty is the degree k-1 polynomials
    MatrixXd px(n, order), pg(grid.size(), order);
    for (int k = 0; k < order; ++k) {
      px.col(k) = x.array().pow(k);
      pg.col(k) = grid.array().pow(k);
    }
    const VectorXd coef = px.colPivHouseholderQr().solve(y);
    worst_poly = std::max(worst_poly, max_abs(spline - pg * coef));
  }
  v.detail << "; lambda -> inf vs polynomial regression (orders 1-3): " << std::scientific
           << worst_poly << std::defaultfloat;
  v.require(worst_poly <= 1e-4, "large-lambda limit within 1e-4");
  return v;
}

Verdict criterion9() {
  Verdict v;
  double proj = 0.0, recon = 0.0, sde = 0.0, kappa_gap = 0.0, cov_gap = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const Index groups = 6 + static_cast<Index>(s % 5);
    const Index n = groups * 4;
    ModelSpec m;
    m.id = "inv";
    m.fixed_design.resize(n, 3);
    m.fixed_design.col(0).setOnes();
    m.fixed_design.rightCols(2) = gaussian(n, 2, substream(91, s));
    m.random_design = MatrixXd(n, 0);
    m.fixed_labels = {"(Intercept)", "x1", "x2"};
    std::vector<int> g(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = static_cast<int>(i / 4);
    add_grouped_ranef(m, "(1|g)", g, groups, MatrixXd::Ones(n, 1));
    CounterRng rng(substream(92, s));
    CovarianceModel cov;
    cov.error = ErrorCovariance::spherical(n, 0.3 + rng.uniform());
    cov.block_cov = {MatrixXd::Constant(1, 1, 0.1 + 2.0 * rng.uniform())};
    cov.ranef = assemble_ranef_covariance(m, cov.block_cov);
    const VectorXd y = gaussian(n, 1, substream(93, s)).col(0);

    // projector idempotency for a marginal and a conditional direction
    const MatrixXd sigma = marginal_covariance(m, cov);
    const TestDirection marg = lm_marginal(m, cov, "x1", true);
    const MatrixXd p = projector(sigma, marg.v);
    proj = std::max(proj, max_abs(p * p - p));
    const VectorXd o = marg.orthogonal(y);
    proj = std::max(proj, max_abs(marg.orthogonal(o) - o));

    // reconstruction: T^b = t_obs gives back y
    const TestDirection cond = conditional_coefficient(m, cov, "x2", KappaVariant::Classical,
                                                       ShrinkageMode::Working);
    for (const TestDirection* d : {&marg, &cond}) {
      recon = std::max(recon, max_abs(d->rebuild_from(y, d->statistic(y)) - y));
    }

    // G = 0: the conditional vector is the SDE vector
    const TestDirection zero = conditional_coefficient(m, cov, "x2", KappaVariant::Classical,
                                                       ShrinkageMode::Unpenalized);
    sde = std::max(sde, max_abs(zero.v - zero.v_sde));

    // Bayesian kappa dominates classical kappa, also as matrices
    const TestDirection bayes = conditional_coefficient(m, cov, "x2", KappaVariant::Bayesian,
                                                        ShrinkageMode::Working);
    kappa_gap = std::max(kappa_gap, cond.kappa - bayes.kappa);
    const FitResult fit = solve_blup(m, cov, y);
    const MatrixXd classical = fit.V * cov.error.to_dense() * fit.V.transpose();
    const MatrixXd diff = fit.K_inv - classical;
    const double min_eig =
        Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (diff + diff.transpose())).eigenvalues()(0);
    cov_gap = std::max(cov_gap, -min_eig / std::max(1.0, max_abs(fit.K_inv)));
  }
  v.detail << " 100 instances: idempotency " << std::scientific << proj << ", reconstruction "
           << recon << ", |v - v_sde| at G = 0 " << sde << ", classical - Bayesian kappa "
           << kappa_gap << ", min eig(Bayes - classical) " << -cov_gap << std::defaultfloat;
  v.require(proj <= 1e-9, "projector idempotency");
  v.require(recon <= 1e-9, "reconstruction identity");
  v.require(sde <= 1e-10, "v equals the SDE vector at G = 0");
  v.require(kappa_gap <= 1e-12, "Bayesian kappa >= classical kappa");
  v.require(cov_gap <= 1e-10, "Bayesian covariance dominates the classical one");
  return v;
}

Verdict criterion10() {
  Verdict v;
  const std::string config = std::string(SELINF_SOURCE_DIR) + "/configs/example.json";
  std::vector<std::string> bundles;
  for (unsigned w : {1u, 4u, 8u}) {
    RunOverrides o;
    o.workers = w;
    o.samples = 200;
    bundles.push_back(Analysis::from_file(config, o).infer().bundle);
  }
  const bool same = bundles[0] == bundles[1] && bundles[0] == bundles[2];
  v.detail << " example analysis bundle (" << bundles[0].size() << " bytes) at workers 1, 4, 8: "
           << (same ? "identical" : "different");
  v.require(same, "byte-identical bundles");

  SimDesign d;
  d.replicates = 4;
  d.samples = 50;
  std::vector<std::string> csvs;
  for (unsigned w : {1u, 4u, 8u}) {
    d.workers = w;
    csvs.push_back(run_study(d).to_csv());
  }
  const bool sim_same = csvs[0] == csvs[1] && csvs[0] == csvs[2];
  v.detail << "; simulation report " << (sim_same ? "identical" : "different");
  v.require(sim_same, "byte-identical simulation reports");
  return v;
}

}  // namespace

namespace {

std::vector<double> null_pool(const StudyReport& r, const std::string& setting, bool naive = false) {
  std::vector<double> out;
  for (const auto& rec : r.records) {
    if (rec.setting != setting || !rec.null_true) continue;
    const double p = naive ? rec.p_naive : rec.p_selective;
    if (!std::isnan(p)) out.push_back(p);
  }
  return out;
}

double rejection_rate(const std::vector<double>& p, double alpha = 0.05) {
  if (p.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto k = std::count_if(p.begin(), p.end(), [&](double v) { return v < alpha; });
  return static_cast<double>(k) / static_cast<double>(p.size());
}

std::string conditional_setting(Provenance p, ShrinkageMode m = ShrinkageMode::Working,
                                KappaVariant k = KappaVariant::Classical) {
  return "conditional/" + to_string(p) + "/" + to_string(m) + "/" + to_string(k);
}

std::string marginal_setting(Provenance p) { return "marginal/" + to_string(p); }

// One lmm51 study at SNR 4 serves criteria 4 and 5.
const StudyReport& lmm51_study() {
  static const StudyReport report = [] {
    SimDesign d;
    d.design_id = "lmm51";
    d.snr = 4.0;
    d.replicates = 1000;
    d.samples = 200;
    d.plugins = {Provenance::Truth, Provenance::ModelEstimate, Provenance::ICM, Provenance::VarY};
    d.perspectives = {Perspective::Marginal, Perspective::Conditional};
    d.workers = workers();
    return run_study(d);
  }();
  return report;
}

Verdict criterion4() {
  Verdict v;
  const StudyReport& r = lmm51_study();
  v.detail << " " << r.conditioned << " conditioned of " << r.attempted << " replicates, B = "
           << r.design.samples << ", Truth plug-in;";
  v.require(r.conditioned >= 100, "at least 100 conditioned replicates");
  const auto pools = r.summary();
  for (const auto& setting : {marginal_setting(Provenance::Truth),
                              conditional_setting(Provenance::Truth)}) {
    const PoolSummary* noise = find_pool(pools, setting, "noise");
    const PoolSummary* x1 = find_pool(pools, setting, "x1");
    const PoolSummary* x2 = find_pool(pools, setting, "x2");
    if (!noise || !x1 || !x2) {
      v.require(false, setting + " pools present");
      continue;
    }
    v.detail << " " << setting << ": noise n=" << noise->count << " KS p " << fmt(noise->ks_p, 3)
             << " (naive " << fmt(noise->naive_ks_p, 3) << "), power x1 "
             << fmt(x1->rejection_rate, 3) << " x2 " << fmt(x2->rejection_rate, 3) << ";";
    v.require(noise->ks_p > 0.01, setting + " null selective p-values uniform");
    v.require(noise->naive_ks_p < 0.01, setting + " naive p-values non-uniform");
    v.require(x1->rejection_rate >= 0.8, setting + " power x1 >= 0.8");
    v.require(x2->rejection_rate >= 0.8, setting + " power x2 >= 0.8");
  }
  return v;
}

Verdict criterion5() {
  Verdict v;
  const StudyReport& r = lmm51_study();
  v.detail << " null pool = noise and true-target records, alpha = 0.05;";
  for (bool marginal : {true, false}) {
    auto setting = [&](Provenance p) {
      return marginal ? marginal_setting(p) : conditional_setting(p);
    };
    const double truth = rejection_rate(null_pool(r, setting(Provenance::Truth)));
    const double est = rejection_rate(null_pool(r, setting(Provenance::ModelEstimate)));
    const double icm = rejection_rate(null_pool(r, setting(Provenance::ICM)));
    const double vary = rejection_rate(null_pool(r, setting(Provenance::VarY)));
    const std::string name = marginal ? "marginal" : "conditional";
    v.detail << " " << name << ": Truth " << fmt(truth, 3) << ", ModelEstimate " << fmt(est, 3)
             << ", ICM " << fmt(icm, 3) << ", VarY " << fmt(vary, 3) << ";";
    v.require(std::abs(truth - 0.05) <= 0.02, name + " rate(Truth) = 0.05 +- 0.02");
    v.require(icm <= est + 0.02, name + " rate(ICM) <= rate(ModelEstimate) + 0.02");
    v.require(vary <= est + 0.02, name + " rate(VarY) <= rate(ModelEstimate) + 0.02");
  }
  return v;
}

Verdict criterion6() {
  Verdict v;
  SimDesign d;
  d.design_id = "am52";
  d.sigma2 = 1.0;
  d.replicates = 200;
  d.samples = 200;
  d.plugins = {Provenance::Truth};
  d.perspectives = {Perspective::Conditional};
  d.kappas = {KappaVariant::Classical, KappaVariant::Bayesian};
  d.workers = workers();
  const StudyReport r = run_study(d);
  const auto pools = r.summary();
  const std::string classical = conditional_setting(Provenance::Truth);
  const std::string bayes = conditional_setting(Provenance::Truth, ShrinkageMode::Working,
                                                KappaVariant::Bayesian);
  v.detail << " " << r.conditioned << " replicates, B = " << d.samples << ", Truth plug-in;";
  for (const char* cls : {"noise", "f1(0)", "f2(0)"}) {
    const PoolSummary* p = find_pool(pools, classical, cls);
    if (!p) {
      v.require(false, std::string("classical pool ") + cls);
      continue;
    }
    v.detail << " classical " << cls << " n=" << p->count << " KS p " << fmt(p->ks_p, 3) << ";";
    v.require(p->ks_p > 0.01, std::string("classical kappa uniform at ") + cls);
  }
  const PoolSummary* f1 = find_pool(pools, classical, "f1(-1)");
  const PoolSummary* f2 = find_pool(pools, classical, "f2(-1)");
  if (f1 && f2) {
    v.detail << " power f1(-1) " << fmt(f1->rejection_rate, 3) << " vs f2(-1) "
             << fmt(f2->rejection_rate, 3) << ";";
    v.require(f1->rejection_rate >= f2->rejection_rate, "power at f1(-1) >= power at f2(-1)");
  } else {
    v.require(false, "pools at -1 present");
  }
  for (const char* cls : {"f1(0)", "f2(0)"}) {
    const PoolSummary* p = find_pool(pools, bayes, cls);
    if (!p) {
      v.require(false, std::string("Bayesian pool ") + cls);
      continue;
    }
    v.detail << " Bayesian " << cls << " one-sided KS p " << fmt(p->ks_upper_p, 3) << ";";
    v.require(p->ks_upper_p > 0.01, std::string("Bayesian kappa not anti-conservative at ") + cls);
  }
  return v;
}

Verdict criterion7() {
  Verdict v;
  SimDesign d;
  d.design_id = "lmm51";
  d.snr = 4.0;
  d.low_signal = true;
  d.condition_on_supmodel = false;
  d.replicates = 500;
  d.samples = 200;
  d.plugins = {Provenance::ModelEstimate};
  d.perspectives = {Perspective::Conditional};
  d.shrinkage = {ShrinkageMode::Working, ShrinkageMode::Unpenalized};
  d.workers = workers();
  const StudyReport r = run_study(d);
  const auto pools = r.summary();
  v.detail << " low-signal variant, " << r.conditioned << " replicates, ModelEstimate plug-in;";
  const std::string working = conditional_setting(Provenance::ModelEstimate, ShrinkageMode::Working);
  const std::string zero = conditional_setting(Provenance::ModelEstimate, ShrinkageMode::Unpenalized);
  for (const auto& [name, setting] : {std::pair{"G-hat working", working}, {"0 working", zero}}) {
    const auto pool = null_pool(r, setting);
    const KsResult ks = ks_uniform(pool);
    v.detail << " " << name << " null n=" << pool.size() << " KS p " << fmt(ks.p_value, 3) << ";";
    v.require(ks.p_value > 0.01, std::string(name) + " null p-values uniform");
  }
  double worst = 0.0;
  for (const char* cls : {"x1", "x2", "x3"}) {
    const PoolSummary* a = find_pool(pools, working, cls);
    const PoolSummary* b = find_pool(pools, zero, cls);
    if (!a || !b) continue;
    v.detail << " power " << cls << " " << fmt(a->rejection_rate, 3) << " vs "
             << fmt(b->rejection_rate, 3) << ";";
    worst = std::max(worst, std::abs(a->rejection_rate - b->rejection_rate));
  }
  v.require(worst < 0.1, "power difference below 0.1");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  const std::vector<std::pair<int, std::function<Verdict()>>> all = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
  bool ok = true;
  for (const auto& [id, run] : all) {
    if (!wanted.empty() && wanted.count(id) == 0) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " [error: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s (%.0f s)%s\n", id, v.pass ? "PASS" : "FAIL", secs,
                v.detail.str().c_str());
    std::fflush(stdout);
    ok = ok && v.pass;
  }
  return ok ? 0 : 1;
}
