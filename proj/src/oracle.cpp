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

#include "selinf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "selinf/rng.hpp"

namespace selinf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Small regression whose x1 coefficient direction is the oracle statistic.
ModelSpec oracle_model(Index n, Index cols, const std::string& label, std::uint64_t seed) {
  CounterRng rng(seed);
  ModelSpec m;
  m.id = "oracle";
  m.fixed_design.resize(n, cols + 1);
  m.random_design = MatrixXd(n, 0);
  m.fixed_labels = {"(Intercept)"};
  for (Index i = 0; i < n; ++i) m.fixed_design(i, 0) = 1.0;
  for (Index j = 1; j <= cols; ++j) {
    for (Index i = 0; i < n; ++i) m.fixed_design(i, j) = rng.normal();
    m.fixed_labels.push_back(label);
  }
  return m;
}

void normalize_weights(ProposalSpec& p) {
  double total = 0.0;
  for (const auto& c : p.components) total += c.weight;
  for (auto& c : p.components) c.weight /= total;
}

bool inside(const IntervalSet& set, double t) {
  for (const auto& [a, b] : set) {
    if (t > a && t < b) return true;
  }
  return false;
}

SelectionProcedure rule_procedure(const TestDirection& dir, const IntervalSet& set) {
  return custom_procedure("interval rule", [dir, set](const VectorXd& y) {
    return make_outcome({}, {}, inside(set, dir.statistic(y)) ? "selected" : "not selected");
  });
}

/// Draws t from N(rho, kappa) restricted to the set.
double draw_inside(CounterRng& rng, double rho, double sd, const IntervalSet& set) {
  for (int k = 0; k < 100000; ++k) {
    const double t = rho + sd * rng.normal();
    if (inside(set, t)) return t;
  }
  return set.front().first + sd;
}

/// Kernel approximation of the truncated target: narrow components on a grid
/// inside the selection set, weighted by the null density `log_f`.
template <class LogF>
ProposalSpec grid_proposal(const IntervalSet& set, double lo_clip, double hi_clip, double sd,
                           LogF log_f, std::uint64_t seed) {
  ProposalSpec p;
  p.kind = ProposalSpec::Kind::Custom;
  p.seed_root = seed;
  const double h = 0.25 * sd;
  std::vector<double> centers, logw;
  for (const auto& [a, b] : set) {
    const double lo = std::max(a, lo_clip);
    const double hi = std::min(b, hi_clip);
    if (!(hi > lo)) continue;
    const int steps = std::max(1, static_cast<int>(std::ceil((hi - lo) / h)));
    const double step = (hi - lo) / steps;
    for (int k = 0; k < steps; ++k) {
      const double c = lo + (k + 0.5) * step;
      centers.push_back(c);
      logw.push_back(log_f(c) + std::log(step));
    }
  }
  const double m = *std::max_element(logw.begin(), logw.end());
  for (std::size_t k = 0; k < centers.size(); ++k) {
    p.components.push_back({centers[k], h * h, std::exp(logw[k] - m)});
  }
  normalize_weights(p);
  return p;
}

}  // namespace

double OracleCase::error() const { return std::abs(estimate - exact); }

std::vector<OracleCase> normal_oracle_suite(const OracleOptions& options) {
  const Index n = 10;
  const ModelSpec model = oracle_model(n, 2, "x", options.seed);
  ModelSpec named = model;
  named.fixed_labels = {"(Intercept)", "x1", "x2"};
  CounterRng rng(substream(options.seed, 1));
  std::vector<OracleCase> out;
  const char* rules[] = {"T > c", "a < T < b", "T < a or T > b"};
  std::uint64_t index = 0;
  for (int r = 0; r < 3; ++r) {
    for (std::size_t k = 0; k < options.configs_per_rule; ++k, ++index) {
      OracleCase c;
      c.rule = rules[r];
      const double sigma2 = 0.5 + 1.5 * rng.uniform();
      CovarianceModel cov;
      cov.error = ErrorCovariance::spherical(n, sigma2);
      const TestDirection dir = lm_marginal(named, cov, "x1", true);
      c.kappa = dir.kappa;
      const double sd = std::sqrt(c.kappa);
      c.rho = -1.0 + 2.0 * rng.uniform();
      if (r == 0) {
        c.set = {{c.rho + sd * (-1.0 + 2.0 * rng.uniform()), kInf}};
      } else if (r == 1) {
        const double a = c.rho + sd * (-1.5 + 1.5 * rng.uniform());
        c.set = {{a, a + sd * (1.0 + 1.5 * rng.uniform())}};
      } else {
        c.set = {{-kInf, c.rho + sd * (-1.5 + rng.uniform())},
                 {c.rho + sd * (0.5 + rng.uniform()), kInf}};
      }
      c.t_obs = draw_inside(rng, c.rho, sd, c.set);
      const VectorXd base = VectorXd::NullaryExpr(n, [&](Index) { return rng.normal(); });
      const VectorXd y = dir.rebuild_from(base, c.t_obs);
      const double rho = c.rho;
      const ProposalSpec prop = grid_proposal(
          c.set, rho - 6.0 * sd, rho + 6.0 * sd, sd,
          [&](double t) { return -0.5 * (t - rho) * (t - rho) / (sd * sd); },
          substream(options.seed, 100 + index));
      const CongruencySet set = sample_congruency(dir, rule_procedure(dir, c.set), y, prop,
                                                  options.samples, options.workers);
      EngineOptions eo;
      eo.alternative = Alternative::Greater;
      eo.compute_ci = false;
      eo.min_congruent = 1;
      c.estimate = infer_scalar(set, c.kappa, c.rho, eo).p_value;
      c.congruent = set.n_congruent();
      c.exact = truncated_normal_survival(c.t_obs, c.rho, c.kappa, c.set);
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<OracleCase> chi_oracle_suite(const OracleOptions& options) {
  const Index n = 14;
  CounterRng rng(substream(options.seed, 2));
  std::vector<OracleCase> out;
  std::uint64_t index = 0;
  for (Index w : {2, 3, 5}) {
    const ModelSpec model = oracle_model(n, w, "g", substream(options.seed, 10 + w));
    for (std::size_t k = 0; k < options.configs_per_rule; ++k, ++index) {
      OracleCase c;
      c.rule = "T > c";
      c.dof = w;
      const double sigma2 = 0.5 + 1.5 * rng.uniform();
      const TestDirection dir = group_direction(model, "g", sigma2 * MatrixXd::Identity(n, n));
      c.kappa = dir.scale * dir.scale;
      const double mode = dir.scale * std::sqrt(static_cast<double>(w) - 1.0);
      const double cut = mode * (0.3 + rng.uniform()) + 0.2 * dir.scale;
      c.set = {{cut, kInf}};
      // observed value from the truncated chi distribution by rejection
      double t = 0.0;
      for (int tries = 0; tries < 100000; ++tries) {
        double s = 0.0;
        for (Index j = 0; j < w; ++j) {
          const double z = rng.normal();
          s += z * z;
        }
        t = dir.scale * std::sqrt(s);
        if (t > cut) break;
      }
      c.t_obs = t;
      const VectorXd base = VectorXd::NullaryExpr(n, [&](Index) { return rng.normal(); });
      const VectorXd y = dir.rebuild_from(base, c.t_obs);
      const double s2 = c.kappa;
      ProposalSpec prop = grid_proposal(
          c.set, 0.0, mode + 7.0 * dir.scale, dir.scale,
          [&](double x) { return (static_cast<double>(w) - 1.0) * std::log(x) - 0.5 * x * x / s2; },
          substream(options.seed, 500 + index));
      prop.truncate_at_zero = true;
      const CongruencySet set = sample_congruency(dir, rule_procedure(dir, c.set), y, prop,
                                                  options.samples, options.workers);
      EngineOptions eo;
      eo.compute_ci = false;
      eo.min_congruent = 1;
      c.estimate = infer_group(set, dir.scale, w, eo).p_value;
      c.congruent = set.n_congruent();
      c.exact = truncated_chi_survival(c.t_obs, dir.scale, w, c.set);
      out.push_back(std::move(c));
    }
  }
  return out;
}

bool DualityCase::consistent() const {
  const bool reject = p_value < alpha;
  const bool outside = rho0 < lower || rho0 > upper;
  return reject == outside;
}

std::vector<DualityCase> duality_suite(std::size_t cases, std::size_t samples,
                                       std::uint64_t seed, unsigned workers) {
  const Index n = 10;
  ModelSpec model = oracle_model(n, 2, "x", seed);
  model.fixed_labels = {"(Intercept)", "x1", "x2"};
  CovarianceModel cov;
  cov.error = ErrorCovariance::spherical(n, 1.0);
  const TestDirection dir = lm_marginal(model, cov, "x1", true);
  const double sd = std::sqrt(dir.kappa);
  CounterRng rng(substream(seed, 3));
  std::vector<DualityCase> out;
  for (std::size_t k = 0; k < cases; ++k) {
    const double c = sd * (-1.0 + 2.0 * rng.uniform());
    const IntervalSet set = {{c, kInf}};
    const double t_obs = c + sd * (0.05 + 2.5 * rng.uniform());
    DualityCase d;
    // spread the null values around the observed one so both outcomes occur
    d.rho0 = t_obs + sd * (-4.0 + 6.0 * rng.uniform());
    const VectorXd base = VectorXd::NullaryExpr(n, [&](Index) { return rng.normal(); });
    const VectorXd y = dir.rebuild_from(base, t_obs);
    const ProposalSpec prop =
        ProposalSpec::obs_centered(t_obs, 6.25 * dir.kappa, substream(seed, 900 + k));
    const CongruencySet cs =
        sample_congruency(dir, rule_procedure(dir, set), y, prop, samples, workers);
    EngineOptions eo;
    eo.min_congruent = 1;
    eo.alpha = d.alpha;
    const InferenceResult r = infer_scalar(cs, dir.kappa, d.rho0, eo);
    d.p_value = r.p_value;
    d.lower = r.ci->first;
    d.upper = r.ci->second;
    out.push_back(d);
  }
  return out;
}

}  // namespace selinf
