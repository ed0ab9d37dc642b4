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

#include "selinf/engine.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "selinf/error.hpp"
#include "selinf/parallel.hpp"
#include "selinf/rng.hpp"

namespace selinf {

namespace {

const boost::math::normal_distribution<double> kStdNormal;

double upper_tail(double z) { return boost::math::cdf(boost::math::complement(kStdNormal, z)); }
double lower_tail(double z) { return boost::math::cdf(kStdNormal, z); }

/// P(lo < Z < hi) for a standard normal, accurate in both tails.
double normal_mass(double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  if (lo >= 0.0) return upper_tail(lo) - upper_tail(hi);
  return lower_tail(hi) - lower_tail(lo);
}

double log_sum_exp(const double* v, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

}  // namespace

std::string to_string(Alternative a) {
  switch (a) {
    case Alternative::Greater:
      return "greater";
    case Alternative::Less:
      return "less";
    case Alternative::TwoSided:
      return "two-sided";
  }
  return "two-sided";
}

Alternative alternative_from_string(const std::string& s) {
  if (s == "greater") return Alternative::Greater;
  if (s == "less") return Alternative::Less;
  if (s == "two-sided" || s == "two_sided") return Alternative::TwoSided;
  throw ConfigError("unknown alternative '" + s + "'");
}

std::string to_string(ProposalSpec::Kind k) {
  switch (k) {
    case ProposalSpec::Kind::NullCentered:
      return "null";
    case ProposalSpec::Kind::ObsCentered:
      return "observed";
    case ProposalSpec::Kind::Mixture:
      return "mixture";
    case ProposalSpec::Kind::Custom:
      return "custom";
  }
  return "custom";
}

// ---------------------------------------------------------------------------
// Proposals

ProposalSpec ProposalSpec::null_centered(double rho0, double kappa, std::uint64_t seed) {
  return ProposalSpec{Kind::NullCentered, {{rho0, kappa, 1.0}}, false, seed};
}

ProposalSpec ProposalSpec::obs_centered(double t_obs, double variance, std::uint64_t seed) {
  return ProposalSpec{Kind::ObsCentered, {{t_obs, variance, 1.0}}, false, seed};
}

ProposalSpec ProposalSpec::mixture_preset(double t_obs, double kappa, std::uint64_t seed) {
  ProposalSpec p{Kind::Mixture, {}, false, seed};
  for (int k = 0; k < 4; ++k) {
    p.components.push_back({t_obs * static_cast<double>(k) / 3.0, kappa, 0.25});
  }
  return p;
}

ProposalSpec ProposalSpec::group_default(double t_obs, double scale, Index dof,
                                         std::uint64_t seed) {
  const double mode = scale * std::sqrt(std::max<double>(static_cast<double>(dof) - 1.0, 0.0));
  const double var = scale * scale;
  return ProposalSpec{Kind::Custom, {{t_obs, var, 0.5}, {mode, var, 0.5}}, true, seed};
}

void ProposalSpec::validate() const {
  if (components.empty()) {
    throw ConfigError("proposal has no components");
  }
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.variance > 0.0) || !std::isfinite(c.variance) || !std::isfinite(c.mean)) {
      throw ConfigError("proposal variances must be positive and finite");
    }
    if (!(c.weight > 0.0)) {
      throw ConfigError("proposal weights must be positive");
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ConfigError("proposal weights must sum to one");
  }
}

double ProposalSpec::log_density(double t) const {
  if (truncate_at_zero && t < 0.0) {
    return -std::numeric_limits<double>::infinity();
  }
  std::vector<double> terms;
  terms.reserve(components.size());
  for (const auto& c : components) {
    const double sd = std::sqrt(c.variance);
    const double z = (t - c.mean) / sd;
    double lt = std::log(c.weight) - 0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
    if (truncate_at_zero) {
      lt -= std::log(upper_tail(-c.mean / sd));
    }
    terms.push_back(lt);
  }
  return log_sum_exp(terms.data(), terms.size());
}

std::vector<Draw> sample_statistics(const ProposalSpec& proposal, std::size_t count) {
  proposal.validate();
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& c : proposal.components) {
    acc += c.weight;
    cumulative.push_back(acc);
  }
  std::vector<Draw> out(count);
  for (std::size_t b = 0; b < count; ++b) {
    CounterRng rng(substream(proposal.seed_root, b));
    const double u = rng.uniform() * acc;
    int k = 0;
    while (k + 1 < static_cast<int>(cumulative.size()) && u >= cumulative[k]) ++k;
    const auto& c = proposal.components[k];
    const double sd = std::sqrt(c.variance);
    double t;
    if (proposal.truncate_at_zero) {
      t = c.mean + sd * normal_upper_quantile(rng.uniform() * upper_tail(-c.mean / sd));
      t = std::max(t, 0.0);
    } else {
      t = c.mean + sd * rng.normal();
    }
    out[b] = Draw{t, k};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Congruency

std::size_t CongruencySet::n_congruent() const {
  return static_cast<std::size_t>(std::count(congruent.begin(), congruent.end(), 1));
}

CongruencySet sample_congruency(const TestDirection& dir, const SelectionProcedure& proc,
                                const VectorXd& y_obs, const ProposalSpec& proposal,
                                std::size_t samples, unsigned workers,
                                const SelectionOutcome* conditioning) {
  if (samples == 0) {
    throw ConfigError("number of samples must be positive");
  }
  if (proposal.truncate_at_zero != (dir.kind == TestDirection::Kind::Group)) {
    throw ConfigError("group statistics need a proposal truncated at zero, scalar ones do not");
  }
  CongruencySet set;
  set.proposal = proposal;
  set.t_obs = dir.statistic(y_obs);
  set.target = proc(y_obs);
  if (conditioning != nullptr && *conditioning != set.target) {
    throw ConfigError("selection on the observed response differs from the conditioning outcome");
  }
  set.draws = sample_statistics(proposal, samples);
  set.log_q.resize(samples);
  set.congruent.assign(samples, 0);
  const VectorXd zeta = dir.orthogonal(y_obs);
  const VectorXd unit = dir.group_unit(y_obs);
  parallel_for(samples, workers, [&](std::size_t b) {
    const double t = set.draws[b].t;
    set.log_q[b] = proposal.log_density(t);
    const VectorXd yb = dir.rebuild(zeta, unit, t);
    set.congruent[b] = proc(yb) == set.target ? 1 : 0;
  });
  return set;
}

// ---------------------------------------------------------------------------
// Estimators

namespace {

/// Normalized weighted share above t_obs plus the ESS, for log target
/// density values `log_f` over congruent draws.
struct WeightedShare {
  double above = 0.0;
  double ess = 0.0;
};

template <class LogF>
WeightedShare weighted_share(const CongruencySet& set, LogF log_f) {
  const std::size_t n = set.draws.size();
  std::vector<double> lw;
  std::vector<unsigned char> above;
  lw.reserve(n);
  for (std::size_t b = 0; b < n; ++b) {
    if (!set.congruent[b]) continue;
    lw.push_back(log_f(set.draws[b].t) - set.log_q[b]);
    above.push_back(set.draws[b].t > set.t_obs ? 1 : 0);
  }
  WeightedShare out;
  if (lw.empty()) return out;
  const double m = *std::max_element(lw.begin(), lw.end());
  if (!std::isfinite(m)) return out;
  double total = 0.0, up = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < lw.size(); ++i) {
    const double w = std::exp(lw[i] - m);
    total += w;
    sq += w * w;
    if (above[i]) up += w;
  }
  out.above = up / total;
  out.ess = total * total / sq;
  return out;
}

std::vector<ComponentRow> component_table(const CongruencySet& set) {
  std::vector<ComponentRow> rows;
  for (const auto& c : set.proposal.components) {
    ComponentRow r;
    r.mean = c.mean;
    r.ratio = set.t_obs != 0.0 ? c.mean / set.t_obs : c.mean;
    rows.push_back(r);
  }
  for (std::size_t b = 0; b < set.draws.size(); ++b) {
    auto& r = rows[static_cast<std::size_t>(set.draws[b].component)];
    ++r.samples;
    if (set.congruent[b]) ++r.congruent;
  }
  return rows;
}

double combine(double greater, Alternative alt) {
  switch (alt) {
    case Alternative::Greater:
      return greater;
    case Alternative::Less:
      return 1.0 - greater;
    case Alternative::TwoSided:
      return std::min(1.0, 2.0 * std::min(greater, 1.0 - greater));
  }
  return greater;
}

double bisect_root(const std::function<double(double)>& f, double target, double center,
                   double sd) {
  double width = 10.0 * sd;
  for (int expand = 0; expand <= 6; ++expand, width *= 2.0) {
    double lo = center - width;
    double hi = center + width;
    if (!(f(lo) < target && f(hi) > target)) continue;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (f(mid) < target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }
  throw NumericalError("confidence bound not bracketed after expanding the search interval");
}

void fill_common(InferenceResult& r, const CongruencySet& set, const EngineOptions& options) {
  r.t_obs = set.t_obs;
  r.n_samples = set.draws.size();
  r.n_congruent = set.n_congruent();
  r.alternative = options.alternative;
  r.table = component_table(set);
  r.fingerprint = set.target.fingerprint();
  if (r.n_congruent < options.min_congruent) {
    throw LowCongruencyError(r.n_congruent, r.n_samples, options.min_congruent);
  }
}

}  // namespace

double tilted_survival(const CongruencySet& set, double kappa, double rho) {
  return weighted_share(set, [&](double t) { return -(t - rho) * (t - rho) / (2.0 * kappa); })
      .above;
}

InferenceResult infer_scalar(const CongruencySet& set, double kappa, double rho0,
                             const EngineOptions& options) {
  if (!(kappa > 0.0)) {
    throw NumericalError("null variance must be positive");
  }
  InferenceResult r;
  r.kappa = kappa;
  r.rho0 = rho0;
  fill_common(r, set, options);
  const WeightedShare s =
      weighted_share(set, [&](double t) { return -(t - rho0) * (t - rho0) / (2.0 * kappa); });
  r.ess = s.ess;
  r.low_ess = s.ess < options.ess_warning;
  r.p_value = combine(s.above, options.alternative);
  r.p_naive = combine(upper_tail((set.t_obs - rho0) / std::sqrt(kappa)), options.alternative);
  if (options.compute_ci) {
    const auto f = [&](double rho) { return tilted_survival(set, kappa, rho); };
    const double sd = std::sqrt(kappa);
    const double lo = bisect_root(f, 0.5 * options.alpha, set.t_obs, sd);
    const double hi = bisect_root(f, 1.0 - 0.5 * options.alpha, set.t_obs, sd);
    r.ci = std::make_pair(lo, hi);
  }
  return r;
}

InferenceResult infer_group(const CongruencySet& set, double scale, Index dof,
                            const EngineOptions& options) {
  if (!(scale > 0.0) || dof < 1) {
    throw NumericalError("group test needs a positive scale and at least one degree of freedom");
  }
  InferenceResult r;
  r.group = true;
  r.kappa = scale * scale;
  r.dof = dof;
  EngineOptions opt = options;
  opt.alternative = Alternative::Greater;
  fill_common(r, set, opt);
  const double w1 = static_cast<double>(dof) - 1.0;
  const double s2 = scale * scale;
  const WeightedShare s = weighted_share(set, [&](double t) {
    if (t <= 0.0) {
      return dof == 1 ? 0.0 : -std::numeric_limits<double>::infinity();
    }
    return w1 * std::log(t) - t * t / (2.0 * s2);
  });
  r.ess = s.ess;
  r.low_ess = s.ess < options.ess_warning;
  r.p_value = set.t_obs > 0.0 ? s.above : 1.0;
  r.p_naive = truncated_chi_survival(set.t_obs, scale, dof, {{0.0, INFINITY}});
  return r;
}

InferenceResult selective_pvalue(const TestDirection& dir, const SelectionProcedure& proc,
                                 const VectorXd& y_obs, const ProposalSpec& proposal,
                                 const EngineOptions& options) {
  if (dir.kind != TestDirection::Kind::Scalar) {
    throw ConfigError("selective_pvalue needs a scalar direction; use group_pvalue");
  }
  const CongruencySet set =
      sample_congruency(dir, proc, y_obs, proposal, options.samples, options.workers);
  InferenceResult r = infer_scalar(set, dir.kappa, dir.rho0, options);
  r.label = dir.label;
  return r;
}

std::pair<double, double> selective_ci(const TestDirection& dir, const SelectionProcedure& proc,
                                       const VectorXd& y_obs, const ProposalSpec& proposal,
                                       const EngineOptions& options) {
  EngineOptions opt = options;
  opt.compute_ci = true;
  return *selective_pvalue(dir, proc, y_obs, proposal, opt).ci;
}

InferenceResult group_pvalue(const TestDirection& dir, const SelectionProcedure& proc,
                             const VectorXd& y_obs, const ProposalSpec& proposal,
                             const EngineOptions& options) {
  if (dir.kind != TestDirection::Kind::Group) {
    throw ConfigError("group_pvalue needs a group direction");
  }
  const CongruencySet set =
      sample_congruency(dir, proc, y_obs, proposal, options.samples, options.workers);
  InferenceResult r = infer_group(set, dir.scale, dir.dof, options);
  r.label = dir.label;
  return r;
}

// ---------------------------------------------------------------------------

double truncated_normal_survival(double t, double rho, double kappa, const IntervalSet& set) {
  const double sd = std::sqrt(kappa);
  double num = 0.0, den = 0.0;
  for (const auto& [a, b] : set) {
    const double lo = (a - rho) / sd;
    const double hi = (b - rho) / sd;
    den += normal_mass(lo, hi);
    num += normal_mass(std::max(lo, (t - rho) / sd), hi);
  }
  if (!(den > 0.0)) {
    throw NumericalError("truncation set has zero probability");
  }
  return num / den;
}

double truncated_chi_survival(double t, double scale, Index dof, const IntervalSet& set) {
  const double a = 0.5 * static_cast<double>(dof);
  auto upper = [&](double x) {
    if (!(x > 0.0)) return 1.0;
    if (std::isinf(x)) return 0.0;
    return boost::math::gamma_q(a, 0.5 * (x / scale) * (x / scale));
  };
  double num = 0.0, den = 0.0;
  for (const auto& [lo, hi] : set) {
    if (!(hi > lo)) continue;
    den += upper(lo) - upper(hi);
    const double from = std::max(lo, t);
    if (hi > from) num += upper(from) - upper(hi);
  }
  if (!(den > 0.0)) {
    throw NumericalError("truncation set has zero probability");
  }
  return num / den;
}

}  // namespace selinf
