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

#include "selinf/simharness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "selinf/engine.hpp"
#include "selinf/error.hpp"
#include "selinf/parallel.hpp"
#include "selinf/rng.hpp"
#include "selinf/selection.hpp"
#include "selinf/splines.hpp"
#include "selinf/stats.hpp"

namespace selinf {

namespace {

constexpr Index kGroups = 30;
constexpr Index kPerGroup = 5;

double sample_sd(const VectorXd& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace

Lmm51Data generate_lmm51(std::uint64_t seed, const Lmm51Options& options) {
  if (!(options.snr > 0.0)) {
    throw ConfigError("SNR must be positive");
  }
  const Index n = kGroups * kPerGroup;
  CounterRng design_rng(options.design_seed ? *options.design_seed : seed);
  CounterRng noise_rng(options.design_seed ? seed : mix64(seed ^ 0x5bd1e995ULL));

  Lmm51Data out;
  MatrixXd x(n, 7);
  x.col(0).setOnes();
  for (Index k = 1; k <= 6; ++k) {
    for (Index i = 0; i < n; ++i) x(i, k) = design_rng.normal();
  }
  out.beta = VectorXd::Zero(7);
  if (options.low_signal) {
    out.beta.head(4) << 1.0, 0.5, 0.25, -0.5;
  } else {
    out.beta.head(4) << 1.0, 2.0, -1.0, -2.0;
  }

  MatrixXd g0(2, 2);
  g0 << 4.0, 0.5 * 2.0 * std::sqrt(2.0), 0.5 * 2.0 * std::sqrt(2.0), 2.0;
  const Eigen::LLT<MatrixXd> g_llt(g0);
  out.b.resize(2 * kGroups);
  for (Index j = 0; j < kGroups; ++j) {
    Eigen::Vector2d e(design_rng.normal(), design_rng.normal());
    out.b.segment(2 * j, 2) = g_llt.matrixL() * e;
  }

  ModelSpec& m = out.full;
  m.id = "lmm51";
  m.fixed_design = x;
  m.fixed_labels = {"(Intercept)", "x1", "x2", "x3", "x4", "x5", "x6"};
  std::vector<int> group(static_cast<std::size_t>(n));
  MatrixXd zdesign(n, 2);
  for (Index i = 0; i < n; ++i) {
    group[static_cast<std::size_t>(i)] = static_cast<int>(i / kPerGroup);
    zdesign(i, 0) = 1.0;
    zdesign(i, 1) = x(i, 2);
  }
  m.random_design = MatrixXd::Zero(n, 0);
  add_grouped_ranef(m, "(1+x2|g)", group, kGroups, zdesign, RanefCov::Unstructured);
  m.validate();

  out.eta = x * out.beta + m.random_design * out.b;
  out.sigma = sample_sd(out.eta) / options.snr;
  out.y = out.eta;
  for (Index i = 0; i < n; ++i) out.y(i) += out.sigma * noise_rng.normal();

  out.truth.error = ErrorCovariance::spherical(n, out.sigma * out.sigma);
  out.truth.block_cov = {g0};
  out.truth.ranef = assemble_ranef_covariance(m, out.truth.block_cov);
  out.truth.provenance = Provenance::Truth;
  return out;
}

double f1_true(double z) { return -std::tanh(z); }
double f2_true(double z) { return std::sin(3.0 * z); }

Am52Data generate_am52(std::uint64_t seed, double sigma2, Index d, Index n) {
  if (!(sigma2 > 0.0)) {
    throw ConfigError("sigma^2 must be positive");
  }
  if (n < 4 || n % 2 != 0) {
    throw ConfigError("the antithetic design needs an even n >= 4");
  }
  CounterRng rng(seed);
  Am52Data out;
  out.sigma2 = sigma2;
  const Index half = n / 2;
  out.z.resize(n, 4);
  for (Index k = 0; k < 4; ++k) {
    for (Index i = 0; i < half; ++i) {
      out.z(i, k) = rng.normal();
      out.z(half + i, k) = -out.z(i, k);
    }
  }
  out.mean.resize(n);
  out.y.resize(n);
  const double sigma = std::sqrt(sigma2);
  for (Index i = 0; i < n; ++i) {
    out.mean(i) = 1.0 + f1_true(out.z(i, 0)) + f2_true(out.z(i, 1));
    out.y(i) = out.mean(i) + sigma * rng.normal();
  }

  auto term = [&](int k, bool smooth) {
    const std::string var = "z" + std::to_string(k + 1);
    const VectorXd col = out.z.col(k);
    return smooth ? AdditiveTerm::smooth("s(" + var + ")", col, d)
                  : AdditiveTerm::linear(var, col);
  };
  const std::vector<std::pair<std::string, std::set<int>>> layout = {
      {"linear", {}},
      {"s(z1)", {0}},
      {"s(z3)", {2}},
      {"s(z1)+s(z2)", {0, 1}},
      {"s(z1)+s(z3)", {0, 2}},
  };
  for (const auto& [id, smooth] : layout) {
    std::vector<AdditiveTerm> terms;
    for (int k = 0; k < 4; ++k) terms.push_back(term(k, smooth.count(k) > 0));
    out.candidates.push_back(build_additive_model(id, terms));
  }
  return out;
}

std::string to_string(Perspective p) {
  return p == Perspective::Marginal ? "marginal" : "conditional";
}

Perspective perspective_from_string(const std::string& s) {
  if (s == "marginal") return Perspective::Marginal;
  if (s == "conditional") return Perspective::Conditional;
  throw ConfigError("unknown perspective '" + s + "'");
}

void SimDesign::validate() const {
  if (design_id != "lmm51" && design_id != "am52") {
    throw ConfigError("unknown design '" + design_id + "' (expected lmm51 or am52)");
  }
  if (design_id == "lmm51" && !allow_extension && snr != 2.0 && snr != 4.0) {
    throw ConfigError("SNR must be 2 or 4");
  }
  if (design_id == "am52" && !allow_extension && sigma2 != 1.0 && sigma2 != 10.0) {
    throw ConfigError("sigma^2 must be 1 or 10");
  }
  if (!(snr > 0.0) || !(sigma2 > 0.0)) {
    throw ConfigError("noise parameters must be positive");
  }
  if (replicates == 0 || samples == 0 || max_attempt_factor == 0) {
    throw ConfigError("replicates, samples and the attempt factor must be positive");
  }
  if (plugins.empty() || perspectives.empty() || shrinkage.empty() || kappas.empty()) {
    throw ConfigError("every setting list needs at least one entry");
  }
  if (design_id == "am52" &&
      std::find(perspectives.begin(), perspectives.end(), Perspective::Conditional) ==
          perspectives.end()) {
    throw ConfigError("the additive design only supports the conditional perspective");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1)");
  }
  if (!(proposal_scale > 0.0)) {
    throw ConfigError("proposal scale must be positive");
  }
}

namespace {

struct ReplicateResult {
  bool conditioned = false;
  bool failed = false;
  std::vector<StudyRecord> records;
};

struct Target {
  std::string term;
  std::string term_class;
  bool null_true = false;
  double rho0 = 0.0;
};

/// Evaluates a set of targets that share one test direction (and hence one
/// congruency set); directions differ only in kappa across `variants`.
void evaluate_targets(const std::vector<TestDirection>& variants,
                      const std::vector<std::string>& settings,
                      const std::vector<Target>& targets, const SelectionProcedure& proc,
                      const VectorXd& y, const SelectionOutcome& observed,
                      const SimDesign& design, std::uint64_t seed, std::size_t replicate,
                      std::vector<StudyRecord>& out) {
  double kmax = 0.0;
  for (const auto& v : variants) kmax = std::max(kmax, v.kappa);
  const TestDirection& dir = variants.front();
  const double t_obs = dir.statistic(y);
  const ProposalSpec proposal =
      ProposalSpec::obs_centered(t_obs, kmax * design.proposal_scale, seed);
  const CongruencySet set =
      sample_congruency(dir, proc, y, proposal, design.samples, 1, &observed);
  EngineOptions eo;
  eo.samples = design.samples;
  eo.min_congruent = design.min_congruent;
  eo.alpha = design.alpha;
  eo.compute_ci = false;
  for (std::size_t k = 0; k < variants.size(); ++k) {
    for (const auto& t : targets) {
      StudyRecord r;
      r.setting = settings[k];
      r.term = t.term;
      r.term_class = t.term_class;
      r.replicate = replicate;
      r.null_true = t.null_true;
      r.rho0 = t.rho0;
      r.n_congruent = set.n_congruent();
      try {
        const InferenceResult ir = infer_scalar(set, variants[k].kappa, t.rho0, eo);
        r.p_naive = ir.p_naive;
        r.p_selective = ir.p_value;
      } catch (const LowCongruencyError&) {
        const double z = std::abs(t_obs - t.rho0) / std::sqrt(variants[k].kappa);
        r.p_naive = std::erfc(z / std::sqrt(2.0));
        r.p_selective = std::numeric_limits<double>::quiet_NaN();
      }
      out.push_back(std::move(r));
    }
  }
}

ModelSpec keep_fixed_terms(const ModelSpec& full, const std::vector<std::string>& keep) {
  ModelSpec m = full;
  for (const auto& t : full.fixed_terms()) {
    if (std::find(keep.begin(), keep.end(), t) == keep.end()) m = m.without_fixed_term(t);
  }
  m.id = full.id + "[selected]";
  return m;
}

double sample_variance(const VectorXd& y) {
  const double s = sample_sd(y);
  return s * s;
}

/// Plug-in covariance used by a perspective. Var(Y) replaces R only in the
/// conditional perspective; the working G then comes from the model fit.
CovarianceModel perspective_cov(Provenance kind, Perspective persp, const ModelSpec& selected,
                                const CovarianceModel* truth, const VectorXd& y,
                                const CovarianceModel* estimate) {
  if (persp == Perspective::Conditional && kind == Provenance::VarY) {
    CovarianceModel c = *estimate;
    c.error = ErrorCovariance::spherical(y.size(), sample_variance(y));
    c.provenance = Provenance::VarY;
    return c;
  }
  if (kind == Provenance::ModelEstimate) return *estimate;
  PluginContext ctx;
  ctx.selected = &selected;
  ctx.truth = truth;
  ctx.y = y;
  return plugin_covariance(kind, ctx);
}

std::string setting_name(Perspective persp, Provenance plugin, ShrinkageMode mode,
                         KappaVariant kappa) {
  std::string s = to_string(persp) + "/" + to_string(plugin);
  if (persp == Perspective::Conditional) {
    s += "/" + to_string(mode) + "/" + to_string(kappa);
  }
  return s;
}

SelectionProcedure lmm51_procedure(const Lmm51Data& data, double alpha) {
  BackwardOptions bo;
  bo.alpha = alpha;
  bo.policy = CovariancePolicy::Fixed;
  bo.cov = data.truth;
  return backward_pvalue(data.full, bo);
}

ReplicateResult lmm51_replicate(const SimDesign& design, const Lmm51Options& gen,
                                const SelectionProcedure* shared, std::size_t attempt) {
  ReplicateResult res;
  const std::uint64_t rseed = substream(design.seed, attempt);
  const Lmm51Data data = generate_lmm51(rseed, gen);
  const SelectionProcedure proc = shared ? *shared : lmm51_procedure(data, design.alpha);
  const SelectionOutcome observed = proc(data.y);
  if (observed.flagged) {
    res.failed = true;
    return res;
  }
  const auto& fs = observed.fixed_set;
  const bool nested = std::all_of(data.signal_terms.begin(), data.signal_terms.end(),
                                  [&](const std::string& t) {
                                    return std::find(fs.begin(), fs.end(), t) != fs.end();
                                  });
  if (design.condition_on_supmodel && !nested) return res;
  res.conditioned = true;

  const ModelSpec selected = keep_fixed_terms(data.full, fs);
  std::optional<CovarianceModel> estimate;
  const bool need_estimate =
      std::find(design.plugins.begin(), design.plugins.end(), Provenance::ModelEstimate) !=
          design.plugins.end() ||
      (std::find(design.plugins.begin(), design.plugins.end(), Provenance::VarY) !=
           design.plugins.end() &&
       std::find(design.perspectives.begin(), design.perspectives.end(),
                 Perspective::Conditional) != design.perspectives.end());
  if (need_estimate) estimate = fit_reml(selected, data.y);

  std::uint64_t target_index = 0;
  for (Provenance plugin : design.plugins) {
    for (Perspective persp : design.perspectives) {
      const CovarianceModel cov = perspective_cov(plugin, persp, selected, &data.truth, data.y,
                                                  estimate ? &*estimate : nullptr);
      for (const auto& term : fs) {
        if (term == "(Intercept)") continue;
        const Index col = static_cast<Index>(
            std::find(data.full.fixed_labels.begin(), data.full.fixed_labels.end(), term) -
            data.full.fixed_labels.begin());
        const bool signal = data.beta(col) != 0.0;
        std::vector<Target> targets;
        targets.push_back({term, signal ? term : "noise", !signal, 0.0});
        if (signal) targets.push_back({term + "@truth", "signal@truth", true, data.beta(col)});

        const std::uint64_t sseed = substream(rseed, 1000 + target_index++);
        if (persp == Perspective::Marginal) {
          const TestDirection dir = lm_marginal(selected, cov, term, design.use_gls);
          evaluate_targets({dir}, {setting_name(persp, plugin, ShrinkageMode::Working,
                                                KappaVariant::Classical)},
                           targets, proc, data.y, observed, design, sseed, attempt, res.records);
          continue;
        }
        for (ShrinkageMode mode : design.shrinkage) {
          std::vector<TestDirection> variants;
          std::vector<std::string> names;
          for (KappaVariant kv : design.kappas) {
            variants.push_back(conditional_coefficient(selected, cov, term, kv, mode));
            names.push_back(setting_name(persp, plugin, mode, kv));
          }
          // the conditional target is v' eta, which differs from beta under shrinkage
          if (signal) targets[1].rho0 = variants.front().v.dot(data.eta);
          evaluate_targets(variants, names, targets, proc, data.y, observed, design,
                           substream(sseed, static_cast<std::uint64_t>(mode)), attempt,
                           res.records);
        }
      }
    }
  }
  return res;
}

ReplicateResult am52_replicate(const SimDesign& design, std::size_t replicate) {
  ReplicateResult res;
  const std::uint64_t rseed = substream(design.seed, replicate);
  const Am52Data data = generate_am52(rseed, design.sigma2, design.spline_d);
  const SelectionProcedure proc = caic_select(data.candidates);
  const SelectionOutcome observed = proc(data.y);
  if (observed.flagged) {
    res.failed = true;
    return res;
  }
  res.conditioned = true;
  const ModelSpec* winner = nullptr;
  for (const auto& c : data.candidates) {
    if (c.id == observed.winner) winner = &c;
  }
  if (winner == nullptr) {
    throw Error("selected candidate '" + observed.winner + "' not found");
  }
  const CovarianceModel estimate = fit_reml(*winner, data.y);
  const Index n = data.y.size();

  std::uint64_t target_index = 0;
  for (Provenance plugin : design.plugins) {
    CovarianceModel cov = estimate;
    cov.provenance = plugin;
    if (plugin == Provenance::Truth) {
      cov.error = ErrorCovariance::spherical(n, data.sigma2);
    } else if (plugin == Provenance::VarY) {
      cov.error = ErrorCovariance::spherical(n, sample_variance(data.y));
    } else if (plugin == Provenance::ICM) {
      PluginContext ctx;
      ctx.selected = winner;
      ctx.y = data.y;
      cov.error = plugin_covariance(Provenance::ICM, ctx).error;
    }

    struct Job {
      std::string term;
      bool smooth;
      double z;
      Target target;
    };
    std::vector<Job> jobs;
    for (int k = 1; k <= 2; ++k) {
      const std::string term = "s(z" + std::to_string(k) + ")";
      if (winner->smooth(term) == nullptr) continue;
      const std::string f = "f" + std::to_string(k);
      jobs.push_back({term, true, 0.0, {f + "(0)", f + "(0)", true, 0.0}});
      jobs.push_back({term, true, -1.0, {f + "(-1)", f + "(-1)", false, 0.0}});
    }
    for (int k = 3; k <= 4; ++k) {
      const std::string term = "z" + std::to_string(k);
      if (!winner->has_fixed_term(term)) continue;
      jobs.push_back({term, false, 0.0, {term, "noise", true, 0.0}});
    }

    for (const auto& job : jobs) {
      const std::uint64_t sseed = substream(rseed, 1000 + target_index++);
      for (ShrinkageMode mode : design.shrinkage) {
        std::vector<TestDirection> variants;
        std::vector<std::string> names;
        for (KappaVariant kv : design.kappas) {
          names.push_back(setting_name(Perspective::Conditional, plugin, mode, kv));
        }
        try {
          for (KappaVariant kv : design.kappas) {
            variants.push_back(job.smooth
                                   ? spline_pointwise(*winner, cov, job.term, job.z, kv, mode)
                                   : conditional_coefficient(*winner, cov, job.term, kv, mode));
          }
        } catch (const NumericalError&) {
          // e.g. a smooth shrunk to its centered linear part is identically
          // zero at the symmetry point, so there is nothing to test
          for (const auto& name : names) {
            StudyRecord rec;
            rec.setting = name;
            rec.term = job.target.term;
            rec.term_class = job.target.term_class;
            rec.replicate = replicate;
            rec.null_true = job.target.null_true;
            rec.rho0 = job.target.rho0;
            rec.p_naive = std::numeric_limits<double>::quiet_NaN();
            rec.p_selective = std::numeric_limits<double>::quiet_NaN();
            res.records.push_back(rec);
          }
          continue;
        }
        evaluate_targets(variants, names, {job.target}, proc, data.y, observed, design,
                         substream(sseed, static_cast<std::uint64_t>(mode)), replicate,
                         res.records);
      }
    }
  }
  return res;
}

}  // namespace

StudyReport run_study(const SimDesign& design) {
  design.validate();
  StudyReport report;
  report.design = design;
  const bool lmm = design.design_id == "lmm51";

  Lmm51Options gen;
  gen.snr = design.snr;
  gen.low_signal = design.low_signal;
  std::optional<SelectionProcedure> shared;
  if (lmm && design.fixed_design) {
    // covariates and random effects are shared by all replicates, and so is
    // the selection procedure with its caches
    gen.design_seed = substream(design.seed, 0xd35160ULL);
    shared = lmm51_procedure(generate_lmm51(0, gen), design.alpha);
  }

  const std::size_t limit = lmm ? design.replicates * design.max_attempt_factor
                                : design.replicates;
  const std::size_t chunk = std::max<std::size_t>(8, 4 * static_cast<std::size_t>(design.workers));
  std::size_t next = 0;
  while (report.conditioned < design.replicates && next < limit) {
    const std::size_t count = std::min(chunk, limit - next);
    std::vector<ReplicateResult> batch(count);
    parallel_for(count, design.workers, [&](std::size_t i) {
      batch[i] = lmm ? lmm51_replicate(design, gen, shared ? &*shared : nullptr, next + i)
                     : am52_replicate(design, next + i);
    });
    for (auto& r : batch) {
      if (report.conditioned >= design.replicates) break;
      ++report.attempted;
      if (r.failed) ++report.failed;
      if (!r.conditioned) continue;
      ++report.conditioned;
      for (auto& rec : r.records) report.records.push_back(std::move(rec));
    }
    next += count;
  }
  if (report.conditioned < design.replicates) {
    throw NumericalError("only " + std::to_string(report.conditioned) + " of " +
                         std::to_string(design.replicates) + " replicates met the conditioning after " +
                         std::to_string(report.attempted) + " attempts");
  }
  return report;
}

std::vector<double> StudyReport::pooled(const std::string& setting, const std::string& term_class,
                                        bool naive) const {
  std::vector<double> out;
  for (const auto& r : records) {
    if (r.setting != setting || r.term_class != term_class) continue;
    const double p = naive ? r.p_naive : r.p_selective;
    if (std::isnan(p)) continue;
    out.push_back(p);
  }
  return out;
}

std::vector<PoolSummary> StudyReport::summary() const {
  std::map<std::pair<std::string, std::string>, PoolSummary> pools;
  for (const auto& r : records) {
    auto& s = pools[{r.setting, r.term_class}];
    s.setting = r.setting;
    s.term_class = r.term_class;
    s.null_true = r.null_true;
    if (std::isnan(r.p_selective)) ++s.dropped;
  }
  std::vector<PoolSummary> out;
  for (auto& [key, s] : pools) {
    const auto sel = pooled(key.first, key.second, false);
    const auto naive = pooled(key.first, key.second, true);
    s.count = sel.size();
    if (!sel.empty()) {
      const auto rej = std::count_if(sel.begin(), sel.end(),
                                     [&](double p) { return p < design.alpha; });
      s.rejection_rate = static_cast<double>(rej) / static_cast<double>(sel.size());
      const KsResult ks = ks_uniform(sel);
      s.ks_statistic = ks.statistic;
      s.ks_p = ks.p_value;
      s.ks_upper_p = ks_uniform_upper(sel).p_value;
    }
    if (!naive.empty()) {
      const auto rej = std::count_if(naive.begin(), naive.end(),
                                     [&](double p) { return p < design.alpha; });
      s.naive_rejection_rate = static_cast<double>(rej) / static_cast<double>(naive.size());
      s.naive_ks_p = ks_uniform(naive).p_value;
    }
    out.push_back(s);
  }
  return out;
}

namespace {

std::string format_p(double p) {
  if (std::isnan(p)) return "NA";
  std::ostringstream os;
  os << std::setprecision(17) << p;
  return os.str();
}

}  // namespace

std::string StudyReport::to_csv() const {
  std::ostringstream os;
  os << "setting,term,replicate,p_naive,p_selective,power_flag\n";
  for (const auto& r : records) {
    const bool flag = !std::isnan(r.p_selective) && r.p_selective < design.alpha;
    os << r.setting << ',' << r.term << ',' << r.replicate << ',' << format_p(r.p_naive) << ','
       << format_p(r.p_selective) << ',' << (flag ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string StudyReport::to_json() const {
  nlohmann::ordered_json j;
  auto& d = j["design"];
  d["design_id"] = design.design_id;
  if (design.design_id == "lmm51") {
    d["snr"] = design.snr;
    d["low_signal"] = design.low_signal;
    d["condition_on_supmodel"] = design.condition_on_supmodel;
    d["fixed_design"] = design.fixed_design;
  } else {
    d["sigma2"] = design.sigma2;
    d["spline_d"] = design.spline_d;
  }
  d["replicates"] = design.replicates;
  d["samples"] = design.samples;
  d["alpha"] = design.alpha;
  d["seed"] = design.seed;
  d["proposal_scale"] = design.proposal_scale;
  j["attempted"] = attempted;
  j["conditioned"] = conditioned;
  j["failed"] = failed;
  auto& pools = j["pools"];
  pools = nlohmann::ordered_json::array();
  for (const auto& s : summary()) {
    nlohmann::ordered_json p;
    p["setting"] = s.setting;
    p["term_class"] = s.term_class;
    p["null_true"] = s.null_true;
    p["count"] = s.count;
    p["dropped"] = s.dropped;
    p["rejection_rate"] = s.rejection_rate;
    p["naive_rejection_rate"] = s.naive_rejection_rate;
    p["ks_statistic"] = s.ks_statistic;
    p["ks_p"] = s.ks_p;
    p["ks_upper_p"] = s.ks_upper_p;
    p["naive_ks_p"] = s.naive_ks_p;
    pools.push_back(std::move(p));
  }
  return j.dump(2) + "\n";
}

}  // namespace selinf
