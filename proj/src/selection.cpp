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

#include "selinf/selection.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "selinf/error.hpp"

namespace selinf {

namespace {

void append_field(std::string& out, const std::string& s) {
  out += std::to_string(s.size());
  out += ':';
  out += s;
}

double chi2_survival(double stat, Index df) {
  if (!(stat > 0.0)) {
    return 1.0;
  }
  return boost::math::gamma_q(0.5 * static_cast<double>(df), 0.5 * stat);
}

VectorXd restrict_vector(const VectorXd& y, const std::vector<bool>& mask) {
  VectorXd out(std::count(mask.begin(), mask.end(), true));
  Index k = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      out(k++) = y(static_cast<Index>(i));
    }
  }
  return out;
}

bool all_rows(const std::vector<bool>& mask) {
  return std::all_of(mask.begin(), mask.end(), [](bool b) { return b; });
}

std::vector<bool> mask_and(const std::vector<bool>& a, const std::vector<bool>& b) {
  std::vector<bool> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = a[i] && b[i];
  }
  return out;
}

SelectionOutcome outcome_for(const ModelSpec& m, bool flagged = false) {
  return make_outcome(m.fixed_terms(), m.random_terms(), m.id, flagged);
}

}  // namespace

std::string SelectionOutcome::canonical() const {
  std::string out = "A";
  for (const auto& s : fixed_set) append_field(out, s);
  out += "|B";
  for (const auto& s : ranef_set) append_field(out, s);
  out += "|W";
  append_field(out, winner);
  out += flagged ? "|F1" : "|F0";
  return out;
}

std::uint64_t SelectionOutcome::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

bool SelectionOutcome::operator==(const SelectionOutcome& o) const {
  return flagged == o.flagged && winner == o.winner && fixed_set == o.fixed_set &&
         ranef_set == o.ranef_set;
}

SelectionOutcome make_outcome(std::vector<std::string> fixed_set,
                              std::vector<std::string> ranef_set, std::string winner,
                              bool flagged) {
  std::sort(fixed_set.begin(), fixed_set.end());
  fixed_set.erase(std::unique(fixed_set.begin(), fixed_set.end()), fixed_set.end());
  std::sort(ranef_set.begin(), ranef_set.end());
  ranef_set.erase(std::unique(ranef_set.begin(), ranef_set.end()), ranef_set.end());
  return SelectionOutcome{std::move(fixed_set), std::move(ranef_set), std::move(winner), flagged};
}

SelectionProcedure custom_procedure(std::string description,
                                    std::function<SelectionOutcome(const VectorXd&)> fn) {
  return SelectionProcedure{std::move(description), {}, std::move(fn)};
}

// ---------------------------------------------------------------------------
// Backward elimination

namespace {

/// Precomputed Schur complement of the fixed-effect block for a model with
/// a covariance that does not change during elimination. For any subset S of
/// fixed columns, beta_S = S[S,S]^-1 h_S with h = H y.
struct SchurCache {
  MatrixXd schur;  ///< p x p
  MatrixXd h_op;   ///< p x n

  SchurCache(const ModelSpec& m, const CovarianceModel& cov, ShrinkageMode mode) {
    const Index p = m.p();
    const MatrixXd x = m.fixed_design;
    const MatrixXd rinv_x = cov.error.solve(x);
    MatrixXd zl = MatrixXd(m.n(), 0);
    if (m.q() > 0 && mode == ShrinkageMode::Working) {
      zl = m.random_design * psd_factor(cov.ranef);
    } else if (m.q() > 0) {
      zl = m.random_design;
    }
    const Index r = zl.cols();
    if (r == 0) {
      schur = symmetrize(x.transpose() * rinv_x);
      h_op = rinv_x.transpose();
      return;
    }
    const MatrixXd rinv_zl = cov.error.solve(zl);
    MatrixXd kuu = zl.transpose() * rinv_zl;
    if (mode == ShrinkageMode::Working) {
      kuu.diagonal().array() += 1.0;
    }
    const SpdFactor fu(symmetrize(kuu), "random-effect block");
    const MatrixXd kub = zl.transpose() * rinv_x;  // r x p
    const MatrixXd h = fu.solve(kub);               // r x p
    schur = symmetrize(x.transpose() * rinv_x - kub.transpose() * h);
    h_op = rinv_x.transpose() - h.transpose() * rinv_zl.transpose();
    (void)p;
  }
};

struct TermLayout {
  std::vector<std::string> terms;
  std::vector<std::vector<Index>> columns;
};

TermLayout layout_of(const ModelSpec& m) {
  TermLayout l;
  l.terms = m.fixed_terms();
  for (const auto& t : l.terms) {
    l.columns.push_back(m.fixed_columns(t));
  }
  return l;
}

/// Term p-values from beta and its covariance restricted to active terms.
std::vector<double> term_pvalues(const VectorXd& beta, const MatrixXd& vcov,
                                 const std::vector<std::vector<Index>>& cols) {
  std::vector<double> out;
  for (const auto& c : cols) {
    const Index k = static_cast<Index>(c.size());
    VectorXd b(k);
    MatrixXd v(k, k);
    for (Index i = 0; i < k; ++i) {
      b(i) = beta(c[i]);
      for (Index j = 0; j < k; ++j) {
        v(i, j) = vcov(c[i], c[j]);
      }
    }
    const SpdFactor f(v, "Wald covariance");
    out.push_back(chi2_survival(b.dot(f.solve(b)), k));
  }
  return out;
}

/// Wald p-values of the active terms using the Schur cache.
std::vector<double> schur_pvalues(const SchurCache& cache, const VectorXd& h,
                                  const TermLayout& layout, const std::vector<bool>& active) {
  std::vector<Index> cols;
  std::vector<std::vector<Index>> local;
  for (std::size_t t = 0; t < layout.terms.size(); ++t) {
    if (!active[t]) continue;
    std::vector<Index> lc;
    for (Index c : layout.columns[t]) {
      lc.push_back(static_cast<Index>(cols.size()));
      cols.push_back(c);
    }
    local.push_back(std::move(lc));
  }
  const Index k = static_cast<Index>(cols.size());
  MatrixXd s(k, k);
  VectorXd hs(k);
  for (Index i = 0; i < k; ++i) {
    hs(i) = h(cols[i]);
    for (Index j = 0; j < k; ++j) {
      s(i, j) = cache.schur(cols[i], cols[j]);
    }
  }
  const SpdFactor f(s, "fixed-effect Schur complement");
  const VectorXd beta = f.solve(hs);
  return term_pvalues(beta, f.inverse(), local);
}

ModelSpec submodel(const ModelSpec& full, const TermLayout& layout,
                   const std::vector<bool>& active) {
  ModelSpec m = full;
  for (std::size_t t = 0; t < layout.terms.size(); ++t) {
    if (!active[t]) {
      m = m.without_fixed_term(layout.terms[t]);
    }
  }
  return m;
}

std::string backward_id(const ModelSpec& full, const TermLayout& layout,
                        const std::vector<bool>& active) {
  std::string id = full.id + "[";
  bool first = true;
  for (std::size_t t = 0; t < layout.terms.size(); ++t) {
    if (!active[t]) continue;
    if (!first) id += ",";
    id += layout.terms[t];
    first = false;
  }
  return id + "]";
}

}  // namespace

std::vector<double> wald_pvalues(const ModelSpec& model, const CovarianceModel& cov,
                                 const VectorXd& y) {
  const FitResult fit = solve_blup(model, cov, y);
  const TermLayout layout = layout_of(model);
  return term_pvalues(fit.beta, fit.K_inv.topLeftCorner(model.p(), model.p()), layout.columns);
}

SelectionProcedure backward_pvalue(const ModelSpec& full, const BackwardOptions& options) {
  full.validate();
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
    throw ConfigError("alpha must lie in (0, 1)");
  }
  const TermLayout layout = layout_of(full);
  std::vector<bool> protect(layout.terms.size(), false);
  for (std::size_t t = 0; t < layout.terms.size(); ++t) {
    protect[t] = std::find(options.keep.begin(), options.keep.end(), layout.terms[t]) !=
                 options.keep.end();
  }
  std::shared_ptr<const SchurCache> fixed_cache;
  if (options.policy == CovariancePolicy::Fixed) {
    if (!options.cov) {
      throw ConfigError("the fixed covariance policy needs a covariance model");
    }
    fixed_cache = std::make_shared<SchurCache>(full, *options.cov, ShrinkageMode::Working);
  }
  const ModelSpec model = full;
  const BackwardOptions opt = options;

  auto run = [model, layout, protect, fixed_cache, opt](const VectorXd& y) -> SelectionOutcome {
    check_response(y, model.n());
    std::vector<bool> active(layout.terms.size(), true);
    const std::vector<std::string> ranef = model.random_terms();
    std::shared_ptr<const SchurCache> cache = fixed_cache;
    try {
      if (opt.policy == CovariancePolicy::RefitFull) {
        const CovarianceModel cov = fit_reml(model, y, opt.reml);
        cache = std::make_shared<SchurCache>(model, cov, ShrinkageMode::Working);
      }
      VectorXd h;
      if (cache) {
        h = cache->h_op * y;
      }
      while (true) {
        std::vector<double> pv;
        if (cache) {
          pv = schur_pvalues(*cache, h, layout, active);
        } else {
          const ModelSpec sub = submodel(model, layout, active);
          const CovarianceModel cov = fit_reml(sub, y, opt.reml);
          pv = wald_pvalues(sub, cov, y);
        }
        // pv is indexed by active terms in layout order
        double worst = -1.0;
        std::size_t drop = layout.terms.size();
        std::size_t k = 0;
        for (std::size_t t = 0; t < layout.terms.size(); ++t) {
          if (!active[t]) continue;
          const double p = pv[k++];
          if (!protect[t] && p > worst) {
            worst = p;
            drop = t;
          }
        }
        if (drop == layout.terms.size() || !(worst > opt.alpha)) {
          break;
        }
        active[drop] = false;
      }
    } catch (const Error&) {
      std::vector<std::string> fixed;
      for (std::size_t t = 0; t < layout.terms.size(); ++t) {
        if (active[t]) fixed.push_back(layout.terms[t]);
      }
      return make_outcome(fixed, ranef, backward_id(model, layout, active), true);
    }
    std::vector<std::string> fixed;
    for (std::size_t t = 0; t < layout.terms.size(); ++t) {
      if (active[t]) fixed.push_back(layout.terms[t]);
    }
    return make_outcome(fixed, ranef, backward_id(model, layout, active));
  };
  return SelectionProcedure{"backward elimination (alpha = " + std::to_string(options.alpha) + ")",
                            {full},
                            run};
}

// ---------------------------------------------------------------------------
// cAIC

namespace {

double candidate_caic(const RemlProblem& problem, const VectorXd& y,
                      const CovarianceModel* fixed) {
  try {
    if (fixed != nullptr) {
      return problem.caic(y, *fixed);
    }
    return problem.caic(y, problem.fit(y));
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
}

std::size_t argmin(const std::vector<double>& v) {
  std::size_t best = v.size();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i]) && (best == v.size() || v[i] < v[best])) {
      best = i;
    }
  }
  return best;
}

}  // namespace

SelectionProcedure caic_select(std::vector<ModelSpec> candidates, const CaicOptions& options) {
  if (candidates.size() < 2) {
    throw ConfigError("cAIC selection needs at least two candidates");
  }
  for (const auto& c : candidates) {
    if (c.n() != candidates.front().n()) {
      throw ConfigError("cAIC candidates must use the same rows");
    }
  }
  if (!options.estimate && options.fixed_cov.size() != candidates.size()) {
    throw ConfigError("one fixed covariance per candidate required");
  }
  auto problems = std::make_shared<std::vector<RemlProblem>>();
  for (const auto& c : candidates) {
    problems->emplace_back(c, options.reml);
  }
  auto fixed = std::make_shared<std::vector<CovarianceModel>>(options.fixed_cov);
  const bool estimate = options.estimate;
  auto run = [problems, fixed, estimate](const VectorXd& y) -> SelectionOutcome {
    std::vector<double> score(problems->size());
    for (std::size_t i = 0; i < problems->size(); ++i) {
      score[i] = candidate_caic((*problems)[i], y, estimate ? nullptr : &(*fixed)[i]);
    }
    const std::size_t best = argmin(score);
    if (best == score.size()) {
      return make_outcome({}, {}, "", true);
    }
    return outcome_for((*problems)[best].model());
  };
  return SelectionProcedure{"cAIC selection over " + std::to_string(candidates.size()) +
                                " candidates",
                            std::move(candidates), run};
}

SelectionProcedure hierarchical_select(std::vector<std::vector<MaskedCandidate>> sets,
                                       const CaicOptions& options) {
  if (!options.estimate) {
    throw ConfigError("hierarchical selection estimates every candidate covariance");
  }
  if (sets.empty()) {
    throw ConfigError("hierarchical selection needs at least one candidate set");
  }
  struct Stage1 {
    std::vector<bool> common;
    std::vector<RemlProblem> problems;
  };
  struct State {
    std::vector<std::vector<MaskedCandidate>> sets;
    std::vector<Stage1> stage1;
    RemlOptions reml;
  };
  auto state = std::make_shared<State>();
  state->reml = options.reml;
  std::vector<ModelSpec> registry;
  Index n = -1;
  for (auto& set : sets) {
    if (set.empty()) {
      throw ConfigError("empty candidate set");
    }
    Stage1 s1;
    for (auto& c : set) {
      if (n < 0) n = c.model.n();
      if (c.model.n() != n) {
        throw ConfigError("hierarchical candidates must be defined on the same rows");
      }
      if (c.rows.empty()) {
        c.rows.assign(static_cast<std::size_t>(n), true);
      }
      if (static_cast<Index>(c.rows.size()) != n) {
        throw DimensionError("row mask length differs from candidate rows");
      }
      s1.common = s1.common.empty() ? c.rows : mask_and(s1.common, c.rows);
      registry.push_back(c.model);
    }
    if (std::count(s1.common.begin(), s1.common.end(), true) < 2) {
      throw ConfigError("candidate set shares too few rows");
    }
    for (const auto& c : set) {
      s1.problems.emplace_back(c.model.restricted(s1.common), options.reml);
    }
    state->stage1.push_back(std::move(s1));
  }
  state->sets = std::move(sets);

  auto run = [state](const VectorXd& y) -> SelectionOutcome {
    const auto& sets = state->sets;
    // stage one
    std::vector<std::pair<std::size_t, std::size_t>> winners;
    for (std::size_t s = 0; s < sets.size(); ++s) {
      const auto& s1 = state->stage1[s];
      const VectorXd ys = restrict_vector(y, s1.common);
      std::vector<double> score(s1.problems.size());
      for (std::size_t i = 0; i < score.size(); ++i) {
        score[i] = candidate_caic(s1.problems[i], ys, nullptr);
      }
      const std::size_t best = argmin(score);
      if (best < score.size()) {
        winners.emplace_back(s, best);
      }
    }
    if (winners.empty()) {
      return make_outcome({}, {}, "", true);
    }
    auto score_on = [&](const MaskedCandidate& c, const std::vector<bool>& rows) {
      try {
        const RemlProblem problem(c.model.restricted(rows), state->reml);
        const VectorXd yr = restrict_vector(y, rows);
        return problem.caic(yr, problem.fit(yr));
      } catch (const Error&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    // stage two: full-data winners jointly
    const MaskedCandidate* current = nullptr;
    double current_score = std::numeric_limits<double>::infinity();
    for (const auto& [s, i] : winners) {
      const auto& c = sets[s][i];
      if (!all_rows(c.rows)) continue;
      const double sc = score_on(c, c.rows);
      if (current == nullptr || sc < current_score) {
        current = &c;
        current_score = sc;
      }
    }
    for (const auto& [s, i] : winners) {
      const auto& c = sets[s][i];
      if (all_rows(c.rows)) continue;
      if (current == nullptr) {
        current = &c;
        continue;
      }
      const std::vector<bool> rows = mask_and(current->rows, c.rows);
      if (std::count(rows.begin(), rows.end(), true) < 2) continue;
      if (score_on(c, rows) < score_on(*current, rows)) {
        current = &c;
      }
    }
    return outcome_for(current->model);
  };
  return SelectionProcedure{"hierarchical cAIC selection", std::move(registry), run};
}

}  // namespace selinf
