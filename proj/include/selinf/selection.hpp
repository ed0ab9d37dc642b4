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

#ifndef SELINF_SELECTION_HPP
#define SELINF_SELECTION_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "selinf/mmfit.hpp"
#include "selinf/model.hpp"

namespace selinf {

/// Result of running a selection procedure on one response vector.
struct SelectionOutcome {
  std::vector<std::string> fixed_set;  ///< sorted
  std::vector<std::string> ranef_set;  ///< sorted
  std::string winner;
  /// Set when a fit failed and the procedure stopped early.
  bool flagged = false;

  /// Canonical, injective text form of the outcome.
  std::string canonical() const;
  /// 64-bit FNV-1a hash of canonical().
  std::uint64_t fingerprint() const;

  bool operator==(const SelectionOutcome& o) const;
  bool operator!=(const SelectionOutcome& o) const { return !(*this == o); }
};

SelectionOutcome make_outcome(std::vector<std::string> fixed_set,
                              std::vector<std::string> ranef_set, std::string winner,
                              bool flagged = false);

/// Deterministic selection closure y -> outcome.
///
/// `evaluate` must be pure: it may run concurrently and must return equal
/// outcomes for equal inputs.
struct SelectionProcedure {
  std::string description;
  std::vector<ModelSpec> candidates;
  std::function<SelectionOutcome(const VectorXd&)> evaluate;

  SelectionOutcome operator()(const VectorXd& y) const { return evaluate(y); }
};

SelectionProcedure custom_procedure(std::string description,
                                    std::function<SelectionOutcome(const VectorXd&)> fn);

enum class CovariancePolicy {
  Fixed,          ///< the supplied covariance is used at every step
  RefitFull,      ///< REML on the full model once per response
  RefitEachStep,  ///< REML on every intermediate model
};

struct BackwardOptions {
  double alpha = 0.05;
  CovariancePolicy policy = CovariancePolicy::Fixed;
  /// Required for the Fixed policy.
  std::optional<CovarianceModel> cov;
  /// Terms that are never removed.
  std::vector<std::string> keep{"(Intercept)"};
  RemlOptions reml;
};

/// Backward elimination of fixed terms by Wald tests on the Bayesian
/// covariance. A term with several columns is tested with a chi-square Wald
/// statistic. The largest p-value above alpha is dropped; ties drop the term
/// listed first. Random effects are never removed.
SelectionProcedure backward_pvalue(const ModelSpec& full, const BackwardOptions& options = {});

/// Two-sided p-value of each fixed term of `model` (in fixed_terms() order)
/// under covariance `cov`.
std::vector<double> wald_pvalues(const ModelSpec& model, const CovarianceModel& cov,
                                 const VectorXd& y);

struct CaicOptions {
  /// Estimate each candidate's covariance by REML; otherwise use fixed_cov.
  bool estimate = true;
  RemlOptions reml;
  std::vector<CovarianceModel> fixed_cov;
};

/// Picks the candidate with the smallest cAIC. Failed fits score +inf and
/// ties go to the earlier candidate.
SelectionProcedure caic_select(std::vector<ModelSpec> candidates, const CaicOptions& options = {});

/// Candidate defined on all rows together with the rows it may use.
struct MaskedCandidate {
  ModelSpec model;
  std::vector<bool> rows;
};

/// Two-stage cAIC selection over groups of candidates that may use
/// different data subsets.
///
/// Stage one picks a winner per group on the rows shared by the whole group.
/// Stage two compares the winners that use all rows, then compares the
/// current winner pairwise against each subset winner on the rows both use.
SelectionProcedure hierarchical_select(std::vector<std::vector<MaskedCandidate>> sets,
                                       const CaicOptions& options = {});

}  // namespace selinf

#endif  // SELINF_SELECTION_HPP
