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

#ifndef SELINF_ENGINE_HPP
#define SELINF_ENGINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "selinf/direction.hpp"
#include "selinf/selection.hpp"

namespace selinf {

enum class Alternative { Greater, Less, TwoSided };

std::string to_string(Alternative a);
Alternative alternative_from_string(const std::string& s);

struct ProposalComponent {
  double mean = 0.0;
  double variance = 1.0;
  double weight = 1.0;
};

/// Normal (mixture) proposal for the test statistic, optionally truncated to
/// [0, inf) for group statistics.
struct ProposalSpec {
  enum class Kind { NullCentered, ObsCentered, Mixture, Custom };
  Kind kind = Kind::ObsCentered;
  std::vector<ProposalComponent> components;
  bool truncate_at_zero = false;
  std::uint64_t seed_root = 0;

  static ProposalSpec null_centered(double rho0, double kappa, std::uint64_t seed);
  static ProposalSpec obs_centered(double t_obs, double variance, std::uint64_t seed);
  /// Equal-weight components at {0, 1/3, 2/3, 1} * t_obs with variance kappa.
  static ProposalSpec mixture_preset(double t_obs, double kappa, std::uint64_t seed);
  /// Equal mixture at t_obs and at the chi mode, truncated at zero.
  static ProposalSpec group_default(double t_obs, double scale, Index dof, std::uint64_t seed);

  void validate() const;
  double log_density(double t) const;
};

std::string to_string(ProposalSpec::Kind k);

struct Draw {
  double t = 0.0;
  int component = 0;
};

/// Draw b uses substream b of seed_root.
std::vector<Draw> sample_statistics(const ProposalSpec& proposal, std::size_t count);

/// Resampled statistics with their congruency flags, reusable for any null
/// value or kappa that shares the same direction.
struct CongruencySet {
  double t_obs = 0.0;
  SelectionOutcome target;
  ProposalSpec proposal;
  std::vector<Draw> draws;
  std::vector<double> log_q;
  std::vector<unsigned char> congruent;

  std::size_t n_congruent() const;
};

/// Rebuilds Y^b for every draw and re-runs the selection. When
/// `conditioning` is given it must equal proc(y_obs).
CongruencySet sample_congruency(const TestDirection& dir, const SelectionProcedure& proc,
                                const VectorXd& y_obs, const ProposalSpec& proposal,
                                std::size_t samples, unsigned workers,
                                const SelectionOutcome* conditioning = nullptr);

struct EngineOptions {
  std::size_t samples = 1000;
  std::size_t min_congruent = 50;
  double ess_warning = 25.0;
  Alternative alternative = Alternative::TwoSided;
  double alpha = 0.05;
  bool compute_ci = true;
  unsigned workers = 1;
};

struct ComponentRow {
  double mean = 0.0;
  double ratio = 0.0;  ///< mean / t_obs (mean itself when t_obs = 0)
  std::size_t samples = 0;
  std::size_t congruent = 0;
};

struct InferenceResult {
  std::string label;
  bool group = false;
  double t_obs = 0.0;
  double rho0 = 0.0;
  double kappa = 0.0;  ///< scalar: null variance; group: scale^2
  Index dof = 0;
  double p_value = 1.0;
  double p_naive = 1.0;
  Alternative alternative = Alternative::TwoSided;
  std::optional<std::pair<double, double>> ci;
  std::size_t n_samples = 0;
  std::size_t n_congruent = 0;
  double ess = 0.0;
  bool low_ess = false;
  std::vector<ComponentRow> table;
  std::uint64_t fingerprint = 0;
};

/// Weighted share of congruent draws above t_obs when T ~ N(rho, kappa).
double tilted_survival(const CongruencySet& set, double kappa, double rho);

/// Scalar inference from an existing congruency set.
InferenceResult infer_scalar(const CongruencySet& set, double kappa, double rho0,
                             const EngineOptions& options);

/// Group inference (null of zero signal) from an existing congruency set.
InferenceResult infer_group(const CongruencySet& set, double scale, Index dof,
                            const EngineOptions& options);

InferenceResult selective_pvalue(const TestDirection& dir, const SelectionProcedure& proc,
                                 const VectorXd& y_obs, const ProposalSpec& proposal,
                                 const EngineOptions& options);

std::pair<double, double> selective_ci(const TestDirection& dir, const SelectionProcedure& proc,
                                       const VectorXd& y_obs, const ProposalSpec& proposal,
                                       const EngineOptions& options);

InferenceResult group_pvalue(const TestDirection& dir, const SelectionProcedure& proc,
                             const VectorXd& y_obs, const ProposalSpec& proposal,
                             const EngineOptions& options);

// ---------------------------------------------------------------------------
// Closed-form references for selections that only restrict the statistic.

using IntervalSet = std::vector<std::pair<double, double>>;

/// P(T > t | T in set) for T ~ N(rho, kappa).
double truncated_normal_survival(double t, double rho, double kappa, const IntervalSet& set);

/// P(T > t | T in set) for T ~ scale * chi_dof.
double truncated_chi_survival(double t, double scale, Index dof, const IntervalSet& set);

}  // namespace selinf

#endif  // SELINF_ENGINE_HPP
