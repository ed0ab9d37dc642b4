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

#ifndef SELINF_SIMHARNESS_HPP
#define SELINF_SIMHARNESS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "selinf/direction.hpp"
#include "selinf/mmfit.hpp"
#include "selinf/model.hpp"

namespace selinf {

struct Lmm51Options {
  double snr = 4.0;
  /// Smaller effects (0.5, 0.25, -0.5) for the power comparison.
  bool low_signal = false;
  /// When set, covariates and random effects come from this seed and only
  /// the residuals are drawn from the replicate seed.
  std::optional<std::uint64_t> design_seed;
};

struct Lmm51Data {
  ModelSpec full;        ///< intercept, x1..x6, correlated intercept/slope per group
  VectorXd y;
  VectorXd beta;         ///< true coefficients of the full model (zeros for x4..x6)
  VectorXd b;            ///< realized random effects
  VectorXd eta;          ///< X beta + Z b
  double sigma = 1.0;
  CovarianceModel truth;
  std::vector<std::string> signal_terms{"x1", "x2", "x3"};
  std::vector<std::string> noise_terms{"x4", "x5", "x6"};
};

Lmm51Data generate_lmm51(std::uint64_t seed, const Lmm51Options& options = {});

double f1_true(double z);
double f2_true(double z);

struct Am52Data {
  std::vector<ModelSpec> candidates;  ///< linear, s(z1), s(z3), s(z1)+s(z2), s(z1)+s(z3)
  VectorXd y;
  MatrixXd z;       ///< n x 4, second half mirrors the first
  VectorXd mean;    ///< 1 + f1(z1) + f2(z2)
  double sigma2 = 1.0;
};

Am52Data generate_am52(std::uint64_t seed, double sigma2, Index d = 10, Index n = 500);

enum class Perspective { Marginal, Conditional };
std::string to_string(Perspective p);
Perspective perspective_from_string(const std::string& s);

struct SimDesign {
  std::string design_id = "lmm51";
  double snr = 4.0;
  double sigma2 = 1.0;
  bool low_signal = false;
  /// Allows parameter values outside {2, 4} and {1, 10}.
  bool allow_extension = false;
  /// lmm51: conditioned replicates to collect; am52: replicates to run.
  std::size_t replicates = 200;
  std::size_t samples = 200;
  /// lmm51 gives up after this many attempts per requested replicate.
  std::size_t max_attempt_factor = 5;
  /// lmm51: draw covariates and random effects once and redraw only the
  /// residuals. By default every replicate draws a fresh design.
  bool fixed_design = false;
  /// lmm51: keep only replicates whose selection contains x1..x3.
  bool condition_on_supmodel = true;
  std::vector<Provenance> plugins{Provenance::Truth};
  std::vector<Perspective> perspectives{Perspective::Marginal, Perspective::Conditional};
  std::vector<ShrinkageMode> shrinkage{ShrinkageMode::Working};
  std::vector<KappaVariant> kappas{KappaVariant::Classical};
  bool use_gls = true;
  /// Multiplier of the proposal variance around t_obs.
  double proposal_scale = 1.0;
  double alpha = 0.05;
  std::size_t min_congruent = 10;
  Index spline_d = 10;
  std::uint64_t seed = 20240611;
  unsigned workers = 1;

  void validate() const;
};

struct StudyRecord {
  std::string setting;
  std::string term;        ///< tested quantity, e.g. "x4", "x1@truth", "f1(-1)"
  std::string term_class;  ///< pooling key: noise, x1, signal@truth, f1(0), ...
  std::size_t replicate = 0;
  bool null_true = false;
  double rho0 = 0.0;
  double p_naive = 1.0;
  /// NaN when too few congruent samples were found or the target is degenerate.
  double p_selective = 1.0;
  std::size_t n_congruent = 0;
};

struct PoolSummary {
  std::string setting;
  std::string term_class;
  bool null_true = false;
  std::size_t count = 0;
  std::size_t dropped = 0;
  double rejection_rate = 0.0;
  double naive_rejection_rate = 0.0;
  double ks_statistic = 0.0;
  double ks_p = 1.0;
  double ks_upper_p = 1.0;
  double naive_ks_p = 1.0;
};

struct StudyReport {
  SimDesign design;
  std::size_t attempted = 0;
  std::size_t conditioned = 0;
  std::size_t failed = 0;
  std::vector<StudyRecord> records;

  std::vector<double> pooled(const std::string& setting, const std::string& term_class,
                             bool naive = false) const;
  std::vector<PoolSummary> summary() const;
  /// Long format: setting,term,replicate,p_naive,p_selective,power_flag
  std::string to_csv() const;
  std::string to_json() const;
};

StudyReport run_study(const SimDesign& design);

}  // namespace selinf

#endif  // SELINF_SIMHARNESS_HPP
