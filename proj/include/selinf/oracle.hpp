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

#ifndef SELINF_ORACLE_HPP
#define SELINF_ORACLE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "selinf/engine.hpp"

namespace selinf {

/// One Monte Carlo vs closed-form comparison for a selection rule that
/// keeps the statistic inside `set`.
struct OracleCase {
  std::string rule;
  double rho = 0.0;     ///< null mean (scalar cases)
  double kappa = 0.0;   ///< null variance, or scale^2 for chi cases
  Index dof = 0;        ///< 0 for scalar cases
  double t_obs = 0.0;
  IntervalSet set;
  double exact = 0.0;
  double estimate = 0.0;
  std::size_t congruent = 0;
  double error() const;
};

struct OracleOptions {
  std::size_t samples = 100000;
  std::size_t configs_per_rule = 10;
  std::uint64_t seed = 1;
  unsigned workers = 1;
};

/// Upper-tail selective p-values for {T > c}, {a < T < b} and
/// {T < a} or {T > b} against the truncated normal survival function.
std::vector<OracleCase> normal_oracle_suite(const OracleOptions& options);

/// Group p-values for {T > c} with w in {2, 3, 5} against truncated chi.
std::vector<OracleCase> chi_oracle_suite(const OracleOptions& options);

/// Selective p-value and confidence interval on a synthetic truncation case.
struct DualityCase {
  double rho0 = 0.0;
  double p_value = 1.0;
  double lower = 0.0;
  double upper = 0.0;
  /// p < alpha exactly when rho0 lies outside [lower, upper].
  bool consistent() const;
  double alpha = 0.05;
};

std::vector<DualityCase> duality_suite(std::size_t cases, std::size_t samples,
                                       std::uint64_t seed, unsigned workers);

}  // namespace selinf

#endif  // SELINF_ORACLE_HPP
