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

#ifndef SELINF_STATS_HPP
#define SELINF_STATS_HPP

#include <vector>

namespace selinf {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Two-sided Kolmogorov-Smirnov test against U(0, 1).
KsResult ks_uniform(std::vector<double> sample);

/// One-sided test of H0: the sample is stochastically at least uniform,
/// based on D+ = sup(F_n(x) - x).
KsResult ks_uniform_upper(std::vector<double> sample);

/// Asymptotic Kolmogorov survival function Q(lambda).
double kolmogorov_survival(double lambda);

double mean(const std::vector<double>& v);

}  // namespace selinf

#endif  // SELINF_STATS_HPP
