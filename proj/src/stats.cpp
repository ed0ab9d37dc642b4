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

#include "selinf/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "selinf/error.hpp"

namespace selinf {

double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {

std::vector<double> sorted_checked(std::vector<double> s) {
  if (s.empty()) {
    throw ConfigError("Kolmogorov-Smirnov test needs a non-empty sample");
  }
  std::sort(s.begin(), s.end());
  return s;
}

}  // namespace

KsResult ks_uniform(std::vector<double> sample) {
  const std::vector<double> s = sorted_checked(std::move(sample));
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double x = std::clamp(s[i], 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - x, x - static_cast<double>(i) / n});
  }
  const double rn = std::sqrt(n);
  return KsResult{d, kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d)};
}

KsResult ks_uniform_upper(std::vector<double> sample) {
  const std::vector<double> s = sorted_checked(std::move(sample));
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    d = std::max(d, (static_cast<double>(i) + 1.0) / n - std::clamp(s[i], 0.0, 1.0));
  }
  return KsResult{d, std::min(1.0, std::exp(-2.0 * n * d * d))};
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace selinf
