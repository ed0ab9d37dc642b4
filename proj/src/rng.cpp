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

#include "selinf/rng.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <cstdlib>
#include <string>

#include "selinf/parallel.hpp"

namespace selinf {

double normal_quantile(double u) { return -M_SQRT2 * boost::math::erfc_inv(2.0 * u); }

double normal_upper_quantile(double u) { return M_SQRT2 * boost::math::erfc_inv(2.0 * u); }

double CounterRng::normal() { return normal_quantile(uniform()); }

unsigned default_workers() {
  const char* env = std::getenv("SELINF_WORKERS");
  if (env == nullptr) return 1;
  try {
    const long v = std::stol(env);
    return v > 0 ? static_cast<unsigned>(v) : 1;
  } catch (...) {
    return 1;
  }
}

}  // namespace selinf
