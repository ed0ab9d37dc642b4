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

#ifndef SELINF_TEST_UTIL_HPP
#define SELINF_TEST_UTIL_HPP

#include <cstdint>

#include "selinf/linalg.hpp"
#include "selinf/rng.hpp"

namespace selinf::testing {

inline MatrixXd random_matrix(Index rows, Index cols, std::uint64_t seed) {
  CounterRng rng(seed);
  MatrixXd m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

inline VectorXd random_vector(Index n, std::uint64_t seed) {
  return random_matrix(n, 1, seed).col(0);
}

inline MatrixXd random_pd(Index n, std::uint64_t seed) {
  const MatrixXd a = random_matrix(n, n, seed);
  return a * a.transpose() + 0.5 * MatrixXd::Identity(n, n);
}

inline double max_abs(const MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace selinf::testing

#endif
