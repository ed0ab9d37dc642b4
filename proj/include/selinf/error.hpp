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

#ifndef SELINF_ERROR_HPP
#define SELINF_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace selinf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent matrix or vector sizes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-PD covariance, singular system, failed optimizer, indeterminate rank.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid user input (configuration, arguments, data files).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Too few resampled responses reproduced the observed selection.
class LowCongruencyError : public Error {
 public:
  LowCongruencyError(std::size_t congruent, std::size_t samples, std::size_t required)
      : Error("only " + std::to_string(congruent) + " of " + std::to_string(samples) +
              " samples were congruent with the observed selection (need " +
              std::to_string(required) + ")"),
        congruent_(congruent),
        samples_(samples) {}

  std::size_t congruent() const noexcept { return congruent_; }
  std::size_t samples() const noexcept { return samples_; }

 private:
  std::size_t congruent_;
  std::size_t samples_;
};

}  // namespace selinf

#endif  // SELINF_ERROR_HPP
