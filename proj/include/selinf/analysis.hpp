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

#ifndef SELINF_ANALYSIS_HPP
#define SELINF_ANALYSIS_HPP

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "selinf/engine.hpp"

namespace selinf {

/// Headered numeric table.
struct DataTable {
  std::vector<std::string> columns;
  MatrixXd values;  ///< rows x columns

  Index rows() const { return values.rows(); }
  Index index_of(const std::string& name) const;
  VectorXd column(const std::string& name) const;
};

DataTable parse_csv(std::istream& in, const std::string& source = "<stream>");
DataTable read_csv(const std::string& path);

/// Command-line values that take precedence over the configuration.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::optional<double> alpha;
  unsigned workers = 1;
};

struct InferOutput {
  std::string bundle;  ///< JSON result bundle
  std::string table;   ///< congruency table, one column per scalar target
};

/// A loaded analysis: data, candidate registry, selection procedure and
/// inference targets.
class Analysis {
 public:
  /// `base_dir` resolves a relative data path.
  static Analysis from_json(const std::string& text, const std::string& base_dir,
                            const RunOverrides& overrides = {});
  static Analysis from_file(const std::string& path, const RunOverrides& overrides = {});

  /// REML fits of every candidate.
  std::string fit() const;
  /// Selection outcome on the observed response.
  std::string select() const;
  InferOutput infer() const;

  const std::vector<ModelSpec>& candidates() const;
  const VectorXd& response() const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

std::string congruency_table(const std::vector<InferenceResult>& results);

/// Lower-case hexadecimal form of a fingerprint.
std::string hex64(std::uint64_t v);

}  // namespace selinf

#endif  // SELINF_ANALYSIS_HPP
