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

#ifndef SELINF_MODEL_HPP
#define SELINF_MODEL_HPP

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "selinf/linalg.hpp"

namespace selinf {

// ---------------------------------------------------------------------------
// Error covariance R
// ---------------------------------------------------------------------------

/// Error covariance stored as diagonal, block-diagonal-by-group or dense.
///
/// Factorizations are computed at construction; the object is immutable and
/// can be shared between threads.
class ErrorCovariance {
 public:
  struct Diagonal {
    VectorXd variances;
  };
  struct Block {
    std::vector<Index> rows;
    MatrixXd cov;
    SpdFactor factor;
  };
  struct BlockDiagonal {
    std::vector<Block> blocks;
  };
  struct Dense {
    MatrixXd cov;
    SpdFactor factor;
  };
  using Storage = std::variant<Diagonal, BlockDiagonal, Dense>;

  ErrorCovariance() = default;

  static ErrorCovariance spherical(Index n, double sigma2);
  static ErrorCovariance diagonal(VectorXd variances);
  /// `group[i]` is the block of row i; blocks[g] is the dense block of group g.
  static ErrorCovariance block_diagonal(const std::vector<int>& group,
                                        const std::vector<MatrixXd>& blocks);
  static ErrorCovariance dense(const MatrixXd& cov);

  Index size() const { return n_; }
  const Storage& storage() const { return storage_; }

  MatrixXd to_dense() const;
  /// R b
  MatrixXd multiply(const MatrixXd& b) const;
  VectorXd multiply(const VectorXd& b) const;
  /// R^{-1} b
  MatrixXd solve(const MatrixXd& b) const;
  VectorXd solve(const VectorXd& b) const;
  double log_det() const;
  /// sigma^2 if R = sigma^2 I.
  std::optional<double> spherical_variance() const;
  /// Returns a copy scaled by `factor`.
  ErrorCovariance scaled(double factor) const;

 private:
  explicit ErrorCovariance(Storage s, Index n) : storage_(std::move(s)), n_(n) {}
  Storage storage_ = Diagonal{};
  Index n_ = 0;
};

// ---------------------------------------------------------------------------
// Model specification
// ---------------------------------------------------------------------------

enum class RanefKind {
  Grouped,  ///< `dim` correlated effects replicated over `levels` groups
  Iid,      ///< `dim` exchangeable effects with a single variance (penalized splines)
};

enum class RanefCov { Unstructured, Diagonal, Scalar };

/// One block of the random-effects covariance G. Grouped blocks occupy
/// columns offset + level * dim + e of Z.
struct RanefBlock {
  std::string term;
  RanefKind kind = RanefKind::Grouped;
  Index offset = 0;
  Index dim = 1;
  Index levels = 1;
  RanefCov cov = RanefCov::Unstructured;

  Index width() const { return dim * levels; }
  /// Number of free covariance parameters.
  Index n_params() const;
};

/// Evaluates the design row of a smooth term at a covariate value, split into
/// the values for the term's fixed columns and for its random columns.
struct SmoothEvaluator {
  std::string term;
  double lower = 0.0;
  double upper = 0.0;
  std::function<std::pair<RowVectorXd, RowVectorXd>(double)> row;
};

/// Candidate working model: y = X beta + Z b + e.
struct ModelSpec {
  std::string id;
  MatrixXd fixed_design;   ///< X, n x p
  MatrixXd random_design;  ///< Z, n x q
  std::vector<std::string> fixed_labels;   ///< term id per X column
  std::vector<std::string> random_labels;  ///< term id per Z column
  std::vector<RanefBlock> ranef;
  std::vector<SmoothEvaluator> smooths;
  /// Explicit penalty A over (beta, b); overrides the G-derived penalty.
  std::optional<MatrixXd> penalty;

  Index n() const { return fixed_design.rows(); }
  Index p() const { return fixed_design.cols(); }
  Index q() const { return random_design.cols(); }

  /// C = (X | Z)
  MatrixXd joint_design() const;
  /// Distinct fixed-effect term ids in column order.
  std::vector<std::string> fixed_terms() const;
  /// Distinct random-effect term ids in column order.
  std::vector<std::string> random_terms() const;
  bool has_fixed_term(const std::string& term) const;
  /// Joint (p+q) column indices of a term, fixed columns first.
  std::vector<Index> joint_columns(const std::string& term) const;
  std::vector<Index> fixed_columns(const std::string& term) const;

  /// Copy without the fixed columns of `term` (random structure unchanged).
  ModelSpec without_fixed_term(const std::string& term) const;
  /// Copy restricted to the rows where mask is true.
  ModelSpec restricted(const std::vector<bool>& mask) const;

  const SmoothEvaluator* smooth(const std::string& term) const;
  /// Joint design row C_z of a smooth term at z (zero outside the term).
  RowVectorXd smooth_row(const std::string& term, double z) const;

  /// Checks column labels, block layout and dimensions.
  void validate() const;
};

/// Appends a grouped random-effect block to Z. Row i contributes
/// design.row(i) to the columns of level group[i].
void add_grouped_ranef(ModelSpec& model, const std::string& term, const std::vector<int>& group,
                       Index levels, const MatrixXd& design,
                       RanefCov cov = RanefCov::Unstructured);

/// Builds G from the per-block covariance matrices (Grouped: k x k, Iid: 1 x 1).
MatrixXd assemble_ranef_covariance(const ModelSpec& model,
                                   const std::vector<MatrixXd>& block_cov);

// ---------------------------------------------------------------------------
// Covariance model
// ---------------------------------------------------------------------------

enum class Provenance { Truth, ModelEstimate, ICM, VarY };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct CovarianceModel {
  ErrorCovariance error;   ///< R
  MatrixXd ranef;          ///< G, q x q
  Provenance provenance = Provenance::Truth;
  /// Per-block covariance matrices G was assembled from (may be empty).
  std::vector<MatrixXd> block_cov;
  /// Free parameters of R (counted by the cAIC corrector).
  Index n_error_params = 1;
  /// True when a REML estimate hit the boundary (zero variance direction).
  bool boundary = false;
};

/// Z G Z^T + R, checked symmetric and PD.
MatrixXd marginal_covariance(const ModelSpec& model, const CovarianceModel& cov);

/// Oblique decomposition y = P y + (I - P) y with P = M D (D^T M D)^{-1} D^T.
struct Decomposition {
  VectorXd parallel;
  VectorXd orthogonal;
};

Decomposition project(const MatrixXd& metric, const MatrixXd& direction, const VectorXd& y);

/// The projector matrix M D (D^T M D)^{-1} D^T.
MatrixXd projector(const MatrixXd& metric, const MatrixXd& direction);

/// Throws DimensionError unless y has n finite entries.
void check_response(const VectorXd& y, Index n);

}  // namespace selinf

#endif  // SELINF_MODEL_HPP
