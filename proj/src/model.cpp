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

#include "selinf/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "selinf/error.hpp"

namespace selinf {

// ---------------------------------------------------------------------------
// ErrorCovariance

ErrorCovariance ErrorCovariance::spherical(Index n, double sigma2) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw NumericalError("error variance must be positive and finite");
  }
  return ErrorCovariance(Diagonal{VectorXd::Constant(n, sigma2)}, n);
}

ErrorCovariance ErrorCovariance::diagonal(VectorXd variances) {
  if (variances.size() > 0 && !(variances.minCoeff() > 0.0)) {
    throw NumericalError("diagonal error covariance must have positive entries");
  }
  const Index n = variances.size();
  return ErrorCovariance(Diagonal{std::move(variances)}, n);
}

ErrorCovariance ErrorCovariance::block_diagonal(const std::vector<int>& group,
                                                const std::vector<MatrixXd>& blocks) {
  std::vector<std::vector<Index>> rows(blocks.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group[i] < 0 || static_cast<std::size_t>(group[i]) >= blocks.size()) {
      throw DimensionError("block index out of range");
    }
    rows[group[i]].push_back(static_cast<Index>(i));
  }
  BlockDiagonal bd;
  for (std::size_t g = 0; g < blocks.size(); ++g) {
    if (blocks[g].rows() != static_cast<Index>(rows[g].size()) ||
        blocks[g].cols() != blocks[g].rows()) {
      throw DimensionError("block " + std::to_string(g) + " does not match its group size");
    }
    bd.blocks.push_back(Block{rows[g], blocks[g], SpdFactor(blocks[g], "error covariance block")});
  }
  return ErrorCovariance(std::move(bd), static_cast<Index>(group.size()));
}

ErrorCovariance ErrorCovariance::dense(const MatrixXd& cov) {
  if (relative_frobenius(cov, cov.transpose()) > 1e-12) {
    throw NumericalError("dense error covariance is not symmetric");
  }
  const Index n = cov.rows();
  return ErrorCovariance(Dense{cov, SpdFactor(cov, "error covariance")}, n);
}

MatrixXd ErrorCovariance::to_dense() const {
  return std::visit(
      [this](const auto& s) -> MatrixXd {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Diagonal>) {
          return s.variances.asDiagonal();
        } else if constexpr (std::is_same_v<T, BlockDiagonal>) {
          MatrixXd out = MatrixXd::Zero(n_, n_);
          for (const auto& b : s.blocks) {
            for (std::size_t i = 0; i < b.rows.size(); ++i) {
              for (std::size_t j = 0; j < b.rows.size(); ++j) {
                out(b.rows[i], b.rows[j]) = b.cov(i, j);
              }
            }
          }
          return out;
        } else {
          return s.cov;
        }
      },
      storage_);
}

namespace {

MatrixXd gather_rows(const MatrixXd& m, const std::vector<Index>& rows) {
  MatrixXd out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(i) = m.row(rows[i]);
  }
  return out;
}

void scatter_rows(MatrixXd& out, const MatrixXd& part, const std::vector<Index>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(rows[i]) = part.row(i);
  }
}

}  // namespace

MatrixXd ErrorCovariance::multiply(const MatrixXd& b) const {
  if (b.rows() != n_) {
    throw DimensionError("error covariance multiply: size mismatch");
  }
  return std::visit(
      [&](const auto& s) -> MatrixXd {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Diagonal>) {
          return s.variances.asDiagonal() * b;
        } else if constexpr (std::is_same_v<T, BlockDiagonal>) {
          MatrixXd out(b.rows(), b.cols());
          for (const auto& blk : s.blocks) {
            scatter_rows(out, blk.cov * gather_rows(b, blk.rows), blk.rows);
          }
          return out;
        } else {
          return s.cov * b;
        }
      },
      storage_);
}

VectorXd ErrorCovariance::multiply(const VectorXd& b) const {
  return multiply(MatrixXd(b)).col(0);
}

MatrixXd ErrorCovariance::solve(const MatrixXd& b) const {
  if (b.rows() != n_) {
    throw DimensionError("error covariance solve: size mismatch");
  }
  return std::visit(
      [&](const auto& s) -> MatrixXd {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Diagonal>) {
          return s.variances.cwiseInverse().asDiagonal() * b;
        } else if constexpr (std::is_same_v<T, BlockDiagonal>) {
          MatrixXd out(b.rows(), b.cols());
          for (const auto& blk : s.blocks) {
            scatter_rows(out, blk.factor.solve(gather_rows(b, blk.rows)), blk.rows);
          }
          return out;
        } else {
          return s.factor.solve(b);
        }
      },
      storage_);
}

VectorXd ErrorCovariance::solve(const VectorXd& b) const {
  return solve(MatrixXd(b)).col(0);
}

double ErrorCovariance::log_det() const {
  return std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Diagonal>) {
          return s.variances.array().log().sum();
        } else if constexpr (std::is_same_v<T, BlockDiagonal>) {
          double acc = 0.0;
          for (const auto& blk : s.blocks) {
            acc += blk.factor.log_det();
          }
          return acc;
        } else {
          return s.factor.log_det();
        }
      },
      storage_);
}

std::optional<double> ErrorCovariance::spherical_variance() const {
  if (const auto* d = std::get_if<Diagonal>(&storage_)) {
    if (d->variances.size() == 0) {
      return std::nullopt;
    }
    const double first = d->variances(0);
    if ((d->variances.array() == first).all()) {
      return first;
    }
  }
  return std::nullopt;
}

ErrorCovariance ErrorCovariance::scaled(double factor) const {
  return std::visit(
      [&](const auto& s) -> ErrorCovariance {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Diagonal>) {
          return diagonal(s.variances * factor);
        } else if constexpr (std::is_same_v<T, BlockDiagonal>) {
          std::vector<int> group(n_);
          std::vector<MatrixXd> blocks;
          for (std::size_t g = 0; g < s.blocks.size(); ++g) {
            for (Index r : s.blocks[g].rows) {
              group[r] = static_cast<int>(g);
            }
            blocks.push_back(s.blocks[g].cov * factor);
          }
          return block_diagonal(group, blocks);
        } else {
          return dense(s.cov * factor);
        }
      },
      storage_);
}

// ---------------------------------------------------------------------------
// RanefBlock / ModelSpec

Index RanefBlock::n_params() const {
  switch (cov) {
    case RanefCov::Unstructured:
      return dim * (dim + 1) / 2;
    case RanefCov::Diagonal:
      return dim;
    case RanefCov::Scalar:
      return 1;
  }
  return 0;
}

MatrixXd ModelSpec::joint_design() const {
  MatrixXd c(n(), p() + q());
  c.leftCols(p()) = fixed_design;
  if (q() > 0) {
    c.rightCols(q()) = random_design;
  }
  return c;
}

namespace {
std::vector<std::string> distinct_in_order(const std::vector<std::string>& labels) {
  std::vector<std::string> out;
  for (const auto& l : labels) {
    if (std::find(out.begin(), out.end(), l) == out.end()) {
      out.push_back(l);
    }
  }
  return out;
}
}  // namespace

std::vector<std::string> ModelSpec::fixed_terms() const { return distinct_in_order(fixed_labels); }

std::vector<std::string> ModelSpec::random_terms() const {
  return distinct_in_order(random_labels);
}

bool ModelSpec::has_fixed_term(const std::string& term) const {
  return std::find(fixed_labels.begin(), fixed_labels.end(), term) != fixed_labels.end();
}

std::vector<Index> ModelSpec::fixed_columns(const std::string& term) const {
  std::vector<Index> out;
  for (std::size_t j = 0; j < fixed_labels.size(); ++j) {
    if (fixed_labels[j] == term) {
      out.push_back(static_cast<Index>(j));
    }
  }
  return out;
}

std::vector<Index> ModelSpec::joint_columns(const std::string& term) const {
  std::vector<Index> out = fixed_columns(term);
  for (std::size_t j = 0; j < random_labels.size(); ++j) {
    if (random_labels[j] == term) {
      out.push_back(p() + static_cast<Index>(j));
    }
  }
  return out;
}

ModelSpec ModelSpec::without_fixed_term(const std::string& term) const {
  const auto drop = fixed_columns(term);
  if (drop.empty()) {
    throw ConfigError("model '" + id + "' has no fixed term '" + term + "'");
  }
  ModelSpec out = *this;
  const Index keep = p() - static_cast<Index>(drop.size());
  out.fixed_design.resize(n(), keep);
  out.fixed_labels.clear();
  Index k = 0;
  for (Index j = 0; j < p(); ++j) {
    if (fixed_labels[j] == term) {
      continue;
    }
    out.fixed_design.col(k++) = fixed_design.col(j);
    out.fixed_labels.push_back(fixed_labels[j]);
  }
  out.penalty.reset();
  out.id = id + "-" + term;
  return out;
}

ModelSpec ModelSpec::restricted(const std::vector<bool>& mask) const {
  if (static_cast<Index>(mask.size()) != n()) {
    throw DimensionError("row mask length differs from model rows");
  }
  const auto rows = static_cast<Index>(std::count(mask.begin(), mask.end(), true));
  ModelSpec out = *this;
  out.fixed_design.resize(rows, p());
  out.random_design.resize(rows, q());
  const bool has_z = q() > 0;
  Index k = 0;
  for (Index i = 0; i < n(); ++i) {
    if (mask[i]) {
      out.fixed_design.row(k) = fixed_design.row(i);
      if (has_z) {
        out.random_design.row(k) = random_design.row(i);
      }
      ++k;
    }
  }
  return out;
}

const SmoothEvaluator* ModelSpec::smooth(const std::string& term) const {
  for (const auto& s : smooths) {
    if (s.term == term) {
      return &s;
    }
  }
  return nullptr;
}

RowVectorXd ModelSpec::smooth_row(const std::string& term, double z) const {
  const SmoothEvaluator* s = smooth(term);
  if (s == nullptr) {
    throw ConfigError("model '" + id + "' has no smooth term '" + term + "'");
  }
  if (z < s->lower || z > s->upper) {
    throw ConfigError("location " + std::to_string(z) + " lies outside the support of '" +
                      term + "'");
  }
  const auto [fixed_part, random_part] = s->row(z);
  RowVectorXd out = RowVectorXd::Zero(p() + q());
  const auto fcols = fixed_columns(term);
  if (static_cast<Index>(fcols.size()) != fixed_part.size()) {
    throw DimensionError("smooth '" + term + "' fixed columns do not match its evaluator");
  }
  for (std::size_t k = 0; k < fcols.size(); ++k) {
    out(fcols[k]) = fixed_part(static_cast<Index>(k));
  }
  Index r = 0;
  for (Index j = 0; j < q(); ++j) {
    if (random_labels[j] == term) {
      if (r >= random_part.size()) {
        throw DimensionError("smooth '" + term + "' random columns do not match its evaluator");
      }
      out(p() + j) = random_part(r++);
    }
  }
  return out;
}

void ModelSpec::validate() const {
  if (random_design.rows() != fixed_design.rows() && q() > 0) {
    throw DimensionError("X and Z have different row counts");
  }
  if (static_cast<Index>(fixed_labels.size()) != p()) {
    throw DimensionError("fixed column labels do not match X");
  }
  if (static_cast<Index>(random_labels.size()) != q()) {
    throw DimensionError("random column labels do not match Z");
  }
  if (n() < p()) {
    throw DimensionError("fewer rows than fixed-effect columns");
  }
  Index covered = 0;
  for (const auto& b : ranef) {
    if (b.offset != covered) {
      throw DimensionError("random-effect blocks must tile Z contiguously");
    }
    covered += b.width();
  }
  if (covered != q()) {
    throw DimensionError("random-effect blocks do not cover Z");
  }
  if (penalty && (penalty->rows() != p() + q() || penalty->cols() != p() + q())) {
    throw DimensionError("penalty dimension must equal p + q");
  }
}

void add_grouped_ranef(ModelSpec& model, const std::string& term, const std::vector<int>& group,
                       Index levels, const MatrixXd& design, RanefCov cov) {
  const Index n = model.n();
  if (static_cast<Index>(group.size()) != n || design.rows() != n) {
    throw DimensionError("grouping factor and slope design must have one row per observation");
  }
  const Index dim = design.cols();
  const Index offset = model.q();
  MatrixXd z = MatrixXd::Zero(n, offset + dim * levels);
  if (offset > 0) {
    z.leftCols(offset) = model.random_design;
  }
  for (Index i = 0; i < n; ++i) {
    const int g = group[i];
    if (g < 0 || g >= levels) {
      throw DimensionError("group index out of range");
    }
    z.block(i, offset + g * dim, 1, dim) = design.row(i);
  }
  model.random_design = std::move(z);
  for (Index k = 0; k < dim * levels; ++k) {
    model.random_labels.push_back(term);
  }
  model.ranef.push_back(RanefBlock{term, RanefKind::Grouped, offset, dim, levels, cov});
}

MatrixXd assemble_ranef_covariance(const ModelSpec& model, const std::vector<MatrixXd>& block_cov) {
  if (block_cov.size() != model.ranef.size()) {
    throw DimensionError("one covariance matrix per random-effect block required");
  }
  MatrixXd g = MatrixXd::Zero(model.q(), model.q());
  for (std::size_t k = 0; k < model.ranef.size(); ++k) {
    const auto& b = model.ranef[k];
    const MatrixXd& c = block_cov[k];
    if (b.kind == RanefKind::Iid) {
      if (c.size() != 1) {
        throw DimensionError("iid block covariance must be 1 x 1");
      }
      g.block(b.offset, b.offset, b.dim, b.dim) = c(0, 0) * MatrixXd::Identity(b.dim, b.dim);
    } else {
      if (c.rows() != b.dim || c.cols() != b.dim) {
        throw DimensionError("grouped block covariance has wrong size");
      }
      for (Index l = 0; l < b.levels; ++l) {
        g.block(b.offset + l * b.dim, b.offset + l * b.dim, b.dim, b.dim) = c;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::Truth:
      return "truth";
    case Provenance::ModelEstimate:
      return "model_estimate";
    case Provenance::ICM:
      return "icm";
    case Provenance::VarY:
      return "var_y";
  }
  return "unknown";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "truth") return Provenance::Truth;
  if (s == "model_estimate") return Provenance::ModelEstimate;
  if (s == "icm") return Provenance::ICM;
  if (s == "var_y") return Provenance::VarY;
  throw ConfigError("unknown covariance plug-in '" + s + "'");
}

MatrixXd marginal_covariance(const ModelSpec& model, const CovarianceModel& cov) {
  if (cov.error.size() != model.n()) {
    throw DimensionError("R does not match the number of rows");
  }
  if (cov.ranef.rows() != model.q() || cov.ranef.cols() != model.q()) {
    throw DimensionError("G does not match the random design");
  }
  MatrixXd sigma = cov.error.to_dense();
  if (model.q() > 0) {
    sigma.noalias() += model.random_design * cov.ranef * model.random_design.transpose();
  }
  sigma = symmetrize(sigma);
  SpdFactor check(sigma, "marginal covariance");
  return sigma;
}

MatrixXd projector(const MatrixXd& metric, const MatrixXd& direction) {
  if (metric.rows() != metric.cols() || metric.rows() != direction.rows()) {
    throw DimensionError("projector: metric and direction sizes differ");
  }
  if (direction.norm() == 0.0) {
    throw NumericalError("projector: zero direction");
  }
  const MatrixXd md = metric * direction;
  const MatrixXd gram = direction.transpose() * md;
  SpdFactor f(gram, "direction Gram matrix");
  return md * f.solve(MatrixXd(direction.transpose()));
}

Decomposition project(const MatrixXd& metric, const MatrixXd& direction, const VectorXd& y) {
  if (y.size() != metric.rows()) {
    throw DimensionError("project: response length differs from metric");
  }
  if (metric.rows() != metric.cols() || metric.rows() != direction.rows()) {
    throw DimensionError("project: metric and direction sizes differ");
  }
  if (direction.norm() == 0.0) {
    throw NumericalError("project: zero direction");
  }
  SpdFactor metric_check(metric, "metric");
  const MatrixXd md = metric * direction;
  SpdFactor f(MatrixXd(direction.transpose() * md), "direction Gram matrix");
  VectorXd parallel = md * f.solve(VectorXd(direction.transpose() * y));
  return Decomposition{parallel, y - parallel};
}

void check_response(const VectorXd& y, Index n) {
  if (y.size() != n) {
    throw DimensionError("response has " + std::to_string(y.size()) + " entries, expected " +
                         std::to_string(n));
  }
  if (!y.allFinite()) {
    throw DimensionError("response contains non-finite values");
  }
}

}  // namespace selinf
