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

#include "selinf/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "selinf/error.hpp"
#include "selinf/rng.hpp"
#include "selinf/splines.hpp"

namespace selinf {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// CSV

Index DataTable::index_of(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) {
    throw ConfigError("column '" + name + "' not found in the data");
  }
  return static_cast<Index>(it - columns.begin());
}

VectorXd DataTable::column(const std::string& name) const { return values.col(index_of(name)); }

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r\"");
    const auto e = cell.find_last_not_of(" \t\r\"");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

}  // namespace

DataTable parse_csv(std::istream& in, const std::string& source) {
  DataTable t;
  std::string line;
  if (!std::getline(in, line)) {
    throw ConfigError(source + ": empty data file");
  }
  t.columns = split_line(line);
  if (t.columns.empty()) {
    throw ConfigError(source + ": missing header");
  }
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line);
    if (cells.size() != t.columns.size()) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(t.columns.size()) + " fields");
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto& c = cells[j];
      const auto res = std::from_chars(c.data(), c.data() + c.size(), row[j]);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size()) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": '" + c +
                          "' is not a number");
      }
    }
    rows.push_back(std::move(row));
  }
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.columns.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  return t;
}

DataTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open data file '" + path + "'");
  }
  return parse_csv(in, path);
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

std::vector<int> group_codes(const VectorXd& col, Index* levels) {
  std::vector<double> distinct(col.data(), col.data() + col.size());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<int> out(static_cast<std::size_t>(col.size()));
  for (Index i = 0; i < col.size(); ++i) {
    out[static_cast<std::size_t>(i)] = static_cast<int>(
        std::lower_bound(distinct.begin(), distinct.end(), col(i)) - distinct.begin());
  }
  *levels = static_cast<Index>(distinct.size());
  return out;
}

RanefCov ranef_cov_from(const std::string& s) {
  if (s == "unstructured") return RanefCov::Unstructured;
  if (s == "diagonal") return RanefCov::Diagonal;
  if (s == "scalar") return RanefCov::Scalar;
  throw ConfigError("unknown random-effect covariance '" + s + "'");
}

struct CandidateConfig {
  ModelSpec model;
  std::vector<bool> rows;  ///< empty for all rows
  int set = 0;
};

CandidateConfig build_candidate(const json& c, const DataTable& data, std::size_t index) {
  CandidateConfig out;
  const std::string id = get_or<std::string>(c, "id", "m" + std::to_string(index + 1));
  if (!c.contains("terms") || !c.at("terms").is_array()) {
    throw ConfigError("candidate '" + id + "' needs a terms list");
  }
  std::vector<AdditiveTerm> fixed;
  std::vector<json> random;
  for (const auto& t : c.at("terms")) {
    if (t.contains("linear")) {
      const std::string col = t.at("linear").get<std::string>();
      fixed.push_back(AdditiveTerm::linear(col, data.column(col)));
    } else if (t.contains("smooth")) {
      const std::string col = t.at("smooth").get<std::string>();
      fixed.push_back(AdditiveTerm::smooth("s(" + col + ")", data.column(col),
                                           get_or<Index>(t, "d", 10), get_or<int>(t, "degree", 3),
                                           get_or<int>(t, "diff_order", 2)));
    } else if (t.contains("tensor")) {
      const auto cols = t.at("tensor").get<std::vector<std::string>>();
      if (cols.size() != 2) {
        throw ConfigError("tensor terms take exactly two columns");
      }
      fixed.push_back(AdditiveTerm::tensor("te(" + cols[0] + "," + cols[1] + ")",
                                           data.column(cols[0]), data.column(cols[1]),
                                           get_or<Index>(t, "d", 5)));
    } else if (t.contains("random")) {
      random.push_back(t);
    } else {
      throw ConfigError("candidate '" + id + "' has a term of unknown kind");
    }
  }
  out.model = build_additive_model(id, fixed);
  for (const auto& r : random) {
    const std::string group = r.at("random").get<std::string>();
    const auto cols =
        get_or<std::vector<std::string>>(r, "columns", std::vector<std::string>{"1"});
    MatrixXd design(data.rows(), static_cast<Index>(cols.size()));
    std::string name = "(";
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const bool intercept = cols[k] == "1" || cols[k] == "(Intercept)";
      design.col(static_cast<Index>(k)) =
          intercept ? VectorXd::Ones(data.rows()) : data.column(cols[k]);
      name += (k > 0 ? "+" : "") + (intercept ? std::string("1") : cols[k]);
    }
    name += "|" + group + ")";
    Index levels = 0;
    const auto codes = group_codes(data.column(group), &levels);
    add_grouped_ranef(out.model, name, codes, levels, design,
                      ranef_cov_from(get_or<std::string>(r, "cov", "unstructured")));
  }
  out.model.validate();
  if (c.contains("rows")) {
    const VectorXd mask = data.column(c.at("rows").get<std::string>());
    out.rows.resize(static_cast<std::size_t>(mask.size()));
    for (Index i = 0; i < mask.size(); ++i) out.rows[static_cast<std::size_t>(i)] = mask(i) != 0.0;
  }
  out.set = get_or<int>(c, "set", 0);
  return out;
}

struct Target {
  enum class Kind { Coefficient, Smooth, Group };
  Kind kind = Kind::Coefficient;
  std::string term;
  double at = 0.0;
  double null = 0.0;
};

}  // namespace

struct Analysis::Impl {
  std::string config_text;
  DataTable data;
  VectorXd y;
  std::vector<CandidateConfig> candidates;
  std::vector<ModelSpec> models;
  RemlOptions reml;

  std::string procedure = "caic";
  double selection_alpha = 0.05;
  CovariancePolicy policy = CovariancePolicy::Fixed;
  std::vector<std::string> keep{"(Intercept)"};
  std::optional<json> expected;

  std::string perspective = "conditional";
  Provenance plugin = Provenance::ModelEstimate;
  KappaVariant kappa = KappaVariant::Classical;
  ShrinkageMode shrinkage = ShrinkageMode::Working;
  bool use_gls = true;
  std::string proposal = "observed";
  double proposal_scale = 1.0;
  bool record_low_congruency = false;
  EngineOptions engine;
  std::uint64_t seed = 1;
  std::vector<json> target_specs;

  SelectionProcedure make_procedure() const;
  ModelSpec selected_model(const SelectionOutcome& o) const;
  std::vector<Target> resolve_targets(const ModelSpec& selected) const;
};

namespace {

CovariancePolicy policy_from(const std::string& s) {
  if (s == "fixed") return CovariancePolicy::Fixed;
  if (s == "refit_full") return CovariancePolicy::RefitFull;
  if (s == "refit_each_step") return CovariancePolicy::RefitEachStep;
  throw ConfigError("unknown covariance policy '" + s + "'");
}

}  // namespace

Analysis Analysis::from_json(const std::string& text, const std::string& base_dir,
                             const RunOverrides& overrides) {
  json cfg;
  try {
    cfg = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  auto impl = std::make_shared<Impl>();
  impl->config_text = text;
  if (!cfg.contains("data")) {
    throw ConfigError("config needs a data path");
  }
  std::filesystem::path data_path = cfg.at("data").get<std::string>();
  if (data_path.is_relative()) data_path = std::filesystem::path(base_dir) / data_path;
  impl->data = read_csv(data_path.string());
  impl->y = impl->data.column(get_or<std::string>(cfg, "response", "y"));
  if (cfg.contains("residual_groups")) {
    Index levels = 0;
    impl->reml.residual_group =
        group_codes(impl->data.column(cfg.at("residual_groups").get<std::string>()), &levels);
  }
  if (!cfg.contains("candidates") || cfg.at("candidates").empty()) {
    throw ConfigError("config needs at least one candidate model");
  }
  std::size_t index = 0;
  for (const auto& c : cfg.at("candidates")) {
    impl->candidates.push_back(build_candidate(c, impl->data, index++));
    impl->models.push_back(impl->candidates.back().model);
  }
  for (std::size_t a = 0; a < impl->models.size(); ++a) {
    for (std::size_t b = a + 1; b < impl->models.size(); ++b) {
      if (impl->models[a].id == impl->models[b].id) {
        throw ConfigError("duplicate candidate id '" + impl->models[a].id + "'");
      }
    }
  }

  const json sel = get_or<json>(cfg, "selection", json::object());
  impl->procedure = get_or<std::string>(sel, "procedure",
                                        impl->candidates.size() > 1 ? "caic" : "none");
  impl->selection_alpha = get_or<double>(sel, "alpha", 0.05);
  impl->policy = policy_from(get_or<std::string>(sel, "policy", "fixed"));
  impl->keep = get_or<std::vector<std::string>>(sel, "keep", impl->keep);
  if (sel.contains("expected")) impl->expected = sel.at("expected");
  if (impl->procedure != "caic" && impl->procedure != "backward" &&
      impl->procedure != "hierarchical" && impl->procedure != "none") {
    throw ConfigError("unknown selection procedure '" + impl->procedure + "'");
  }
  if ((impl->procedure == "backward" || impl->procedure == "none") &&
      impl->candidates.size() != 1) {
    throw ConfigError("procedure '" + impl->procedure + "' takes exactly one candidate");
  }
  if (impl->procedure != "hierarchical") {
    for (const auto& c : impl->candidates) {
      if (!c.rows.empty()) {
        throw ConfigError("row masks need the hierarchical procedure");
      }
    }
  }

  const json inf = get_or<json>(cfg, "inference", json::object());
  impl->perspective = get_or<std::string>(inf, "perspective", "conditional");
  if (impl->perspective != "conditional" && impl->perspective != "marginal") {
    throw ConfigError("perspective must be conditional or marginal");
  }
  impl->plugin = provenance_from_string(get_or<std::string>(inf, "plugin", "model_estimate"));
  if (impl->plugin == Provenance::Truth) {
    throw ConfigError("the truth plug-in is only available in simulations");
  }
  impl->kappa = kappa_variant_from_string(get_or<std::string>(inf, "kappa", "classical"));
  impl->shrinkage = shrinkage_mode_from_string(get_or<std::string>(inf, "shrinkage", "working"));
  impl->use_gls = get_or<bool>(inf, "use_gls", true);
  impl->proposal = get_or<std::string>(inf, "proposal", "observed");
  if (impl->proposal != "observed" && impl->proposal != "null" && impl->proposal != "mixture") {
    throw ConfigError("proposal must be observed, null or mixture");
  }
  impl->proposal_scale = get_or<double>(inf, "proposal_scale", 1.0);
  if (!(impl->proposal_scale > 0.0)) {
    throw ConfigError("proposal_scale must be positive");
  }
  const std::string low = get_or<std::string>(inf, "on_low_congruency", "error");
  if (low != "error" && low != "record") {
    throw ConfigError("on_low_congruency must be error or record");
  }
  impl->record_low_congruency = low == "record";
  EngineOptions& eo = impl->engine;
  eo.samples = overrides.samples.value_or(get_or<std::size_t>(inf, "samples", 1000));
  eo.alpha = overrides.alpha.value_or(get_or<double>(inf, "alpha", 0.05));
  eo.min_congruent = get_or<std::size_t>(inf, "min_congruent", 50);
  eo.alternative = alternative_from_string(get_or<std::string>(inf, "alternative", "two-sided"));
  eo.compute_ci = get_or<bool>(inf, "compute_ci", true);
  eo.workers = std::max(1u, overrides.workers);
  if (eo.samples == 0) throw ConfigError("samples must be positive");
  if (!(eo.alpha > 0.0 && eo.alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  impl->seed = overrides.seed.value_or(get_or<std::uint64_t>(inf, "seed", 1));
  if (inf.contains("targets")) {
    for (const auto& t : inf.at("targets")) impl->target_specs.push_back(t);
  }
  Analysis a;
  a.impl_ = impl;
  return a;
}

Analysis Analysis::from_file(const std::string& path, const RunOverrides& overrides) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config '" + path + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  const auto dir = std::filesystem::path(path).parent_path();
  return from_json(ss.str(), dir.empty() ? "." : dir.string(), overrides);
}

const std::vector<ModelSpec>& Analysis::candidates() const { return impl_->models; }
const VectorXd& Analysis::response() const { return impl_->y; }

SelectionProcedure Analysis::Impl::make_procedure() const {
  CaicOptions co;
  co.reml = reml;
  if (procedure == "caic") {
    return caic_select(models, co);
  }
  if (procedure == "hierarchical") {
    std::map<int, std::vector<MaskedCandidate>> sets;
    for (const auto& c : candidates) sets[c.set].push_back({c.model, c.rows});
    std::vector<std::vector<MaskedCandidate>> list;
    for (auto& [k, v] : sets) list.push_back(std::move(v));
    return hierarchical_select(std::move(list), co);
  }
  if (procedure == "backward") {
    BackwardOptions bo;
    bo.alpha = selection_alpha;
    bo.policy = policy;
    bo.keep = keep;
    bo.reml = reml;
    if (policy == CovariancePolicy::Fixed) {
      // estimated once on the observed response and held fixed while resampling
      bo.cov = fit_reml(models.front(), y, reml);
    }
    return backward_pvalue(models.front(), bo);
  }
  const SelectionOutcome only = make_outcome(models.front().fixed_terms(),
                                             models.front().random_terms(), models.front().id);
  return custom_procedure("no selection", [only](const VectorXd&) { return only; });
}

ModelSpec Analysis::Impl::selected_model(const SelectionOutcome& o) const {
  if (o.flagged) {
    throw NumericalError("selection on the observed response failed");
  }
  if (procedure == "backward") {
    ModelSpec m = models.front();
    for (const auto& t : models.front().fixed_terms()) {
      if (std::find(o.fixed_set.begin(), o.fixed_set.end(), t) == o.fixed_set.end()) {
        m = m.without_fixed_term(t);
      }
    }
    m.id = o.winner;
    return m;
  }
  for (const auto& m : models) {
    if (m.id == o.winner) return m;
  }
  throw Error("selected model '" + o.winner + "' is not in the registry");
}

std::vector<Target> Analysis::Impl::resolve_targets(const ModelSpec& selected) const {
  std::vector<Target> out;
  for (const auto& t : target_specs) {
    Target base;
    base.null = get_or<double>(t, "null", 0.0);
    if (t.contains("coefficient")) {
      base.kind = Target::Kind::Coefficient;
      base.term = t.at("coefficient").get<std::string>();
      if (!selected.has_fixed_term(base.term)) {
        throw ConfigError("target '" + base.term + "' is not part of the selected model");
      }
      out.push_back(base);
    } else if (t.contains("smooth")) {
      base.kind = Target::Kind::Smooth;
      base.term = t.at("smooth").get<std::string>();
      const SmoothEvaluator* ev = selected.smooth(base.term);
      if (ev == nullptr) {
        throw ConfigError("smooth target '" + base.term + "' is not part of the selected model");
      }
      std::vector<double> at;
      if (t.contains("at")) at = t.at("at").get<std::vector<double>>();
      if (t.contains("grid")) {
        const int k = t.at("grid").get<int>();
        if (k < 1) throw ConfigError("grid needs at least one location");
        for (int i = 1; i <= k; ++i) {
          at.push_back(ev->lower + (ev->upper - ev->lower) * i / (k + 1.0));
        }
      }
      if (at.empty()) throw ConfigError("smooth target '" + base.term + "' has no locations");
      for (double z : at) {
        Target s = base;
        s.at = z;
        out.push_back(s);
      }
    } else if (t.contains("group")) {
      base.kind = Target::Kind::Group;
      base.term = t.at("group").get<std::string>();
      out.push_back(base);
    } else {
      throw ConfigError("inference target of unknown kind");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json outcome_json(const SelectionOutcome& o) {
  json j;
  j["winner"] = o.winner;
  j["fixed"] = o.fixed_set;
  j["random"] = o.ranef_set;
  j["flagged"] = o.flagged;
  j["fingerprint"] = hex64(o.fingerprint());
  return j;
}

json result_json(const InferenceResult& r, const std::string& status) {
  json j;
  j["label"] = r.label;
  j["kind"] = r.group ? "group" : "scalar";
  j["status"] = status;
  j["t_obs"] = r.t_obs;
  j["null"] = r.rho0;
  j["kappa"] = r.kappa;
  j["dof"] = r.dof;
  j["p_value"] = status == "ok" ? number_or_null(r.p_value) : json(nullptr);
  j["p_naive"] = number_or_null(r.p_naive);
  j["alternative"] = to_string(r.alternative);
  if (r.ci) {
    j["ci"] = json::array({r.ci->first, r.ci->second});
  } else {
    j["ci"] = nullptr;
  }
  j["samples"] = r.n_samples;
  j["congruent"] = r.n_congruent;
  j["ess"] = r.ess;
  j["low_ess"] = r.low_ess;
  json table = json::array();
  for (const auto& row : r.table) {
    json c;
    c["mean"] = row.mean;
    c["ratio"] = row.ratio;
    c["samples"] = row.samples;
    c["congruent"] = row.congruent;
    table.push_back(c);
  }
  j["components"] = table;
  return j;
}

json covariance_json(const CovarianceModel& c) {
  json j;
  j["provenance"] = to_string(c.provenance);
  if (const auto s2 = c.error.spherical_variance()) {
    j["residual_variance"] = *s2;
  } else {
    const MatrixXd r = c.error.to_dense();
    j["residual_variance"] = std::vector<double>(r.diagonal().data(),
                                                 r.diagonal().data() + r.rows());
  }
  json blocks = json::array();
  for (const auto& b : c.block_cov) {
    json m = json::array();
    for (Index i = 0; i < b.rows(); ++i) {
      m.push_back(std::vector<double>(b.row(i).data(), b.row(i).data() + 0));
      for (Index k = 0; k < b.cols(); ++k) m.back().push_back(b(i, k));
    }
    blocks.push_back(m);
  }
  j["ranef_blocks"] = blocks;
  j["boundary"] = c.boundary;
  return j;
}

std::string format_number(double v, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

// Component means are shown as multiples of t_obs, in thirds when they fit.
std::string ratio_label(double ratio) {
  const double thirds = ratio * 3.0;
  const double k = std::round(thirds);
  if (std::abs(thirds - k) < 1e-9) {
    if (k == 0.0) return "0";
    if (k == 3.0) return "t";
    return format_number(k, 0) + "/3 * t";
  }
  return format_number(ratio, 3) + " * t";
}

}  // namespace

std::string congruency_table(const std::vector<InferenceResult>& results) {
  std::vector<const InferenceResult*> cols;
  for (const auto& r : results) {
    if (!r.group) cols.push_back(&r);
  }
  if (cols.empty()) return "";
  std::size_t rows = 0;
  for (const auto* r : cols) rows = std::max(rows, r->table.size());
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"target"};
  for (const auto* r : cols) header.push_back(r->label);
  cells.push_back(header);
  for (std::size_t k = 0; k < rows; ++k) {
    std::vector<std::string> line;
    const auto* first = cols.front();
    line.push_back(k < first->table.size() ? ratio_label(first->table[k].ratio)
                                           : "component " + std::to_string(k + 1));
    for (const auto* r : cols) {
      if (k >= r->table.size() || r->n_congruent == 0) {
        line.push_back("-");
        continue;
      }
      const double share = 100.0 * static_cast<double>(r->table[k].congruent) /
                           static_cast<double>(r->n_congruent);
      line.push_back(format_number(share, 0) + "%");
    }
    cells.push_back(line);
  }
  std::vector<std::string> total{"Total"};
  std::vector<std::string> pv{"p-value"};
  for (const auto* r : cols) {
    total.push_back(std::to_string(r->n_congruent));
    pv.push_back(format_number(r->p_value, 3));
  }
  cells.push_back(total);
  cells.push_back(pv);
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& line : cells) {
    for (std::size_t j = 0; j < line.size(); ++j) width[j] = std::max(width[j], line[j].size());
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i == cells.size() - 2 || i == 1) {
      std::size_t len = 0;
      for (auto w : width) len += w + 3;
      os << std::string(len, '-') << '\n';
    }
    for (std::size_t j = 0; j < cells[i].size(); ++j) {
      os << std::setw(static_cast<int>(width[j])) << cells[i][j] << (j + 1 < cells[i].size() ? " | " : "");
    }
    os << '\n';
  }
  return os.str();
}

std::string Analysis::fit() const {
  json out;
  json fits = json::array();
  for (const auto& m : impl_->models) {
    json f;
    f["id"] = m.id;
    try {
      const CovarianceModel cov = fit_reml(m, impl_->y, impl_->reml);
      const FitResult fr = solve_blup(m, cov, impl_->y);
      f["fixed_labels"] = m.fixed_labels;
      f["beta"] = std::vector<double>(fr.beta.data(), fr.beta.data() + fr.beta.size());
      f["covariance"] = covariance_json(cov);
      f["edf"] = fr.edf;
      f["loglik"] = fr.loglik;
      f["caic"] = caic(m, cov, impl_->y);
      f["status"] = "ok";
    } catch (const NumericalError& e) {
      f["status"] = "failed";
      f["error"] = e.what();
    }
    fits.push_back(f);
  }
  out["fits"] = fits;
  return out.dump(2) + "\n";
}

std::string Analysis::select() const {
  const SelectionProcedure proc = impl_->make_procedure();
  json out;
  out["procedure"] = impl_->procedure;
  out["description"] = proc.description;
  out["outcome"] = outcome_json(proc(impl_->y));
  return out.dump(2) + "\n";
}

InferOutput Analysis::infer() const {
  const Impl& a = *impl_;
  const SelectionProcedure proc = a.make_procedure();
  const SelectionOutcome observed = proc(a.y);
  if (a.expected) {
    const auto fixed = get_or<std::vector<std::string>>(*a.expected, "fixed", observed.fixed_set);
    const auto winner = get_or<std::string>(*a.expected, "winner", observed.winner);
    if (make_outcome(fixed, observed.ranef_set, winner) !=
        make_outcome(observed.fixed_set, observed.ranef_set, observed.winner)) {
      throw ConfigError("selection on the observed data (" + observed.winner +
                        ") differs from the declared outcome");
    }
  }
  const ModelSpec selected = a.selected_model(observed);
  PluginContext ctx;
  ctx.selected = &selected;
  ctx.y = a.y;
  ctx.reml = a.reml;
  CovarianceModel cov = plugin_covariance(a.plugin, ctx);
  if (a.plugin == Provenance::VarY && a.perspective == "conditional" && selected.q() > 0) {
    // Var(Y) only replaces R; the working G comes from the selected model
    CovarianceModel est = plugin_covariance(Provenance::ModelEstimate, ctx);
    est.error = cov.error;
    est.provenance = Provenance::VarY;
    cov = est;
  }
  const bool marginal = a.perspective == "marginal";
  const std::vector<Target> targets = a.resolve_targets(selected);

  std::vector<InferenceResult> results;
  json records = json::array();
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const Target& t = targets[k];
    const std::uint64_t seed = substream(a.seed, k);
    TestDirection dir;
    if (t.kind == Target::Kind::Group) {
      const MatrixXd metric =
          marginal ? marginal_covariance(selected, cov) : cov.error.to_dense();
      dir = group_direction(selected, t.term, metric);
    } else if (t.kind == Target::Kind::Smooth) {
      if (marginal) throw ConfigError("smooth targets need the conditional perspective");
      dir = spline_pointwise(selected, cov, t.term, t.at, a.kappa, a.shrinkage, t.null);
    } else if (marginal) {
      dir = lm_marginal(selected, cov, t.term, a.use_gls, t.null);
    } else {
      dir = conditional_coefficient(selected, cov, t.term, a.kappa, a.shrinkage, t.null);
    }
    const double t_obs = dir.statistic(a.y);
    ProposalSpec prop;
    if (dir.kind == TestDirection::Kind::Group) {
      prop = ProposalSpec::group_default(t_obs, dir.scale, dir.dof, seed);
    } else if (a.proposal == "null") {
      prop = ProposalSpec::null_centered(dir.rho0, dir.kappa * a.proposal_scale, seed);
    } else if (a.proposal == "mixture") {
      prop = ProposalSpec::mixture_preset(t_obs, dir.kappa * a.proposal_scale, seed);
    } else {
      prop = ProposalSpec::obs_centered(t_obs, dir.kappa * a.proposal_scale, seed);
    }
    const CongruencySet set =
        sample_congruency(dir, proc, a.y, prop, a.engine.samples, a.engine.workers, &observed);
    InferenceResult r;
    std::string status = "ok";
    try {
      r = dir.kind == TestDirection::Kind::Group ? infer_group(set, dir.scale, dir.dof, a.engine)
                                                 : infer_scalar(set, dir.kappa, dir.rho0, a.engine);
    } catch (const LowCongruencyError&) {
      if (!a.record_low_congruency) throw;
      EngineOptions relaxed = a.engine;
      relaxed.min_congruent = 0;
      relaxed.compute_ci = false;
      r = dir.kind == TestDirection::Kind::Group ? infer_group(set, dir.scale, dir.dof, relaxed)
                                                 : infer_scalar(set, dir.kappa, dir.rho0, relaxed);
      status = "low_congruency";
    } catch (const NumericalError&) {
      if (!a.record_low_congruency) throw;
      EngineOptions no_ci = a.engine;
      no_ci.compute_ci = false;
      r = infer_scalar(set, dir.kappa, dir.rho0, no_ci);
      status = "ci_not_bracketed";
    }
    r.label = t.kind == Target::Kind::Smooth
                  ? t.term + "@" + format_number(t.at, 4)
                  : dir.label;
    json rec = result_json(r, status);
    rec["target"] = t.kind == Target::Kind::Coefficient ? "coefficient"
                    : t.kind == Target::Kind::Smooth    ? "smooth"
                                                        : "group";
    if (t.kind == Target::Kind::Smooth) rec["at"] = t.at;
    records.push_back(rec);
    results.push_back(std::move(r));
  }

  json bundle;
  bundle["schema_version"] = 1;
  json& prov = bundle["provenance"];
  prov["seed"] = a.seed;
  prov["samples"] = a.engine.samples;
  prov["alpha"] = a.engine.alpha;
  prov["perspective"] = a.perspective;
  prov["plugin"] = to_string(a.plugin);
  prov["kappa"] = to_string(a.kappa);
  prov["shrinkage"] = to_string(a.shrinkage);
  prov["proposal"] = a.proposal;
  prov["proposal_scale"] = a.proposal_scale;
  prov["min_congruent"] = a.engine.min_congruent;
  prov["selection_procedure"] = a.procedure;
  prov["selection_fingerprint"] = hex64(observed.fingerprint());
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : a.config_text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  prov["config_fingerprint"] = hex64(h);
  bundle["selection"] = outcome_json(observed);
  bundle["covariance"] = covariance_json(cov);
  bundle["results"] = records;
  return InferOutput{bundle.dump(2) + "\n", congruency_table(results)};
}

}  // namespace selinf
