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

#include <optional>
#include <string>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "selinf/analysis.hpp"
#include "selinf/engine.hpp"
#include "selinf/error.hpp"
#include "selinf/oracle.hpp"
#include "selinf/parallel.hpp"
#include "selinf/simharness.hpp"
#include "selinf/stats.hpp"

namespace py = pybind11;

namespace {

selinf::RunOverrides overrides(std::optional<std::uint64_t> seed, std::optional<std::size_t> samples,
                               std::optional<double> alpha, unsigned workers) {
  selinf::RunOverrides o;
  o.seed = seed;
  o.samples = samples;
  o.alpha = alpha;
  o.workers = workers > 0 ? workers : selinf::default_workers();
  return o;
}

py::dict oracle_case(const selinf::OracleCase& c) {
  py::dict d;
  d["rule"] = c.rule;
  d["rho"] = c.rho;
  d["kappa"] = c.kappa;
  d["dof"] = c.dof;
  d["t_obs"] = c.t_obs;
  d["set"] = c.set;
  d["exact"] = c.exact;
  d["estimate"] = c.estimate;
  d["congruent"] = c.congruent;
  d["error"] = c.error();
  return d;
}

}  // namespace

PYBIND11_MODULE(_selinf, m) {
  m.doc() = "Selective inference after model selection in additive and mixed models";

  auto base = py::register_exception<selinf::Error>(m, "SelinfError");
  py::register_exception<selinf::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<selinf::NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<selinf::LowCongruencyError>(m, "LowCongruencyError", base.ptr());
  py::register_exception<selinf::DimensionError>(m, "DimensionError", base.ptr());


  m.def(
      "infer",
      [](const std::string& config, std::optional<std::uint64_t> seed,
         std::optional<std::size_t> samples, std::optional<double> alpha, unsigned workers) {
        py::gil_scoped_release release;
        const auto out =
            selinf::Analysis::from_file(config, overrides(seed, samples, alpha, workers)).infer();
        return std::make_pair(out.bundle, out.table);
      },
      py::arg("config"), py::kw_only(), py::arg("seed") = py::none(),
      py::arg("samples") = py::none(), py::arg("alpha") = py::none(), py::arg("workers") = 0u,
      "Run a config file; returns (bundle_json, congruency_table).");

  m.def(
      "select",
      [](const std::string& config) {
        py::gil_scoped_release release;
        return selinf::Analysis::from_file(config, overrides({}, {}, {}, 1)).select();
      },
      py::arg("config"));

  m.def(
      "fit",
      [](const std::string& config) {
        py::gil_scoped_release release;
        return selinf::Analysis::from_file(config, overrides({}, {}, {}, 1)).fit();
      },
      py::arg("config"));

  m.def(
      "simulate",
      [](const std::string& design, double snr, double sigma2, std::size_t replicates,
         std::size_t samples, std::vector<std::string> plugins,
         std::vector<std::string> perspectives, std::vector<std::string> kappas,
         std::vector<std::string> shrinkage, bool low_signal, std::uint64_t seed,
         unsigned workers) {
        selinf::SimDesign d;
        d.design_id = design;
        d.snr = snr;
        d.sigma2 = sigma2;
        d.replicates = replicates;
        d.samples = samples;
        d.low_signal = low_signal;
        d.seed = seed;
        d.workers = workers > 0 ? workers : selinf::default_workers();
        d.plugins.clear();
        for (const auto& p : plugins) d.plugins.push_back(selinf::provenance_from_string(p));
        d.perspectives.clear();
        for (const auto& p : perspectives) {
          d.perspectives.push_back(selinf::perspective_from_string(p));
        }
        d.kappas.clear();
        for (const auto& k : kappas) d.kappas.push_back(selinf::kappa_variant_from_string(k));
        d.shrinkage.clear();
        for (const auto& s : shrinkage) {
          d.shrinkage.push_back(selinf::shrinkage_mode_from_string(s));
        }
        d.validate();
        py::gil_scoped_release release;
        const auto report = selinf::run_study(d);
        return std::make_pair(report.to_csv(), report.to_json());
      },
      py::arg("design"), py::kw_only(), py::arg("snr") = 4.0, py::arg("sigma2") = 1.0,
      py::arg("replicates") = 200, py::arg("samples") = 200,
      py::arg("plugins") = std::vector<std::string>{"truth"},
      py::arg("perspectives") = std::vector<std::string>{"conditional"},
      py::arg("kappas") = std::vector<std::string>{"classical"},
      py::arg("shrinkage") = std::vector<std::string>{"working"}, py::arg("low_signal") = false,
      py::arg("seed") = 20240611, py::arg("workers") = 0u,
      "Run a simulation study; returns (csv, json).");

  m.def(
      "oracle_suite",
      [](const std::string& kind, std::size_t samples, std::size_t configs, std::uint64_t seed,
         unsigned workers) {
        selinf::OracleOptions o;
        o.samples = samples;
        o.configs_per_rule = configs;
        o.seed = seed;
        o.workers = workers > 0 ? workers : selinf::default_workers();
        std::vector<selinf::OracleCase> cases;
        {
          py::gil_scoped_release release;
          if (kind == "normal") {
            cases = selinf::normal_oracle_suite(o);
          } else if (kind == "chi") {
            cases = selinf::chi_oracle_suite(o);
          } else {
            throw selinf::ConfigError("oracle kind must be normal or chi");
          }
        }
        py::list out;
        for (const auto& c : cases) out.append(oracle_case(c));
        return out;
      },
      py::arg("kind"), py::kw_only(), py::arg("samples") = 100000, py::arg("configs") = 10,
      py::arg("seed") = 1, py::arg("workers") = 0u);

  m.def("truncated_normal_survival", &selinf::truncated_normal_survival, py::arg("t"),
        py::arg("rho"), py::arg("kappa"), py::arg("intervals"),
        "P(T > t | T in intervals) for T ~ N(rho, kappa).");
  m.def("truncated_chi_survival", &selinf::truncated_chi_survival, py::arg("t"),
        py::arg("scale"), py::arg("dof"), py::arg("intervals"));

  m.def(
      "ks_uniform",
      [](std::vector<double> sample) {
        const auto r = selinf::ks_uniform(std::move(sample));
        return std::make_pair(r.statistic, r.p_value);
      },
      py::arg("sample"), "Kolmogorov-Smirnov test against U(0, 1): (D, p).");
}
