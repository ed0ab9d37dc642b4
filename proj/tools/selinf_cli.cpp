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

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "selinf/analysis.hpp"
#include "selinf/error.hpp"
#include "selinf/oracle.hpp"
#include "selinf/parallel.hpp"
#include "selinf/simharness.hpp"

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kLowCongruency = 3, kNumerical = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::optional<double> alpha;
  unsigned workers = 0;
  std::string output;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config) {
  auto* opt = cmd->add_option("--config", c.config, "Analysis config (JSON)");
  if (needs_config) opt->required();
  cmd->add_option("--seed", c.seed, "Root seed");
  cmd->add_option("--samples,-B", c.samples, "Monte Carlo samples per target");
  cmd->add_option("--alpha", c.alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--workers", c.workers, "Worker threads (default: SELINF_WORKERS or 1)");
}

unsigned workers_of(const Common& c) { return c.workers > 0 ? c.workers : selinf::default_workers(); }

selinf::RunOverrides overrides_of(const Common& c) {
  selinf::RunOverrides o;
  o.seed = c.seed;
  o.samples = c.samples;
  o.alpha = c.alpha;
  o.workers = workers_of(c);
  return o;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw selinf::ConfigError("cannot write '" + path + "'");
  out << text;
}

int run_oracle(const Common& c) {
  selinf::OracleOptions opts;
  opts.samples = c.samples.value_or(100000);
  opts.seed = c.seed.value_or(1);
  opts.workers = workers_of(c);
  const double tol = 0.005;
  bool ok = true;
  auto report = [&](const char* name, const std::vector<selinf::OracleCase>& cases) {
    double worst = 0.0;
    for (const auto& k : cases) {
      worst = std::max(worst, k.error());
      std::printf("%-6s %-18s w=%-2ld t=%8.4f exact=%.5f mc=%.5f err=%.5f\n", name,
                  k.rule.c_str(), static_cast<long>(k.dof), k.t_obs, k.exact, k.estimate,
                  k.error());
    }
    const bool pass = worst <= tol;
    ok = ok && pass;
    std::printf("%s: %zu cases, max error %.5f (tolerance %.3f) %s\n", name, cases.size(), worst,
                tol, pass ? "PASS" : "FAIL");
  };
  const auto t0 = std::chrono::steady_clock::now();
  report("normal", selinf::normal_oracle_suite(opts));
  report("chi", selinf::chi_oracle_suite(opts));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("elapsed %.1f s\n", secs);
  return ok ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective inference after model selection in additive and mixed models"};
  app.require_subcommand(1);

  Common fit_c, sel_c, inf_c, ora_c;
  auto* fit = app.add_subcommand("fit", "Fit every candidate model by REML");
  add_common(fit, fit_c, true);
  fit->add_option("--output,-o", fit_c.output, "Output file (default stdout)");

  auto* sel = app.add_subcommand("select", "Run the selection procedure on the observed data");
  add_common(sel, sel_c, true);
  sel->add_option("--output,-o", sel_c.output, "Output file (default stdout)");

  auto* inf = app.add_subcommand("infer", "Selective p-values and intervals for the targets");
  add_common(inf, inf_c, true);
  inf->add_option("--output,-o", inf_c.output, "Result bundle (default stdout)");
  std::string table_path;
  inf->add_option("--table", table_path, "Write the congruency table here");

  auto* ora = app.add_subcommand("oracle-check", "Compare Monte Carlo p-values with closed forms");
  add_common(ora, ora_c, false);

  Common sim_c;
  std::string design;
  double snr = 4.0;
  double sigma2 = 1.0;
  std::optional<std::size_t> replicates;
  std::string prefix;
  bool full_scale = false;
  bool low_signal = false;
  bool dry_run = false;
  std::vector<std::string> plugins{"truth"};
  std::vector<std::string> perspectives;
  std::vector<std::string> kappas{"classical"};
  std::vector<std::string> shrinkage{"working"};
  auto* sim = app.add_subcommand("simulate", "Run a simulation study");
  add_common(sim, sim_c, false);
  sim->add_option("design", design, "lmm51 or am52")->required()->check(CLI::IsMember({"lmm51", "am52"}));
  sim->add_option("--snr", snr, "Signal-to-noise ratio (lmm51: 2 or 4)");
  sim->add_option("--sigma2", sigma2, "Residual variance (am52: 1 or 10)");
  sim->add_option("--replicates", replicates, "Replicates (lmm51: conditioned replicates)");
  sim->add_option("--plugins", plugins, "truth, model_estimate, icm, var_y");
  sim->add_option("--perspectives", perspectives, "marginal, conditional");
  sim->add_option("--kappa", kappas, "classical, bayesian");
  sim->add_option("--shrinkage", shrinkage, "working, unpenalized");
  sim->add_flag("--low-signal", low_signal, "lmm51 with smaller effects");
  sim->add_flag("--full-scale", full_scale, "Use B = 500 samples per test");
  sim->add_flag("--dry-run", dry_run, "Print the resolved design and exit");
  sim->add_option("--output,-o", prefix, "Output prefix for .csv and .json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*fit) {
      write_text(fit_c.output,
                 selinf::Analysis::from_file(fit_c.config, overrides_of(fit_c)).fit());
    } else if (*sel) {
      write_text(sel_c.output,
                 selinf::Analysis::from_file(sel_c.config, overrides_of(sel_c)).select());
    } else if (*inf) {
      const auto out = selinf::Analysis::from_file(inf_c.config, overrides_of(inf_c)).infer();
      write_text(inf_c.output, out.bundle);
      if (!table_path.empty()) {
        write_text(table_path, out.table);
      } else if (!inf_c.output.empty() && inf_c.output != "-") {
        std::cout << out.table;
      }
    } else if (*ora) {
      return run_oracle(ora_c);
    } else if (*sim) {
      selinf::SimDesign d;
      d.design_id = design;
      d.snr = snr;
      d.sigma2 = sigma2;
      d.low_signal = low_signal;
      d.replicates = replicates.value_or(design == "am52" ? 500 : 200);
      d.samples = sim_c.samples.value_or(full_scale ? 500 : 200);
      if (sim_c.alpha) d.alpha = *sim_c.alpha;
      if (sim_c.seed) d.seed = *sim_c.seed;
      d.workers = workers_of(sim_c);
      d.plugins.clear();
      for (const auto& p : plugins) d.plugins.push_back(selinf::provenance_from_string(p));
      if (!perspectives.empty()) {
        d.perspectives.clear();
        for (const auto& p : perspectives) d.perspectives.push_back(selinf::perspective_from_string(p));
      } else if (design == "am52") {
        d.perspectives = {selinf::Perspective::Conditional};
      }
      d.kappas.clear();
      for (const auto& k : kappas) d.kappas.push_back(selinf::kappa_variant_from_string(k));
      d.shrinkage.clear();
      for (const auto& s : shrinkage) d.shrinkage.push_back(selinf::shrinkage_mode_from_string(s));
      d.validate();
      if (dry_run) {
        std::printf("design=%s snr=%g sigma2=%g replicates=%zu samples=%zu workers=%u seed=%llu\n",
                    d.design_id.c_str(), d.snr, d.sigma2, d.replicates, d.samples, d.workers,
                    static_cast<unsigned long long>(d.seed));
        return kOk;
      }
      if (prefix.empty()) throw selinf::ConfigError("simulate needs --output PREFIX");
      const auto report = selinf::run_study(d);
      write_text(prefix + ".csv", report.to_csv());
      write_text(prefix + ".json", report.to_json());
      std::printf("%zu records from %zu replicates (%zu attempted)\n", report.records.size(),
                  report.conditioned, report.attempted);
    }
  } catch (const selinf::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const selinf::LowCongruencyError& e) {
    std::fprintf(stderr, "low congruency: %s\n", e.what());
    return kLowCongruency;
  } catch (const selinf::NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const selinf::DimensionError& e) {
    std::fprintf(stderr, "dimension error: %s\n", e.what());
    return kFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kOk;
}
