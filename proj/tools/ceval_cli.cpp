/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ceval/ceval.h"

namespace {

struct Common {
  std::string config;
  std::string preset = "synthetic";
  std::string out;
  std::optional<int> threads;
  std::optional<std::uint64_t> master_seed;
  std::optional<int> seeds;
};

int report_error(int rc) {
  std::cerr << "error (" << rc << "): " << ceval_last_error() << "\n";
  return rc;
}

void print_and_free(char* s, std::FILE* to = stdout) {
  if (s) {
    std::fputs(s, to);
    ceval_string_free(s);
  }
}

// Loads the config and applies command-line overrides; returns a status code.
int make_config(const Common& c, ceval_config** cfg) {
  int rc = c.config.empty() ? ceval_config_preset(c.preset.c_str(), cfg) : ceval_config_load(c.config.c_str(), cfg);
  if (rc != CEVAL_OK) return rc;
  if (c.threads && (rc = ceval_config_set_threads(*cfg, *c.threads)) != CEVAL_OK) return rc;
  if (c.master_seed && (rc = ceval_config_set_master_seed(*cfg, *c.master_seed)) != CEVAL_OK) return rc;
  if (c.seeds && (rc = ceval_config_set_seeds(*cfg, *c.seeds)) != CEVAL_OK) return rc;
  return CEVAL_OK;
}

void add_common(CLI::App* app, Common& c, bool with_out) {
  app->add_option("--config", c.config, "JSON config file");
  app->add_option("--preset", c.preset, "preset when no config is given")
      ->check(CLI::IsMember({"synthetic", "rubric", "coding"}));
  if (with_out) app->add_option("--out", c.out, "output directory");
  app->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--master-seed", c.master_seed, "master seed");
  app->add_option("--seeds", c.seeds, "number of seeds")->check(CLI::PositiveNumber);
}

struct CellArgs {
  double beta = 0.5;
  int n_obs = 2000;
  int n_exp = 100;
  std::string mode = "scalar";
  std::uint64_t seed_index = 0;
};

void add_cell(CLI::App* app, CellArgs& a) {
  app->add_option("--beta", a.beta, "confounding strength")->check(CLI::Range(0.0, 1.0));
  app->add_option("--n-obs", a.n_obs, "OBS rows")->check(CLI::PositiveNumber);
  app->add_option("--n-exp", a.n_exp, "EXP rows")->check(CLI::PositiveNumber);
  app->add_option("--mode", a.mode, "reward mode key (scalar, rubric_smooth, rubric_sharp, coding_a<..>_w<..>)");
  app->add_option("--seed-index", a.seed_index, "seed index");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ceval: confounded evaluation of agent routers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ceval_version()));

  Common c_sweep, c_cell, c_gen, c_print;
  CellArgs a_cell, a_gen;
  std::string report_run, report_out;
  int check_instances = 20;
  std::uint64_t check_seed = 7;
  bool quiet = false;

  auto* sweep = app.add_subcommand("sweep", "run every cell and seed of a grid");
  add_common(sweep, c_sweep, true);
  sweep->add_flag("--quiet", quiet, "no progress lines");
  auto* cell = app.add_subcommand("run-cell", "run one cell for one seed and print CSV rows");
  add_common(cell, c_cell, false);
  add_cell(cell, a_cell);
  auto* gen = app.add_subcommand("generate", "write OBS and EXP rows of one cell");
  add_common(gen, c_gen, true);
  add_cell(gen, a_gen);
  auto* report = app.add_subcommand("report", "re-aggregate the cell files of a finished run");
  report->add_option("--run", report_run, "run directory with cells/")->required();
  report->add_option("--out", report_out, "where to write the summary tables");
  auto* check = app.add_subcommand("check", "numerical checks of the risk identities");
  check->add_option("--instances", check_instances, "random instances per check")->check(CLI::PositiveNumber);
  check->add_option("--seed", check_seed, "seed");
  auto* print = app.add_subcommand("print-config", "print the resolved configuration");
  add_common(print, c_print, false);

  CLI11_PARSE(app, argc, argv);

  ceval_config* cfg = nullptr;
  int rc = CEVAL_OK;
  if (*sweep) {
    if (c_sweep.out.empty()) {
      std::cerr << "error: sweep requires --out\n";
      return CEVAL_E_INVALID_ARGUMENT;
    }
    if ((rc = make_config(c_sweep, &cfg)) != CEVAL_OK) return report_error(rc);
    ceval_results* res = nullptr;
    rc = ceval_run_sweep(cfg, c_sweep.out.c_str(), quiet ? 0 : 1, &res);
    ceval_config_free(cfg);
    if (rc != CEVAL_OK) return report_error(rc);
    char* agg = nullptr;
    if (ceval_results_count(res) > 0 && ceval_results_aggregate_csv(res, &agg) == CEVAL_OK) print_and_free(agg);
    const auto failures = ceval_results_failures(res);
    if (failures > 0) {
      char* text = nullptr;
      if (ceval_results_failures_text(res, &text) == CEVAL_OK) print_and_free(text, stderr);
    }
    std::cerr << ceval_results_count(res) << " reports, " << failures << " failures, written to " << c_sweep.out
              << "\n";
    ceval_results_free(res);
    return failures > 0 ? CEVAL_E_CHECK_FAILED : CEVAL_OK;
  }
  if (*cell) {
    if ((rc = make_config(c_cell, &cfg)) != CEVAL_OK) return report_error(rc);
    ceval_results* res = nullptr;
    rc = ceval_run_cell(cfg, a_cell.beta, a_cell.n_obs, a_cell.n_exp, a_cell.mode.c_str(), a_cell.seed_index, &res);
    ceval_config_free(cfg);
    if (rc != CEVAL_OK) return report_error(rc);
    char* csv = nullptr;
    if ((rc = ceval_results_csv(res, &csv)) != CEVAL_OK) {
      ceval_results_free(res);
      return report_error(rc);
    }
    print_and_free(csv);
    const auto failures = ceval_results_failures(res);
    if (failures > 0) {
      char* text = nullptr;
      if (ceval_results_failures_text(res, &text) == CEVAL_OK) print_and_free(text, stderr);
    }
    ceval_results_free(res);
    return failures > 0 ? CEVAL_E_CHECK_FAILED : CEVAL_OK;
  }
  if (*gen) {
    if (c_gen.out.empty()) {
      std::cerr << "error: generate requires --out\n";
      return CEVAL_E_INVALID_ARGUMENT;
    }
    if ((rc = make_config(c_gen, &cfg)) != CEVAL_OK) return report_error(rc);
    rc = ceval_generate(cfg, a_gen.beta, a_gen.n_obs, a_gen.n_exp, a_gen.mode.c_str(), a_gen.seed_index,
                        c_gen.out.c_str());
    ceval_config_free(cfg);
    if (rc != CEVAL_OK) return report_error(rc);
    std::cerr << "wrote obs.csv, exp.csv and features.json to " << c_gen.out << "\n";
    return CEVAL_OK;
  }
  if (*report) {
    char* agg = nullptr;
    rc = ceval_report(report_run.c_str(), report_out.empty() ? nullptr : report_out.c_str(), &agg);
    if (rc != CEVAL_OK) return report_error(rc);
    print_and_free(agg);
    return CEVAL_OK;
  }
  if (*check) {
    char* text = nullptr;
    int ok = 0;
    rc = ceval_check(check_instances, check_seed, &text, &ok);
    if (rc != CEVAL_OK) return report_error(rc);
    print_and_free(text);
    return ok ? CEVAL_OK : CEVAL_E_CHECK_FAILED;
  }
  if (*print) {
    if ((rc = make_config(c_print, &cfg)) != CEVAL_OK) return report_error(rc);
    char* text = nullptr;
    rc = ceval_config_to_json(cfg, &text);
    ceval_config_free(cfg);
    if (rc != CEVAL_OK) return report_error(rc);
    print_and_free(text);
    return CEVAL_OK;
  }
  return CEVAL_OK;
}
