/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "ceval/ceval.h"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <new>
#include <string>

#include "ceval/config.hpp"
#include "ceval/harness.hpp"
#include "ceval/theory.hpp"

struct ceval_config {
  ceval::RunConfig cfg;
};

struct ceval_results {
  ceval::SweepResult result;
};

namespace {

thread_local std::string g_last_error;

int set_error(int code, const std::string& msg) {
  g_last_error = msg;
  return code;
}

template <class F>
int guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return CEVAL_OK;
  } catch (const ceval::Error& e) {
    return set_error(static_cast<int>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(CEVAL_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(CEVAL_E_INTERNAL, e.what());
  } catch (...) {
    return set_error(CEVAL_E_INTERNAL, "unknown error");
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void need(const void* p, const char* what) {
  if (!p) ceval::fail(ceval::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

ceval::CellKey make_key(const ceval::RunConfig& cfg, double beta, int n_obs, int n_exp, const char* mode) {
  need(mode, "mode");
  ceval::CellKey k;
  k.beta = beta;
  k.n_obs = n_obs;
  k.n_exp = n_exp;
  k.mode = ceval::RewardMode::parse(mode);
  k.router = cfg.grid.router;
  ceval::require(beta >= 0.0 && beta <= 1.0, "beta must lie in [0, 1]");
  ceval::require(n_obs >= 1, "n_obs must be positive");
  ceval::require(n_exp >= cfg.k_cf && n_exp >= 2, "n_exp must be at least k_cf");
  return k;
}

std::string failures_text(const ceval::SweepResult& r) {
  std::string s;
  for (const auto& f : r.failures)
    s += "seed " + std::to_string(f.seed_index) + " " + f.cell + (f.method.empty() ? "" : " " + f.method) + ": " +
         f.message + "\n";
  return s;
}

}  // namespace

extern "C" {

const char* ceval_version(void) { return ceval::kVersion; }

const char* ceval_last_error(void) { return g_last_error.c_str(); }

void ceval_string_free(char* s) { std::free(s); }

int ceval_config_preset(const char* preset, ceval_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    auto c = new ceval_config{ceval::default_config(preset ? preset : "synthetic")};
    *out = c;
  });
}

int ceval_config_from_json(const char* json, ceval_config** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    *out = nullptr;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
      ceval::fail(ceval::ErrorCode::Config, std::string("config is not valid JSON: ") + e.what());
    }
    *out = new ceval_config{ceval::config_from_json(j)};
  });
}

int ceval_config_load(const char* path, ceval_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new ceval_config{ceval::load_config(path)};
  });
}

int ceval_config_to_json(const ceval_config* cfg, char** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = dup(ceval::config_to_json(cfg->cfg).dump(2) + "\n");
  });
}

int ceval_config_set_threads(ceval_config* cfg, int threads) {
  return guarded([&] {
    need(cfg, "config");
    ceval::require(threads >= 1, "threads must be at least 1");
    cfg->cfg.threads = threads;
  });
}

int ceval_config_set_master_seed(ceval_config* cfg, uint64_t master_seed) {
  return guarded([&] {
    need(cfg, "config");
    cfg->cfg.master_seed = master_seed;
  });
}

int ceval_config_set_seeds(ceval_config* cfg, int seeds) {
  return guarded([&] {
    need(cfg, "config");
    ceval::require(seeds >= 1, "seeds must be at least 1");
    cfg->cfg.seeds = seeds;
  });
}

void ceval_config_free(ceval_config* cfg) { delete cfg; }

int ceval_run_sweep(const ceval_config* cfg, const char* out_dir, int verbose, ceval_results** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = nullptr;
    ceval::Logger log;
    if (verbose) log = [](const std::string& s) { std::cerr << s << std::endl; };
    auto r = new ceval_results{ceval::run_sweep(cfg->cfg, out_dir ? out_dir : "", log)};
    *out = r;
  });
}

int ceval_run_cell(const ceval_config* cfg, double beta, int n_obs, int n_exp, const char* mode,
                   uint64_t seed_index, ceval_results** out) {
  return guarded([&] {
    need(cfg, "config");
    need(out, "out");
    *out = nullptr;
    const auto key = make_key(cfg->cfg, beta, n_obs, n_exp, mode);
    auto so = ceval::run_cell(cfg->cfg, key, seed_index);
    auto r = new ceval_results;
    r->result.reports = std::move(so.reports);
    r->result.traces = std::move(so.traces);
    r->result.failures = std::move(so.failures);
    *out = r;
  });
}

size_t ceval_results_count(const ceval_results* r) { return r ? r->result.reports.size() : 0; }

size_t ceval_results_failures(const ceval_results* r) { return r ? r->result.failures.size() : 0; }

int ceval_results_csv(const ceval_results* r, char** out) {
  return guarded([&] {
    need(r, "results");
    need(out, "out");
    std::string s = ceval::cell_csv_header();
    for (const auto& rep : r->result.reports) s += ceval::cell_csv_row(rep);
    *out = dup(s);
  });
}

int ceval_results_aggregate_csv(const ceval_results* r, char** out) {
  return guarded([&] {
    need(r, "results");
    need(out, "out");
    *out = dup(ceval::aggregate_csv(ceval::aggregate(r->result.reports)));
  });
}

int ceval_results_failures_text(const ceval_results* r, char** out) {
  return guarded([&] {
    need(r, "results");
    need(out, "out");
    *out = dup(failures_text(r->result));
  });
}

void ceval_results_free(ceval_results* r) { delete r; }

int ceval_report(const char* run_dir, const char* out_dir, char** aggregate_csv) {
  return guarded([&] {
    need(run_dir, "run_dir");
    const auto agg = ceval::report_dir(run_dir, out_dir ? out_dir : "");
    if (aggregate_csv) *aggregate_csv = dup(ceval::aggregate_csv(agg));
  });
}

int ceval_generate(const ceval_config* cfg, double beta, int n_obs, int n_exp, const char* mode,
                   uint64_t seed_index, const char* out_dir) {
  return guarded([&] {
    need(cfg, "config");
    need(out_dir, "out_dir");
    const auto key = make_key(cfg->cfg, beta, n_obs, n_exp, mode);
    ceval::write_generated(cfg->cfg, key, seed_index, out_dir);
  });
}

int ceval_check(int instances, uint64_t seed, char** report, int* all_passed) {
  return guarded([&] {
    need(report, "report");
    const auto checks = ceval::run_theory_suite(instances, seed);
    std::string s;
    bool ok = true;
    for (const auto& c : checks) {
      s += ceval::format_check(c) + "\n";
      ok = ok && c.passed;
    }
    *report = dup(s);
    if (all_passed) *all_passed = ok ? 1 : 0;
  });
}

}  // extern "C"
