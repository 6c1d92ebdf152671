/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <string>

#include "ceval/ceval.h"

namespace {

const char* kTiny = R"({
  "seeds": 1,
  "grid": {"betas": [0.5], "n_obs": [400], "n_exp": [20]},
  "methods": ["EXP_ONLY", "CVCI"],
  "generator": {"num_agents": 4, "densify_dim": 32, "vocab_size": 800, "max_length": 100, "reference_contexts": 10},
  "world": {"n_eval": 5, "n_true": 5, "b_true": 4, "b_dm": 2}
})";

}  // namespace

TEST_CASE("version and error state") {
  CHECK(std::strlen(ceval_version()) > 0);
  ceval_config* cfg = nullptr;
  CHECK(ceval_config_from_json("{not json", &cfg) == CEVAL_E_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::string(ceval_last_error()).find("JSON") != std::string::npos);
  CHECK(ceval_config_from_json(R"({"methods": []})", &cfg) == CEVAL_E_CONFIG);
  CHECK(ceval_config_preset("synthetic", nullptr) == CEVAL_E_INVALID_ARGUMENT);
  CHECK(ceval_config_preset("bogus", &cfg) == CEVAL_E_CONFIG);
  CHECK(ceval_config_load("/nonexistent/ceval.json", &cfg) == CEVAL_E_IO);
}

TEST_CASE("config round trip through JSON") {
  ceval_config* a = nullptr;
  REQUIRE(ceval_config_preset("coding", &a) == CEVAL_OK);
  CHECK(ceval_config_set_threads(a, 0) == CEVAL_E_INVALID_ARGUMENT);
  CHECK(ceval_config_set_master_seed(a, 1234) == CEVAL_OK);
  char* text = nullptr;
  REQUIRE(ceval_config_to_json(a, &text) == CEVAL_OK);
  ceval_config* b = nullptr;
  REQUIRE(ceval_config_from_json(text, &b) == CEVAL_OK);
  char* text2 = nullptr;
  REQUIRE(ceval_config_to_json(b, &text2) == CEVAL_OK);
  CHECK(std::string(text) == std::string(text2));
  CHECK(std::string(text).find("1234") != std::string::npos);
  ceval_string_free(text);
  ceval_string_free(text2);
  ceval_config_free(a);
  ceval_config_free(b);
}

TEST_CASE("run one cell through the C surface") {
  ceval_config* cfg = nullptr;
  REQUIRE(ceval_config_from_json(kTiny, &cfg) == CEVAL_OK);
  ceval_results* res = nullptr;
  REQUIRE(ceval_run_cell(cfg, 0.5, 400, 20, "scalar", 0, &res) == CEVAL_OK);
  CHECK(ceval_results_count(res) == 2);
  CHECK(ceval_results_failures(res) == 0);
  char* csv = nullptr;
  REQUIRE(ceval_results_csv(res, &csv) == CEVAL_OK);
  CHECK(std::string(csv).find("EXP_ONLY") != std::string::npos);
  ceval_string_free(csv);
  ceval_results_free(res);
  CHECK(ceval_run_cell(cfg, 0.5, 400, 20, "weird_mode", 0, &res) != CEVAL_OK);
  CHECK(ceval_run_cell(cfg, 1.5, 400, 20, "scalar", 0, &res) == CEVAL_E_INVALID_ARGUMENT);
  ceval_config_free(cfg);
}

TEST_CASE("theory checks through the C surface") {
  char* report = nullptr;
  int ok = 0;
  REQUIRE(ceval_check(5, 1, &report, &ok) == CEVAL_OK);
  CHECK(ok == 1);
  CHECK(std::string(report).find("centered_ridge") != std::string::npos);
  ceval_string_free(report);
  CHECK(ceval_check(0, 1, &report, &ok) == CEVAL_E_INVALID_ARGUMENT);
}

TEST_CASE("report on a missing run directory") {
  char* agg = nullptr;
  CHECK(ceval_report("/nonexistent/run", nullptr, &agg) == CEVAL_E_IO);
}
