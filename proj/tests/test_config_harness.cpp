/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "ceval/config.hpp"
#include "ceval/harness.hpp"
#include "ceval/methods.hpp"
#include "ceval/theory.hpp"

using namespace ceval;
using nlohmann::json;

namespace {

RunConfig tiny() {
  RunConfig c = default_config("synthetic");
  c.generator.num_agents = 5;
  c.generator.densify_dim = 48;
  c.generator.vocab_size = 1000;
  c.generator.max_length = 120;
  c.generator.reference_contexts = 20;
  c.world.n_eval = 8;
  c.world.n_true = 8;
  c.world.b_true = 8;
  c.world.b_dm = 2;
  c.grid.betas = {0.0, 0.9};
  c.grid.n_obs = {400};
  c.grid.n_exp = {20};
  c.seeds = 2;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("presets") {
    CHECK(cell_grid(default_config("synthetic")).size() == 24);
    CHECK(cell_grid(default_config("coding")).size() == 25);
    CHECK(default_config("rubric").grid.modes.size() == 2);
    CHECK_THROWS(default_config("nope"));
  }

  TEST_CASE("json round trip") {
    const RunConfig a = default_config("coding");
    const RunConfig b = config_from_json(config_to_json(a));
    CHECK(config_to_json(a) == config_to_json(b));
  }

  TEST_CASE("overlay and validation errors") {
    const RunConfig c = config_from_json(json{{"seeds", 3}, {"grid", {{"betas", {0.2}}}}});
    CHECK(c.seeds == 3);
    CHECK(c.grid.betas == std::vector<double>{0.2});
    CHECK(c.grid.n_obs.size() == 2);
    CHECK_THROWS_WITH(config_from_json(json{{"sedes", 3}}), doctest::Contains("unknown key"));
    CHECK_THROWS_WITH(config_from_json(json{{"methods", json::array()}}), doctest::Contains("methods"));
    CHECK_THROWS(config_from_json(json{{"grid", {{"betas", {1.5}}}}}));
    CHECK_THROWS(config_from_json(json{{"methods", {"CVCI", "CVCI"}}}));
    CHECK_THROWS(config_from_json(json{{"estimator", {{"penalty_raw", -1.0}}}}));
    try {
      config_from_json(json{{"seeds", 0}});
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Config);
    }
  }
}

TEST_SUITE("harness") {
  TEST_CASE("cell seeds") {
    const CellKey a{0.5, 2000, 20}, b{0.5, 2000, 100};
    CHECK(derive_cell_seed(1, a, 0) != derive_cell_seed(1, b, 0));
    CHECK(derive_cell_seed(1, a, 0) != derive_cell_seed(1, a, 1));
    CHECK(derive_cell_seed(1, a, 0) == derive_cell_seed(1, a, 0));
    // OBS draws do not depend on the EXP budget, EXP draws do not depend on beta.
    CHECK(cell_seeds(1, a, 0).obs == cell_seeds(1, b, 0).obs);
    const CellKey c{0.9, 2000, 20};
    CHECK(cell_seeds(1, a, 0).exp == cell_seeds(1, c, 0).exp);
  }

  TEST_CASE("one cell runs every method") {
    const RunConfig c = tiny();
    const SeedOutput out = run_cell(c, CellKey{0.9, 400, 20}, 0);
    CHECK(out.failures.empty());
    CHECK(out.reports.size() == 8);
    CHECK(out.traces.size() == 8);
    for (const auto& r : out.reports) {
      CHECK(r.regret >= 0.0);
      CHECK(r.mu_dm.size() == 5);
    }
  }

  TEST_CASE("failures are recorded per method") {
    RunConfig c = tiny();
    c.estimator.proxy.d_psi = 60;  // needs 600 OBS rows
    c.estimator.proxy.d_compress = 16;
    const SeedOutput out = run_cell(c, CellKey{0.0, 400, 20}, 0);
    CHECK(!out.failures.empty());
    CHECK(out.reports.size() == 8 - out.failures.size());
  }

  TEST_CASE("sweep writes every output and is thread invariant") {
    namespace fs = std::filesystem;
    RunConfig c = tiny();
    const fs::path d1 = fs::temp_directory_path() / "ceval_unit_sweep1";
    const fs::path d2 = fs::temp_directory_path() / "ceval_unit_sweep2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    c.threads = 1;
    const auto r1 = run_sweep(c, d1.string());
    c.threads = 2;
    const auto r2 = run_sweep(c, d2.string());
    CHECK(r1.failures.empty());
    for (const char* f : {"aggregate.csv", "winner_map.csv", "cell_means.csv", "selection_trace.jsonl", "manifest.json"})
      CHECK(fs::exists(d1 / f));
    for (const auto& e : fs::directory_iterator(d1 / "cells"))
      CHECK(slurp(e.path()) == slurp(d2 / "cells" / e.path().filename()));
    CHECK(slurp(d1 / "aggregate.csv") == slurp(d2 / "aggregate.csv"));
    const auto agg = report_dir(d1.string(), "");
    CHECK(aggregate_csv(agg) == slurp(d1 / "aggregate.csv"));
    const json man = json::parse(slurp(d1 / "manifest.json"));
    CHECK(man["software"]["version"] == kVersion);
    CHECK(man["cells"].size() == 2);
    fs::remove_all(d1);
    fs::remove_all(d2);
  }
}

TEST_SUITE("theory") {
  TEST_CASE("suite passes") {
    for (const auto& r : run_theory_suite(20, 7)) {
      INFO(format_check(r));
      CHECK(r.passed);
    }
  }

  TEST_CASE("projection of a vector in the span is itself") {
    const auto inst = RiskInstance::random(3);
    const DenseVec v = inst.psi * DenseVec::LinSpaced(inst.psi.cols(), -1.0, 1.0);
    const Projection p = l2_project(v, inst.psi, inst.weights);
    CHECK(p.residual.cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("monte carlo draw count is validated") {
    CheckReport r;
    r = check_obs_center(2, 1, 200);
    CHECK(r.instances == 2);
    CHECK_THROWS(check_obs_center(2, 1, 10));
  }
}
