/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include <doctest.h>

#include <cmath>

#include "ceval/metrics.hpp"

using namespace ceval;

namespace {

CellReport rep(const CellKey& k, const std::string& m, std::uint64_t seed, double regret) {
  CellReport r;
  r.cell = k;
  r.method = m;
  r.seed_index = seed;
  r.regret = regret;
  r.rmse_xa = regret / 2;
  r.rmse_agent = 0.1;
  r.rmse_agent_dr = 0.05;
  r.hparams = "lambda=0.5;penalty=1";
  return r;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("regret by hand") {
    Matrix qt(2, 3), qh(2, 3);
    qt << 0.5, 0.9, 0.1, 0.4, 0.2, 0.3;
    qh << 0.9, 0.1, 0.1, 0.0, 0.7, 0.7;  // picks 0 then 1 (tie goes to the smaller id)
    CHECK(regret(qh, qt) == doctest::Approx((0.4 + 0.2) / 2).epsilon(1e-14));
    CHECK(regret(qt, qt) == 0.0);
    Matrix bad = qh;
    bad(0, 0) = std::nan("");
    CHECK_THROWS(regret(bad, qt));
  }

  TEST_CASE("rmse") {
    Matrix a(1, 2), b(1, 2);
    a << 0.0, 1.0;
    b << 0.0, 0.0;
    CHECK(rmse_xa(a, b) == doctest::Approx(std::sqrt(0.5)));
    DenseVec u(2), v(2);
    u << 0.3, 0.5;
    v << 0.1, 0.5;
    CHECK(rmse_agent(u, v) == doctest::Approx(std::sqrt(0.02)));
  }

  TEST_CASE("aggregate ranks with ties and winner map") {
    const CellKey c1{0.0, 2000, 20}, c2{0.99, 2000, 20};
    std::vector<CellReport> rs;
    for (std::uint64_t s = 0; s < 2; ++s) {
      rs.push_back(rep(c1, "A", s, 0.1));
      rs.push_back(rep(c1, "B", s, 0.1));
      rs.push_back(rep(c1, "C", s, 0.3));
      rs.push_back(rep(c2, "A", s, 0.5));
      rs.push_back(rep(c2, "B", s, 0.2));
      rs.push_back(rep(c2, "C", s, 0.4));
    }
    const auto agg = aggregate(rs);
    REQUIRE(agg.methods.size() == 3);
    CHECK(agg.methods[0].method == "A");
    CHECK(agg.methods[0].avg_rank == doctest::Approx((1.5 + 3.0) / 2));
    CHECK(agg.methods[1].avg_rank == doctest::Approx((1.5 + 1.0) / 2));
    CHECK(agg.methods[2].top3_count == 2);
    CHECK(agg.methods[2].excess_pct == doctest::Approx((200.0 + 100.0) / 2));
    REQUIRE(agg.cells.size() == 2);
    CHECK(agg.cells[1].winner == "B");
    CHECK(agg.cells[1].runner_up == "C");
    CHECK(agg.cells[1].gap == doctest::Approx(0.2));
  }

  TEST_CASE("aggregate rejects inconsistent method sets") {
    const CellKey c1{0.0, 2000, 20}, c2{0.5, 2000, 20};
    std::vector<CellReport> rs{rep(c1, "A", 0, 0.1), rep(c2, "B", 0, 0.1)};
    CHECK_THROWS(aggregate(rs));
  }

  TEST_CASE("cell csv round trip is exact") {
    const CellKey k{0.99, 20000, 100, RewardMode{RewardKind::Coding, 0.25, 0.5}};
    CellReport r = rep(k, "CVCI", 7, 0.1234567890123456789);
    r.rmse_agent_dr = 1.0 / 3.0;
    const auto back = parse_cell_csv(cell_csv_header() + cell_csv_row(r));
    REQUIRE(back.size() == 1);
    CHECK(back[0].regret == r.regret);
    CHECK(back[0].rmse_agent_dr == r.rmse_agent_dr);
    CHECK(back[0].cell == k);
    CHECK(back[0].hparams == r.hparams);
    CHECK_THROWS(parse_cell_csv("bad header\n"));
    CHECK(k.str() == "b0.99_obs20000_exp100_coding_a0.25_w0.5_mixture");
  }

  TEST_CASE("standard error") {
    CHECK(standard_error({1.0, 3.0}) == doctest::Approx(1.0));
    CHECK(standard_error({2.0}) == 0.0);
  }
}
