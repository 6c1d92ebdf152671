/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ceval/tuning.hpp"

using namespace ceval;

namespace {

// Intercept-only model: the training mean plus the candidate's shift.
struct Toy {
  std::vector<int> actions;
  DenseVec y;
  std::vector<std::vector<std::size_t>> calls;

  Fitter fitter() {
    return [this](const Candidate& c, std::span<const std::size_t> train) {
      calls.emplace_back(train.begin(), train.end());
      double m = 0.0;
      for (auto j : train) m += y[static_cast<Eigen::Index>(j)];
      RewardModel r;
      r.head.weights = DenseVec::Zero(1);
      r.head.intercept = m / static_cast<double>(train.size()) + c.get("shift");
      return r;
    };
  }
  static Scorer scorer() {
    return [](const RewardModel& m, std::span<const std::size_t> rows) {
      DenseVec p(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) p[static_cast<Eigen::Index>(r)] = m.head.intercept + 0.01 * rows[r];
      return p;
    };
  }
};

}  // namespace

TEST_SUITE("tuning") {
  TEST_CASE("agent mean loss by hand") {
    const std::vector<int> agents{0, 0, 1};
    DenseVec pred(3), y(3);
    pred << 0.5, 0.7, 0.2;
    y << 1.0, 0.0, 1.0;
    std::vector<int> va;
    std::vector<double> w;
    const double loss = agent_mean_loss(agents, pred, y, &va, &w);
    CHECK(std::abs(loss - (2.0 / 3.0 * 0.01 + 1.0 / 3.0 * 0.64)) < 1e-15);
    CHECK(va == std::vector<int>{0, 1});
    CHECK(std::abs(w[0] - 2.0 / 3.0) < 1e-15);
  }

  TEST_CASE("agent cv on eight rows matches the hand formula and never leaks") {
    Toy t;
    t.actions = {0, 0, 0, 1, 1, 2, 2, 2};
    t.y.resize(8);
    t.y << 0.9, 0.1, 0.5, 0.3, 0.8, 0.2, 0.6, 0.4;
    const auto cands = candidate_grid({{"shift", {-0.1, 0.0, 0.2}}});
    const Selection s = agent_cv_select(cands, t.fitter(), Toy::scorer(), t.actions, t.y, 2, 17, {});
    REQUIRE(s.effective_mode == CvMode::AgentCv);
    REQUIRE(s.folds.size() == 2);
    REQUIRE(t.calls.size() == cands.size() * 2);
    for (std::size_t c = 0; c < cands.size(); ++c) {
      for (std::size_t f = 0; f < 2; ++f) {
        const auto& held = s.folds[f].val_agents;
        const std::set<int> hs(held.begin(), held.end());
        // The fitter saw exactly the rows of the other agents.
        std::vector<std::size_t> expect_train;
        for (std::size_t j = 0; j < 8; ++j)
          if (!hs.count(t.actions[j])) expect_train.push_back(j);
        const auto& seen = t.calls[c * 2 + f];
        CHECK(seen == expect_train);
        for (auto j : seen) CHECK(hs.count(t.actions[j]) == 0);
        double mt = 0.0;
        for (auto j : expect_train) mt += t.y[static_cast<Eigen::Index>(j)];
        mt = mt / static_cast<double>(expect_train.size()) + cands[c].get("shift");
        double total = 0.0;
        for (int a : held)
          for (int v : t.actions) total += (v == a);
        double loss = 0.0;
        for (int a : held) {
          double np = 0.0, sp = 0.0, sy = 0.0;
          for (std::size_t j = 0; j < 8; ++j)
            if (t.actions[j] == a) {
              np += 1.0;
              sp += mt + 0.01 * static_cast<double>(j);
              sy += t.y[static_cast<Eigen::Index>(j)];
            }
          loss += (np / total) * std::pow(sp / np - sy / np, 2);
        }
        CHECK(std::abs(s.fold_losses[c][f] - loss) < 1e-12);
      }
    }
  }

  TEST_CASE("fallback to row folds with few agents") {
    Toy t;
    t.actions = {0, 1, 0, 1, 0, 1, 0, 1};
    t.y = DenseVec::LinSpaced(8, 0.1, 0.8);
    const auto cands = candidate_grid({{"shift", {0.0}}});
    const Selection s = agent_cv_select(cands, t.fitter(), Toy::scorer(), t.actions, t.y, 4, 1, {});
    CHECK(s.effective_mode == CvMode::SampleCvFallback);
    CHECK(s.fold_losses[0].size() == 4);
  }

  TEST_CASE("selection is reproducible") {
    Toy a, b;
    a.actions = b.actions = {0, 1, 2, 3, 4, 0, 1, 2, 3, 4};
    a.y = b.y = DenseVec::LinSpaced(10, 0.0, 1.0);
    const auto cands = candidate_grid({{"shift", {-0.2, 0.0, 0.1}}});
    const Selection s1 = agent_cv_select(cands, a.fitter(), Toy::scorer(), a.actions, a.y, 4, 9, {});
    const Selection s2 = agent_cv_select(cands, b.fitter(), Toy::scorer(), b.actions, b.y, 4, 9, {});
    CHECK(s1.best == s2.best);
    CHECK(s1.fold_losses == s2.fold_losses);
    CHECK(a.calls == b.calls);
  }

  TEST_CASE("tie rules") {
    const auto g = candidate_grid({{"lambda", {0.2, 0.8}}, {"penalty", {0.1, 10.0}}});
    CHECK(tie_break(g, tie_rule(Family::CvciRes)).get("penalty") == 10.0);
    CHECK(tie_break(g, tie_rule(Family::CvciRes)).get("lambda") == 0.8);
    const auto a = candidate_grid({{"alpha", {0.0, 0.5, 1.0}}, {"basis", {0.0, 1.0}}, {"tau", {1.0, 100.0}}});
    const Candidate& ga = tie_break(a, tie_rule(Family::GroundedRich));
    CHECK(ga.get("alpha") == 0.0);
    CHECK(ga.get("tau") == 100.0);
    CHECK(ga.get("basis") == 0.0);
    std::vector<Candidate> rev(g.rbegin(), g.rend());
    CHECK(tie_break(rev, {}) == tie_break(g, {}));
  }

  TEST_CASE("losses within the tolerance count as ties") {
    Toy t;
    t.actions = {0, 1, 2, 3, 0, 1, 2, 3};
    t.y = DenseVec::Constant(8, 0.5);
    const auto cands = candidate_grid({{"shift", {0.0, 1e-12}}});
    // Loss difference is O(1e-12) * prediction error, far inside a 1e-3 relative band.
    const Selection s = agent_cv_select(cands, t.fitter(), Toy::scorer(), t.actions, t.y, 2, 3, {{"shift", true}}, 1e-3);
    CHECK(s.best.get("shift") == 1e-12);
    const Selection strict = agent_cv_select(cands, t.fitter(), Toy::scorer(), t.actions, t.y, 2, 3, {{"shift", true}}, 0.0);
    CHECK(strict.loss <= s.loss);
  }

  TEST_CASE("holdout sizes") {
    CHECK(holdout_sizes(20, 0.3) == std::pair<std::size_t, std::size_t>{14, 6});
    CHECK(holdout_sizes(5, 0.3) == std::pair<std::size_t, std::size_t>{3, 2});
    CHECK_THROWS_WITH(holdout_sizes(3, 0.3), doctest::Contains("EXP budget too small"));
  }

  TEST_CASE("holdout split never trains on held rows") {
    Toy t;
    t.actions = {0, 1, 2, 3, 0, 1, 2, 3, 0, 1};
    t.y = DenseVec::LinSpaced(10, 0.0, 0.9);
    const auto cands = candidate_grid({{"shift", {0.0, 0.05}}});
    const Selection s = exp_holdout_select(cands, t.fitter(), Toy::scorer(), t.actions, t.y, 0.3, 4, {});
    CHECK(s.effective_mode == CvMode::ExpHoldout);
    REQUIRE(!t.calls.empty());
    CHECK(t.calls[0].size() == 7);
  }

  TEST_CASE("cv mode names") {
    for (auto m : {CvMode::AgentCv, CvMode::SampleCvFallback, CvMode::ExpHoldout, CvMode::Fixed})
      CHECK(parse_cv_mode(cv_mode_name(m)) == m);
  }
}
