/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ceval/scm.hpp"

using namespace ceval;

namespace {

GeneratorConfig small_config() {
  GeneratorConfig c;
  c.num_agents = 5;
  c.densify_dim = 64;
  c.vocab_size = 1000;
  c.max_length = 120;
  c.reference_contexts = 50;
  return c;
}

const Generator& small_gen() {
  static const Generator g(small_config(), 99);
  return g;
}

}  // namespace

TEST_SUITE("scm") {
  TEST_CASE("smooth and sharpened reward examples") {
    const std::array<double, 4> ones{1, 1, 1, 1}, eq{0.25, 0.25, 0.25, 0.25};
    CHECK(reward_smooth(ones, 0, eq) == doctest::Approx(1.0));
    CHECK(reward_sharpened(ones, 0, eq) == doctest::Approx(1.0 / (1.0 + std::exp(-5.0))).epsilon(1e-14));
    const std::array<double, 4> a{0.37, 0.37, 0.37, 0.37};
    CHECK(reward_smooth(a, 3, eq) == doctest::Approx(0.37));
    const auto wb = sharpen_weights({0.7, 0.1, 0.1, 0.1}, 16.0);
    const double direct = std::pow(0.7, 16) / (std::pow(0.7, 16) + 3 * std::pow(0.1, 16));
    CHECK(wb[0] == doctest::Approx(direct).epsilon(1e-14));
    CHECK(wb[0] >= 0.9999);
    CHECK_THROWS(reward_smooth(ones, 0, {0.5, 0.5, 0.5, 0.5}));
    CHECK_THROWS(reward_sharpened(ones, 0, {-0.1, 0.5, 0.3, 0.3}));
  }

  TEST_CASE("coding utility examples") {
    const std::array<double, 4> w{0.3, 0.2, 0.3, 0.5};
    CHECK(coding_utility({0.0, 0.2, 0.9, 0.5}, {0.0, 1, 1, 1}, 0.7, 1.0) == doctest::Approx(0.2));
    CHECK(coding_utility({0.0, 0.2, 0.9, 0.5}, w, 0.0, 0.4) == coding_utility({1.0, 0.2, 0.9, 0.5}, w, 0.0, 0.4));
    CHECK(coding_utility({1.0, 0.3, 0.6, 0.9}, {0.5, 1, 1, 1}, 1.0, 0.0) == doctest::Approx(0.8).epsilon(1e-14));
    CHECK_THROWS(coding_utility({1, 1, 1, 1}, {0.5, 0, 0, 0}, 1.0, 0.0));
  }

  TEST_CASE("rubric components with zero heads") {
    Generator g(small_config(), 5);
    auto& p = g.mutable_params();
    p.rubric_heads.setZero();
    p.rubric_bias.setZero();
    p.claims_head.setZero();
    p.claims_bias = 0.0;
    const auto rc = g.rubric_components(DenseVec::Ones(g.config().hidden_dim));
    for (double s : rc.s) CHECK(s == 0.5);
    CHECK(rc.u_claims == 10);
    // Hand-set head.
    p.rubric_heads(2, 0) = 0.7;
    p.rubric_bias[2] = -0.2;
    DenseVec h = DenseVec::Zero(g.config().hidden_dim);
    h[0] = 1.5;
    CHECK(std::abs(g.rubric_components(h).s[2] - 1.0 / (1.0 + std::exp(-(0.7 * 1.5 - 0.2)))) < 1e-12);
  }

  TEST_CASE("mediator paths agree") {
    const auto& g = small_gen();
    Rng cr(1);
    const Context x = g.sample_context(cr, 0);
    for (int a = 0; a < g.num_agents(); ++a) {
      Rng r1(42 + a), r2(42 + a), r3(42 + a);
      const Mediator m = g.sample_mediator(x, a, r1);
      DenseVec d2(g.densify_dim()), h2(g.config().hidden_dim), d3(g.densify_dim()), h3(g.config().hidden_dim);
      g.sample_mediator_fast(x, a, r2, d2.data(), h2.data());
      const MediatorPlan plan = g.plan_mediator(x, a);
      g.sample_planned(plan, r3, d3.data(), h3.data());
      CHECK((m.dense - d2).norm() < 1e-12);
      CHECK((m.hidden - h2).norm() < 1e-12);
      CHECK((m.dense - d3).norm() < 1e-12);
      CHECK((m.hidden - h3).norm() < 1e-12);
      CHECK(r1.bits() == r3.bits());
    }
  }

  TEST_CASE("routing distributions") {
    const auto& g = small_gen();
    Rng rng(3);
    const Context x = g.sample_context(rng, 1);
    const LatentState u = g.sample_latent(x, rng);
    for (bool seg : {false, true}) {
      const DenseVec code = g.routing_code(x, u, seg);
      for (double beta : {0.0, 0.5, 1.0}) {
        const auto p = g.mixture_probs(x, code, beta, seg);
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        for (double v : p) CHECK(v >= 0.0);
      }
      const auto p0 = g.mixture_probs(x, code, 0.0, seg);
      const auto px = g.pi_x(x);
      for (std::size_t a = 0; a < px.size(); ++a) CHECK(p0[a] == doctest::Approx(px[a]).epsilon(1e-14));
    }
    const auto sp = g.softmax_probs(x, 0, 2.0);
    CHECK(std::accumulate(sp.begin(), sp.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("outcome and aux labels stay in range") {
    const auto& g = small_gen();
    Rng rng(9);
    for (int t = 0; t < 50; ++t) {
      const Context x = g.sample_context(rng, t);
      const LatentState u = g.sample_latent(x, rng);
      const Mediator m = g.sample_mediator(x, t % g.num_agents(), rng);
      const double y = g.outcome_scalar(m.hidden, u, rng);
      CHECK(y >= 0.0);
      CHECK(y <= 1.0);
      const DenseVec z = g.aux_labels(m.hidden, rng);
      CHECK(z.minCoeff() >= 0.0);
      CHECK(z.maxCoeff() <= 1.0);
      for (RewardMode mode : {RewardMode{RewardKind::RubricSmooth}, RewardMode{RewardKind::RubricSharp},
                              RewardMode{RewardKind::Coding, 0.5, 0.5}}) {
        const double r = g.outcome(mode, m.hidden, u, x.segment, rng);
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
      }
    }
  }

  TEST_CASE("r_star matches Monte Carlo over latent and noise") {
    const auto& g = small_gen();
    Rng rng(17);
    const Context x = g.sample_context(rng, 5);
    const Mediator m = g.sample_mediator(x, 2, rng);
    const RewardMode scalar;
    const double rs = g.r_star(scalar, m.hidden, x);
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const LatentState u = g.sample_latent(x, rng);
      const double y = g.outcome_scalar(m.hidden, u, rng);
      s += y;
      s2 += y * y;
    }
    const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(mean - rs) < 4.0 * se);
  }

  TEST_CASE("datasets are reproducible and EXP is randomized") {
    const auto& g = small_gen();
    const RewardMode scalar;
    const Dataset a = generate_obs(g, scalar, RouterKind::Mixture, 0.5, 300, 11);
    const Dataset b = generate_obs(g, scalar, RouterKind::Mixture, 0.5, 300, 11);
    CHECK(a.action == b.action);
    CHECK((a.features - b.features).norm() == 0.0);
    CHECK((a.outcome - b.outcome).norm() == 0.0);
    CHECK(a.has_aux());
    const Dataset e = generate_exp(g, scalar, 5000, 4);
    CHECK_FALSE(e.has_aux());
    std::vector<int> c(static_cast<std::size_t>(g.num_agents()), 0);
    for (int v : e.action) ++c[static_cast<std::size_t>(v)];
    for (int v : c) CHECK(std::abs(v / 5000.0 - 0.2) < 0.03);
  }

  TEST_CASE("reward mode keys round trip") {
    for (const auto& k : {"scalar", "rubric_smooth", "rubric_sharp", "coding_a0.25_w0.5"})
      CHECK(RewardMode::parse(k).key() == k);
    CHECK_THROWS(RewardMode::parse("nonsense"));
    CHECK(parse_router(router_name(RouterKind::Softmax)) == RouterKind::Softmax);
  }

  TEST_CASE("world truth is the simulator average of r_star") {
    const auto& g = small_gen();
    WorldSpec spec;
    spec.n_eval = 3;
    spec.n_true = 3;
    spec.b_true = 16;
    spec.b_dm = 2;
    const World w = build_world(g, 0, spec, {RewardMode{}});
    const auto& t = w.table(RewardMode{});
    CHECK(t.q_eval.rows() == 3);
    CHECK(t.q_eval.cols() == g.num_agents());
    CHECK(t.mu.size() == g.num_agents());
    CHECK((t.mu - t.q_ref.colwise().mean().transpose()).norm() < 1e-12);
    CHECK(t.q_eval.minCoeff() >= 0.0);
    CHECK(t.q_eval.maxCoeff() <= 1.0);
    CHECK(w.sim_features.rows() == 3 * g.num_agents() * 2);
    CHECK_THROWS(w.table(RewardMode{RewardKind::RubricSharp}));
  }
}
