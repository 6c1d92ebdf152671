/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include <doctest.h>

#include <cmath>
#include <memory>

#include <Eigen/QR>

#include "ceval/estimators.hpp"

using namespace ceval;

namespace {

struct Fixture {
  Generator gen;
  Dataset obs, exp;
  EstimatorConfig cfg;
  ObsCache cache;
  ExpView ev;
  std::vector<std::size_t> all;

  Fixture()
      : gen(
            [] {
              GeneratorConfig c;
              c.num_agents = 6;
              c.densify_dim = 48;
              c.vocab_size = 1000;
              c.max_length = 120;
              c.reference_contexts = 30;
              return c;
            }(),
            123) {
    obs = generate_obs(gen, RewardMode{}, RouterKind::Mixture, 0.5, 800, 1);
    exp = generate_exp(gen, RewardMode{}, 90, 2);
    cache = build_obs_cache(obs, cfg, true, 3);
    ev = make_exp_view(exp, &cache);
    for (std::size_t i = 0; i < exp.rows(); ++i) all.push_back(i);
  }
};

Fixture& fx() {
  static Fixture f;
  return f;
}

FitParams with(double penalty, double lambda = 1.0, double alpha = 1.0, double tau = 1.0, Basis b = Basis::Id) {
  FitParams p;
  p.penalty = penalty;
  p.lambda = lambda;
  p.alpha = alpha;
  p.tau = tau;
  p.basis = b;
  return p;
}

Matrix random_phi(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, d);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < n; ++i) m(i, j) = 0.3 * rng.normal();
  return m;
}

}  // namespace

TEST_SUITE("estimators") {
  TEST_CASE("family names round trip") {
    for (auto f : kAllFamilies) CHECK(parse_family(family_name(f)) == f);
    CHECK_THROWS(parse_family("BOGUS"));
    CHECK(parse_basis("poly2") == Basis::Poly2);
  }

  TEST_CASE("poly2 basis") {
    Matrix u(2, 2);
    u << 1, -2, 3, 0.5;
    const Matrix b = apply_basis(Basis::Poly2, u);
    REQUIRE(b.cols() == 4);
    CHECK(b(0, 3) == 4.0);
    CHECK(b(1, 2) == 9.0);
    CHECK((apply_basis(Basis::Id, u) - u).norm() == 0.0);
  }

  TEST_CASE("proxy is standardized on OBS") {
    auto& f = fx();
    REQUIRE(f.cache.proxy);
    CHECK(f.cache.proxy->dim() == f.cfg.proxy.d_psi);
    for (Eigen::Index j = 0; j < f.cache.psi.cols(); ++j) {
      const double m = f.cache.psi.col(j).mean();
      CHECK(std::abs(m) < 1e-8);
      CHECK((f.cache.psi.col(j).array() - m).square().mean() == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(f.cache.psi_tilde.cols() == f.cfg.proxy.d_compress);
    Dataset no_aux = f.exp;
    CHECK_THROWS_WITH(learn_proxy(no_aux), doctest::Contains("aux"));
  }

  TEST_CASE("EXP-only and OBS-only match the sum-loss ridge oracle") {
    auto& f = fx();
    const double pen = 0.01;
    const RewardModel e = fit_family(Family::ExpOnly, &f.cache, f.ev, f.all, with(pen), f.cfg);
    const LinearModel eo = ridge_fit(f.exp.features, f.exp.outcome, pen, std::nullopt, true);
    CHECK((e.head.weights - eo.weights).norm() < 1e-8);
    const RewardModel o = fit_family(Family::ObsOnly, &f.cache, f.ev, f.all, with(pen), f.cfg);
    const LinearModel oo = ridge_fit(f.obs.features, f.obs.outcome, pen, std::nullopt, true);
    CHECK((o.head.weights - oo.weights).norm() < 1e-8);
    CHECK(o.head.intercept == doctest::Approx(oo.intercept).epsilon(1e-8));
  }

  TEST_CASE("pooled row weights") {
    CHECK(pooled_row_weights(1.0, 2000, 100) == std::pair<double, double>{1.0, 0.0});
    CHECK(pooled_row_weights(0.0, 2000, 100) == std::pair<double, double>{0.0, 1.0});
    const auto [wo, we] = pooled_row_weights(0.5, 300, 100);
    CHECK(wo == doctest::Approx(0.25).epsilon(1e-15));  // (1/600) / (1/600 + 1/200)
    CHECK(we == doctest::Approx(0.75).epsilon(1e-15));
    CHECK_THROWS(pooled_row_weights(1.0, 0, 100));
  }

  TEST_CASE("CVCI endpoints") {
    auto& f = fx();
    const double pen = f.cfg.penalty_raw;
    const RewardModel c1 = fit_family(Family::Cvci, &f.cache, f.ev, f.all, with(pen, 1.0), f.cfg);
    const RewardModel c0 = fit_family(Family::Cvci, &f.cache, f.ev, f.all, with(pen, 0.0), f.cfg);
    const RewardModel o = fit_family(Family::ObsOnly, &f.cache, f.ev, f.all, with(pen), f.cfg);
    const RewardModel e = fit_family(Family::ExpOnly, &f.cache, f.ev, f.all, with(pen), f.cfg);
    CHECK((c1.head.weights - o.head.weights).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((c0.head.weights - e.head.weights).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(std::abs(c0.head.intercept - e.head.intercept) < 1e-8);
  }

  TEST_CASE("grounded at alpha zero and zero residual head reduce to the OBS baseline") {
    auto& f = fx();
    const Matrix phi = random_phi(1000, f.obs.features.cols(), 77);
    const DenseVec base = RewardModel{Family::ObsOnly, std::nullopt, f.cache.baseline}.predict(phi);
    for (auto fam : {Family::GroundedLin, Family::GroundedRich}) {
      const RewardModel g = fit_family(fam, &f.cache, f.ev, f.all, with(0.1, 1.0, 0.0, 1.0, Basis::Poly2), f.cfg);
      CHECK((g.predict(phi) - base).cwiseAbs().maxCoeff() < 1e-12);
    }
    RewardModel r = fit_family(Family::CvciRes, &f.cache, f.ev, f.all, with(1.0, 0.5), f.cfg);
    r.head.weights.setZero();
    r.head.intercept = 0.0;
    CHECK((r.predict(phi) - base).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("correction fit matches ridge on the gap") {
    auto& f = fx();
    const LinearModel c = fit_correction(f.ev.psi, f.ev.baseline, f.exp.outcome, 0.7);
    const LinearModel r = ridge_fit(f.ev.psi, f.ev.baseline - f.exp.outcome, 0.7, std::nullopt, true);
    CHECK((c.weights - r.weights).norm() < 1e-10);
  }

  TEST_CASE("anchor calibration matches stacked least squares") {
    Rng rng(5);
    const int n = 40, m = 15;
    DenseVec yo(n), fo(n), co(n), ye(m), fe(m), ce(m);
    for (int i = 0; i < n; ++i) {
      yo[i] = rng.uniform();
      fo[i] = rng.uniform();
      co[i] = 0.2 * rng.normal();
    }
    for (int i = 0; i < m; ++i) {
      ye[i] = rng.uniform();
      fe[i] = rng.uniform();
      ce[i] = 0.2 * rng.normal();
    }
    for (double lam : {0.0, 0.3, 1.0}) {
      const double rb = 0.5, ra = 2.0;
      const auto [b, a] = solve_anchor(yo, fo, co, ye, fe, ce, lam, rb, ra);
      Matrix x(n + m + 2, 2);
      DenseVec t(n + m + 2);
      const double so = std::sqrt(lam / n), se = std::sqrt((1.0 - lam) / m);
      for (int i = 0; i < n; ++i) {
        x.row(i) << so * fo[i], -so * co[i];
        t[i] = so * yo[i];
      }
      for (int i = 0; i < m; ++i) {
        x.row(n + i) << se * fe[i], -se * ce[i];
        t[n + i] = se * ye[i];
      }
      x.row(n + m) << std::sqrt(rb), 0.0;
      t[n + m] = std::sqrt(rb);
      x.row(n + m + 1) << 0.0, std::sqrt(ra);
      t[n + m + 1] = std::sqrt(ra);
      const Eigen::Vector2d sol = x.householderQr().solve(t);
      CHECK(std::abs(b - sol[0]) < 1e-12);
      CHECK(std::abs(a - sol[1]) < 1e-12);
    }
  }

  TEST_CASE("predictions are clipped and models serialize") {
    auto& f = fx();
    const Matrix phi = random_phi(200, f.obs.features.cols(), 8) * 20.0;
    for (auto fam : kAllFamilies) {
      const RewardModel m = fit_family(fam, &f.cache, f.ev, f.all, with(0.1, 0.5, 0.5, 1.0, Basis::Poly2), f.cfg);
      const DenseVec p = m.predict(phi);
      CHECK(p.minCoeff() >= 0.0);
      CHECK(p.maxCoeff() <= 1.0);
      const RewardModel back = RewardModel::from_json(m.to_json());
      CHECK((back.predict(phi) - p).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("families report missing inputs") {
    auto& f = fx();
    CHECK_THROWS(fit_family(Family::Cvci, nullptr, f.ev, f.all, with(0.1), f.cfg));
    CHECK_THROWS(fit_family(Family::Cvci, &f.cache, f.ev, f.all, with(0.1, 1.5), f.cfg));
    const std::vector<std::size_t> one{0};
    CHECK_THROWS(fit_family(Family::ExpOnly, &f.cache, f.ev, one, with(0.1), f.cfg));
  }
}
