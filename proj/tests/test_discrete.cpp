/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include <doctest.h>

#include <cmath>

#include "ceval/discrete_scm.hpp"

using namespace ceval;

namespace {

// Interventional value by brute-force enumeration of (u, m).
double q_enumerated(const DiscreteScm& s, int x, int a) {
  double v = 0.0;
  for (int u = 0; u < 2; ++u)
    for (int m = 0; m < 2; ++m) v += s.p_u(x, u) * s.p_m(x, a, m) * s.p_y[x][m][u];
  return v;
}

// E[Y | x, m] under a routing law route(u, a), by enumeration of the joint.
template <class Route>
double conditional(const DiscreteScm& s, int x, int m, Route route) {
  double num = 0.0, den = 0.0;
  for (int u = 0; u < 2; ++u)
    for (int a = 0; a < 2; ++a) {
      const double w = s.p_u(x, u) * route(u, a) * s.p_m(x, a, m);
      num += w * s.p_y[x][m][u];
      den += w;
    }
  return num / den;
}

}  // namespace

TEST_SUITE("discrete_scm") {
  TEST_CASE("EXP plug-in equals the interventional value") {
    const DiscreteScm s;
    for (int x = 0; x < 2; ++x)
      for (int a = 0; a < 2; ++a) {
        CHECK(std::abs(s.q(x, a) - q_enumerated(s, x, a)) < 1e-15);
        CHECK(std::abs(s.plug_in(x, a, false, 0.0) - q_enumerated(s, x, a)) < 1e-15);
      }
  }

  TEST_CASE("conditional means by enumeration") {
    const DiscreteScm s;
    for (int x = 0; x < 2; ++x)
      for (int m = 0; m < 2; ++m) {
        CHECK(std::abs(s.exp_conditional(x, m) - conditional(s, x, m, [](int, int) { return 0.5; })) < 1e-15);
        CHECK(std::abs(s.r_star(x, m) - s.exp_conditional(x, m)) < 1e-15);
        const double beta = 0.99;
        const double obs = conditional(s, x, m, [&](int u, int a) { return s.p_obs(x, u, a, beta); });
        CHECK(std::abs(s.obs_conditional(x, m, beta) - obs) < 1e-15);
      }
  }

  TEST_CASE("confounded plug-in is biased only when routing reads the latent user") {
    const DiscreteScm s;
    double worst0 = 0.0, worst99 = 0.0;
    for (int x = 0; x < 2; ++x)
      for (int a = 0; a < 2; ++a) {
        worst0 = std::max(worst0, std::abs(s.plug_in(x, a, true, 0.0) - s.q(x, a)));
        worst99 = std::max(worst99, std::abs(s.plug_in(x, a, true, 0.99) - s.q(x, a)));
      }
    CHECK(worst0 < 1e-15);
    CHECK(worst99 > 0.01);
  }

  TEST_CASE("sampled plug-in is reproducible") {
    const DiscreteScm s;
    const auto a = sample_plug_in(s, false, 0.0, 20000, 3);
    const auto b = sample_plug_in(s, false, 0.0, 20000, 3);
    CHECK(a.q_hat[1][0] == b.q_hat[1][0]);
    CHECK(a.se[0][1] > 0.0);
  }
}
