/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "ceval/discrete_scm.hpp"

#include <cmath>

#include "ceval/error.hpp"
#include "ceval/random.hpp"

namespace ceval {

double DiscreteScm::r_star(int x, int m) const {
  double r = 0.0;
  for (int u = 0; u < 2; ++u) r += p_u(x, u) * p_y[x][m][u];
  return r;
}

double DiscreteScm::q(int x, int a) const {
  double v = 0.0;
  for (int m = 0; m < 2; ++m) v += p_m(x, a, m) * r_star(x, m);
  return v;
}

namespace {

// E[Y | x, m] with agent weights w(u, a).
template <class W>
double conditional(const DiscreteScm& s, int x, int m, W weight) {
  double num = 0.0, den = 0.0;
  for (int u = 0; u < 2; ++u) {
    for (int a = 0; a < 2; ++a) {
      const double p = s.p_u(x, u) * weight(u, a) * s.p_m(x, a, m);
      num += p * s.p_y[x][m][u];
      den += p;
    }
  }
  require(den > 0.0, "mediator has zero probability");
  return num / den;
}

}  // namespace

double DiscreteScm::exp_conditional(int x, int m) const {
  return conditional(*this, x, m, [](int, int) { return 0.5; });
}

double DiscreteScm::obs_conditional(int x, int m, double beta) const {
  return conditional(*this, x, m, [&](int u, int a) { return p_obs(x, u, a, beta); });
}

double DiscreteScm::plug_in(int x, int a, bool use_obs, double beta) const {
  double v = 0.0;
  for (int m = 0; m < 2; ++m)
    v += p_m(x, a, m) * (use_obs ? obs_conditional(x, m, beta) : exp_conditional(x, m));
  return v;
}

DiscretePlugIn sample_plug_in(const DiscreteScm& scm, bool use_obs, double beta, std::size_t n, std::uint64_t seed) {
  require(n >= 1, "sample size must be positive");
  Rng rng(seed);
  std::array<std::array<double, 2>, 2> sum{}, cnt{};
  for (std::size_t i = 0; i < n; ++i) {
    const int x = rng.uniform() < scm.p_x[1] ? 1 : 0;
    const int u = rng.uniform() < scm.p_u1_given_x[x] ? 1 : 0;
    const int a = use_obs ? (rng.uniform() < scm.p_obs(x, u, 1, beta) ? 1 : 0) : rng.below(2);
    const int m = rng.uniform() < scm.p_m1[x][a] ? 1 : 0;
    const int y = rng.uniform() < scm.p_y[x][m][u] ? 1 : 0;
    sum[x][m] += y;
    cnt[x][m] += 1.0;
  }
  DiscretePlugIn out;
  for (int x = 0; x < 2; ++x) {
    for (int a = 0; a < 2; ++a) {
      double v = 0.0, var = 0.0;
      for (int m = 0; m < 2; ++m) {
        require(cnt[x][m] >= 2.0, "empty stratum in discrete plug-in");
        const double mean = sum[x][m] / cnt[x][m];
        const double w = scm.p_m(x, a, m);
        v += w * mean;
        var += w * w * mean * (1.0 - mean) / cnt[x][m];
      }
      out.q_hat[x][a] = v;
      out.se[x][a] = std::sqrt(var);
    }
  }
  return out;
}

}  // namespace ceval
