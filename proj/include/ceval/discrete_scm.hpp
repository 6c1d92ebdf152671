/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <array>
#include <cstdint>

namespace ceval {

/// Two contexts, two agents, two mediators, binary latent user and binary outcome.
/// Every probability is explicit, so interventional quantities can be enumerated.
struct DiscreteScm {
  std::array<double, 2> p_x{0.5, 0.5};
  std::array<double, 2> p_u1_given_x{0.3, 0.7};            // P(U = 1 | x)
  std::array<std::array<double, 2>, 2> pi_x{{{0.6, 0.4}, {0.4, 0.6}}};   // [x][a]
  std::array<std::array<double, 2>, 2> pi_u{{{0.95, 0.05}, {0.05, 0.95}}};  // [u][a]
  std::array<std::array<double, 2>, 2> p_m1{{{0.15, 0.85}, {0.25, 0.8}}};   // [x][a]: P(M = 1 | x, a)
  // [x][m][u]: P(Y = 1 | x, m, u)
  double p_y[2][2][2] = {{{0.2, 0.8}, {0.35, 0.9}}, {{0.1, 0.75}, {0.3, 0.85}}};

  double p_u(int x, int u) const { return u == 1 ? p_u1_given_x[x] : 1.0 - p_u1_given_x[x]; }
  double p_m(int x, int a, int m) const { return m == 1 ? p_m1[x][a] : 1.0 - p_m1[x][a]; }
  /// Observational routing: (1 - beta) pi_X + beta pi_U.
  double p_obs(int x, int u, int a, double beta) const { return (1.0 - beta) * pi_x[x][a] + beta * pi_u[u][a]; }

  /// r*(x, m) = sum_u P(u | x) P(Y = 1 | x, m, u).
  double r_star(int x, int m) const;
  /// q(x, a) = sum_m p_sim(m | x, a) r*(x, m).
  double q(int x, int a) const;
  /// E[Y | x, m] under uniform (randomized) agent choice, by enumeration.
  double exp_conditional(int x, int m) const;
  /// E[Y | x, m] under the confounded router, by enumeration.
  double obs_conditional(int x, int m, double beta) const;
  /// sum_m p_sim(m | x, a) E[Y | x, m, source].
  double plug_in(int x, int a, bool use_obs, double beta) const;
};

/// Stratified Monte Carlo plug-in over sampled rows.
struct DiscretePlugIn {
  std::array<std::array<double, 2>, 2> q_hat{};  // [x][a]
  std::array<std::array<double, 2>, 2> se{};
};

/// Draws `n` rows from OBS (confounded at `beta`) or from EXP (uniform agents) and returns
/// the plug-in sum_m p_sim(m | x, a) mean(Y | x, m) with delta-method standard errors.
DiscretePlugIn sample_plug_in(const DiscreteScm& scm, bool use_obs, double beta, std::size_t n, std::uint64_t seed);

}  // namespace ceval
