/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ceval/core_math.hpp"

namespace ceval {

/// argmin_beta ||y - Psi beta||^2 + penalty ||beta - beta_obs||^2.
DenseVec centered_ridge(const Matrix& psi, const DenseVec& y, double penalty, const DenseVec& beta_obs);

struct Projection {
  DenseVec h;         // projection of b onto the column span of psi
  DenseVec residual;  // b - h
  DenseVec coef;
};

/// Weighted L2 projection of b onto span(psi) under the inner product sum_i w_i u_i v_i.
Projection l2_project(const DenseVec& b, const Matrix& psi, const DenseVec& weights);

/// Finite-support population: features on S points with probability weights.
struct RiskInstance {
  DenseVec weights;  // sums to 1
  Matrix psi;        // S x d_psi, first column constant
  Matrix phi;        // S x d_phi, first column constant
  DenseVec r_star;
  DenseVec f_obs;
  double sigma2 = 0.05;

  static RiskInstance random(std::uint64_t seed, int support = 512, int d_psi = 5, int d_phi = 12);
};

/// sigma^2 + ||f - r*||^2 under the instance weights.
double oracle_risk(const RiskInstance& inst, const DenseVec& f);
double weighted_sq_norm(const DenseVec& v, const DenseVec& w);

struct CheckReport {
  std::string name;
  double max_violation = 0.0;
  double tolerance = 0.0;
  int instances = 0;
  bool passed = false;
  std::string detail;
};

CheckReport check_centered_ridge(int instances, std::uint64_t seed);
CheckReport check_oracle_grounding_gain(int instances, std::uint64_t seed);
CheckReport check_noisy_correction(int instances, std::uint64_t seed);
CheckReport check_residual_vs_pooling(int instances, std::uint64_t seed);
/// Closed-form EXP-only and OBS-centered ridge risks against Monte Carlo (violation in MC standard errors).
CheckReport check_obs_center(int instances, std::uint64_t seed, int draws = 10000);

std::vector<CheckReport> run_theory_suite(int instances = 20, std::uint64_t seed = 7);
std::string format_check(const CheckReport& r);

}  // namespace ceval
