/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ceval/core_math.hpp"
#include "ceval/estimators.hpp"

namespace ceval {

struct ValueEstimate {
  Matrix q_dm;     // n_eval x agents, in [0,1]
  DenseVec mu_dm;  // agents
  DenseVec mu_dr;  // agents, empty until dr_values runs
};

/// q_dm(i, a) = mean over b of pred[sim_row(i, a, b)], mu_dm = column means.
/// `pred` holds the model's clipped predictions on the simulator rows laid out as
/// ((i * agents) + a) * draws + b.
ValueEstimate dm_from_predictions(const DenseVec& pred, int n_eval, int agents, int draws);

/// Direct method on simulator draws: features of row ((i * agents) + a) * draws + b.
ValueEstimate dm_values(const RewardModel& model, const FeatureView& sim, int n_eval, int agents, int draws);

/// Seeded, size-balanced fold labels. Errors when k > n.
std::vector<int> cross_fit_partition(std::size_t n, int k, std::uint64_t seed);

/// Refit on the EXP rows in `train` and return clipped predictions on the rows in `held_out`.
using CrossFitPredictor =
    std::function<DenseVec(std::span<const std::size_t> train, std::span<const std::size_t> held_out)>;

struct DrResult {
  DenseVec residual;    // cross-fitted Y - r_hat on each EXP row
  DenseVec correction;  // per agent, mu_dr - mu_dm
};

/// mu_dr(a) = mu_dm(a) + (1 / n) sum_j 1{A_j = a} * agents * residual_j. Agents absent from
/// EXP get no correction. `folds` empty means the residuals use the full-data fit.
DrResult dr_values(ValueEstimate& est, const CrossFitPredictor& predictor, const std::vector<int>& actions,
                   const DenseVec& outcomes, int agents, const std::vector<int>& folds);

/// Horvitz-Thompson residual mean with uniform propensity 1 / agents.
DenseVec ht_correction(const DenseVec& residual, const std::vector<int>& actions, int agents);

}  // namespace ceval
