/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ceval/core_math.hpp"
#include "ceval/estimators.hpp"

namespace ceval {

enum class CvMode { AgentCv, SampleCvFallback, ExpHoldout, Fixed };
std::string cv_mode_name(CvMode m);
CvMode parse_cv_mode(const std::string& s);

struct CvPlan {
  CvMode mode = CvMode::AgentCv;
  int folds = 4;
  double holdout_frac = 0.3;
  double tie_tolerance = 1e-8;
};

/// A named point of a hyperparameter grid.
struct Candidate {
  std::vector<std::pair<std::string, double>> values;

  double get(const std::string& name) const;
  bool has(const std::string& name) const;
  std::string label() const;
  bool operator==(const Candidate&) const = default;
};

/// Cartesian product of named axes, first axis slowest.
std::vector<Candidate> candidate_grid(const std::vector<std::pair<std::string, std::vector<double>>>& axes);

/// Tie ordering: earlier keys dominate; `prefer_larger` picks the larger value on that key.
struct TieKey {
  std::string name;
  bool prefer_larger = true;
};
using TieRule = std::vector<TieKey>;

/// Per-family rule: CVCI-Res (larger penalty, then larger lambda); grounded (smaller alpha, larger tau,
/// then id before poly2); anchor (larger lambda, larger tau, id first); CVCI (larger lambda).
TieRule tie_rule(Family f);

/// Deterministic pick among tied candidates. Remaining exact ties go to the lexicographically
/// smallest candidate, so the result never depends on input order.
const Candidate& tie_break(std::span<const Candidate> tied, const TieRule& rule);

/// Fit on the EXP rows in `train`; all OBS data is implicitly available to the fitter.
using Fitter = std::function<RewardModel(const Candidate&, std::span<const std::size_t> train)>;
/// Clipped predictions of `model` on the EXP rows in `rows`.
using Scorer = std::function<DenseVec(const RewardModel&, std::span<const std::size_t> rows)>;

struct FoldRecord {
  std::vector<int> train_agents;  // sorted
  std::vector<int> val_agents;    // sorted
  std::vector<double> weights;    // normalized count weights, aligned with val_agents
};

struct Selection {
  Candidate best;
  double loss = 0.0;
  CvMode effective_mode = CvMode::Fixed;
  std::vector<Candidate> candidates;
  std::vector<std::vector<double>> fold_losses;  // [candidate][fold]
  std::vector<double> mean_losses;
  std::vector<FoldRecord> folds;

  nlohmann::json trace() const;
};

/// Weighted held-out loss sum_a w_a (mean prediction - mean outcome)^2 with w_a proportional to
/// the number of held-out rows of agent a.
double agent_mean_loss(std::span<const int> agents, const DenseVec& pred, const DenseVec& y,
                       std::vector<int>* val_agents = nullptr, std::vector<double>* weights = nullptr);

/// Agent-level cross-validation; falls back to row-level folds when fewer agents than folds appear.
Selection agent_cv_select(const std::vector<Candidate>& candidates, const Fitter& fit, const Scorer& score,
                          const std::vector<int>& actions, const DenseVec& outcomes, int folds, std::uint64_t seed,
                          const TieRule& rule, double tolerance = 1e-8);

/// Seeded EXP split; mean squared prediction error on the held-out part.
Selection exp_holdout_select(const std::vector<Candidate>& candidates, const Fitter& fit, const Scorer& score,
                             const std::vector<int>& actions, const DenseVec& outcomes, double holdout_frac,
                             std::uint64_t seed, const TieRule& rule, double tolerance = 1e-8);

/// Row counts (train, holdout) used by exp_holdout_select.
std::pair<std::size_t, std::size_t> holdout_sizes(std::size_t n, double holdout_frac);

}  // namespace ceval
