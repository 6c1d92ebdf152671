/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ceval/config.hpp"
#include "ceval/estimators.hpp"
#include "ceval/tuning.hpp"
#include "ceval/values.hpp"

namespace ceval {

/// Hyperparameter grid of a family under `cfg`. Fixed families return one candidate.
std::vector<Candidate> family_candidates(Family f, const RunConfig& cfg);
/// Selection mode of a family before any fallback.
CvMode family_tuning(Family f, const RunConfig& cfg);
FitParams params_from(Family f, const Candidate& c, const RunConfig& cfg);

/// Inputs of one (seed, cell) shared by every method.
struct CellData {
  const ObsCache* cache = nullptr;  // null when OBS is not used by any method
  const ExpView* exp = nullptr;
  FeatureView sim;                  // simulator rows for the direct method
  int n_eval = 0;
  int agents = 0;
  int draws = 0;
  std::uint64_t cv_seed = 0;
  std::uint64_t dr_seed = 0;
};

struct MethodResult {
  Family family = Family::ExpOnly;
  RewardModel model;
  Selection selection;
  ValueEstimate values;
  DrResult dr;
  std::string hparams;  // "k=v;k=v", "-" when nothing was tuned
};

/// Tune, refit on all rows, direct-method values on the simulator rows and cross-fitted DR values.
MethodResult run_method(Family f, const CellData& data, const RunConfig& cfg);

}  // namespace ceval
