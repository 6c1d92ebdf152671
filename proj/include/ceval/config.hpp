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

#include <json.hpp>

#include "ceval/estimators.hpp"
#include "ceval/scm.hpp"
#include "ceval/tuning.hpp"

namespace ceval {

struct GridConfig {
  std::vector<double> betas{0.0, 0.2, 0.5, 0.8, 0.9, 0.99};
  std::vector<int> n_obs{2000, 20000};
  std::vector<int> n_exp{20, 100};
  std::vector<RewardMode> modes{RewardMode{}};
  RouterKind router = RouterKind::Mixture;
};

struct RunConfig {
  std::string preset = "synthetic";
  std::uint64_t master_seed = 20260417;
  int seeds = 30;
  int threads = 1;
  GridConfig grid;
  std::vector<Family> methods{std::begin(kAllFamilies), std::end(kAllFamilies)};
  GeneratorConfig generator;
  WorldSpec world;
  EstimatorConfig estimator;
  int k_cv = 4;
  double holdout_frac = 0.3;
  double tie_tolerance = 1e-8;
  CvMode grounded_lin_tuning = CvMode::ExpHoldout;
  int k_cf = 5;
};

/// Presets: "synthetic" (24 scalar cells), "rubric" (smooth and sharpened maps),
/// "coding" (5 x 5 fix-success by weakest-link grid at one budget).
RunConfig default_config(const std::string& preset = "synthetic");

nlohmann::json config_to_json(const RunConfig& cfg);
/// Overlays `j` on the preset named by j["preset"] (default "synthetic"). Unknown keys are errors.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);
void validate_config(const RunConfig& cfg);

}  // namespace ceval
