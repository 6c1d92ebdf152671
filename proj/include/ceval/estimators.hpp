/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ceval/core_math.hpp"
#include "ceval/scm.hpp"

namespace ceval {

enum class Family { ExpOnly, ObsOnly, ProxyExp, GroundedLin, GroundedRich, GroundedAnchor, Cvci, CvciRes };
inline constexpr Family kAllFamilies[] = {Family::ExpOnly,      Family::ObsOnly,      Family::ProxyExp,
                                          Family::GroundedLin,  Family::GroundedRich, Family::GroundedAnchor,
                                          Family::Cvci,         Family::CvciRes};

/// "EXP_ONLY", "OBS_ONLY", ...
std::string family_name(Family f);
Family parse_family(const std::string& s);
bool family_uses_proxy(Family f);
bool family_uses_obs(Family f);
bool family_uses_exp(Family f);

enum class Basis { Id, Poly2 };
std::string basis_name(Basis b);
Basis parse_basis(const std::string& s);
/// B_id(u) = u, B_poly(u) = [u, u * u] row-wise.
Matrix apply_basis(Basis b, const Matrix& u);

/// phi (densified) -> psi, plus the standardized compression psi -> psi~ used by the rich corrections.
struct ProxyMap {
  ProjectionMap projector;
  ProjectionMap compress;
  int aux_directions = 0;
  std::string source = "aux-label directions";

  int dim() const noexcept { return static_cast<int>(projector.output_dim()); }
  Matrix psi(const Matrix& phi_rows) const { return projector.apply_rows(phi_rows); }
  Matrix psi_tilde(const Matrix& psi_rows) const { return compress.apply_rows(psi_rows); }
};

struct ProxyOptions {
  int d_psi = 20;
  int d_compress = 16;
  /// Mean-loss ridge penalty of the aux regression.
  double aux_penalty = 1e-3;
};

/// Multi-output ridge of aux on phi over OBS; the leading right singular directions of the
/// coefficient map, filled up to d_psi with principal directions of the remaining feature
/// variance, standardized on OBS.
ProxyMap learn_proxy(const Dataset& obs, const ProxyOptions& opt = {});

/// Feature matrices for one set of rows. Missing psi blocks are computed on demand.
struct FeatureView {
  const Matrix* phi = nullptr;
  const Matrix* psi = nullptr;
  const Matrix* psi_tilde = nullptr;
};

struct RewardModel {
  Family family = Family::ExpOnly;
  std::optional<LinearModel> baseline;  // f_OBS head on phi
  LinearModel head;                     // on phi, psi or B(psi~) depending on the family
  std::optional<Basis> basis;
  std::optional<double> alpha_corr;
  std::optional<double> lambda_pool;
  std::optional<double> anchor_b;
  std::shared_ptr<const ProxyMap> proxy;

  /// Clipped predictions for every row.
  DenseVec predict(const FeatureView& rows) const;
  DenseVec predict(const Matrix& phi_rows) const { return predict(FeatureView{&phi_rows, nullptr, nullptr}); }
  double predict_one(const DenseVec& phi) const;

  nlohmann::json to_json() const;
  static RewardModel from_json(const nlohmann::json& j);
};

/// Penalties and grids shared by the families.
struct EstimatorConfig {
  double penalty_raw = 2.0;       // sum-loss ridge on phi (EXP-Only, OBS-Only, CVCI)
  double penalty_proxy = 100.0;   // sum-loss ridge on psi (Proxy-EXP, linear grounded)
  std::vector<double> residual_penalties{0.01, 0.1, 1.0, 10.0};  // CVCI-Res, mean loss
  std::vector<double> rich_taus{0.01, 1.0, 100.0};
  std::vector<double> alpha_grid{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> lambda_grid{0.0, 0.1, 0.2, 0.35, 0.5, 0.65, 0.8, 0.9, 1.0};
  std::vector<double> anchor_lambdas{0.0, 0.25, 0.5, 0.75, 1.0};
  double rho_b = 1.0;
  double rho_alpha = 1.0;
  int obs_crossfit_folds = 5;
  ProxyOptions proxy;
};

/// Everything derived from one OBS sample that fits reuse.
struct ObsCache {
  const Dataset* obs = nullptr;
  NormalEquations raw;           // phi -> Y
  LinearModel baseline;          // f_OBS head
  DenseVec baseline_pred;        // clipped f_OBS on OBS rows
  DenseVec baseline_cf;          // clipped cross-fitted f_OBS on OBS rows
  std::shared_ptr<const ProxyMap> proxy;
  Matrix psi;                    // OBS rows
  Matrix psi_tilde;
  NormalEquations residual;      // psi -> Y - f_OBS
};

ObsCache build_obs_cache(const Dataset& obs, const EstimatorConfig& cfg, bool need_proxy, std::uint64_t seed);

/// EXP rows and their derived features, restricted by row index when fitting.
struct ExpView {
  const Dataset* exp = nullptr;
  Matrix psi;         // empty when no proxy
  Matrix psi_tilde;
  DenseVec baseline;  // clipped f_OBS on EXP rows, empty without OBS
};

ExpView make_exp_view(const Dataset& exp, const ObsCache* cache);

/// Hyperparameters of one fit; unused fields are ignored by the family.
struct FitParams {
  double penalty = 0.0;
  double lambda = 1.0;
  double alpha = 1.0;
  double tau = 1.0;
  Basis basis = Basis::Id;
};

/// Per-row weights (OBS, EXP) of the pooled raw fit: lambda / n_obs and (1 - lambda) / n_exp,
/// rescaled so the sum-loss penalty matches OBS-Only at lambda = 1 and EXP-Only at lambda = 0.
std::pair<double, double> pooled_row_weights(double lambda, double n_obs, double n_exp);

/// One fit on the EXP rows in `rows` (all OBS rows are always available).
RewardModel fit_family(Family f, const ObsCache* cache, const ExpView& exp, std::span<const std::size_t> rows,
                       const FitParams& p, const EstimatorConfig& cfg);

// Dataset-level entry points.
RewardModel fit_exp_only(const Dataset& exp, double penalty);
RewardModel fit_obs_only(const Dataset& obs, double penalty);
RewardModel fit_proxy_exp(const Dataset& exp, std::shared_ptr<const ProxyMap> proxy, double penalty);
RewardModel fit_cvci(const Dataset& obs, const Dataset& exp, double lambda, double penalty);

/// argmin_{theta,c} sum (delta - theta'x - c)^2 + penalty ||theta||^2 with delta = f_obs - y.
LinearModel fit_correction(const Matrix& x, const DenseVec& f_obs, const DenseVec& y, double penalty);

/// Two-coefficient anchored calibration (b, alpha).
std::pair<double, double> solve_anchor(const DenseVec& y_obs, const DenseVec& f_cf, const DenseVec& c_obs,
                                       const DenseVec& y_exp, const DenseVec& f_exp, const DenseVec& c_exp,
                                       double lambda, double rho_b, double rho_alpha);

}  // namespace ceval
