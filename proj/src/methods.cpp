/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "ceval/methods.hpp"

namespace ceval {

namespace {

Matrix rows_of(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<double> basis_axis() { return {0.0, 1.0}; }

}  // namespace

std::vector<Candidate> family_candidates(Family f, const RunConfig& cfg) {
  const auto& e = cfg.estimator;
  switch (f) {
    case Family::ExpOnly:
    case Family::ObsOnly:
      return candidate_grid({{"penalty", {e.penalty_raw}}});
    case Family::ProxyExp:
      return candidate_grid({{"penalty", {e.penalty_proxy}}});
    case Family::GroundedLin:
      return candidate_grid({{"alpha", e.alpha_grid}, {"penalty", {e.penalty_proxy}}});
    case Family::GroundedRich:
      return candidate_grid({{"alpha", e.alpha_grid}, {"basis", basis_axis()}, {"tau", e.rich_taus}});
    case Family::GroundedAnchor:
      return candidate_grid({{"basis", basis_axis()}, {"lambda", e.anchor_lambdas}, {"tau", e.rich_taus}});
    case Family::Cvci:
      return candidate_grid({{"lambda", e.lambda_grid}, {"penalty", {e.penalty_raw}}});
    case Family::CvciRes:
      return candidate_grid({{"lambda", e.lambda_grid}, {"penalty", e.residual_penalties}});
  }
  fail(ErrorCode::Internal, "unknown family");
}

CvMode family_tuning(Family f, const RunConfig& cfg) {
  switch (f) {
    case Family::ExpOnly:
    case Family::ObsOnly:
    case Family::ProxyExp:
      return CvMode::Fixed;
    case Family::GroundedLin:
      return cfg.grounded_lin_tuning;
    default:
      return CvMode::AgentCv;
  }
}

FitParams params_from(Family f, const Candidate& c, const RunConfig& cfg) {
  FitParams p;
  p.penalty = c.has("penalty") ? c.get("penalty") : cfg.estimator.penalty_raw;
  if (c.has("lambda")) p.lambda = c.get("lambda");
  if (c.has("alpha")) p.alpha = c.get("alpha");
  if (c.has("tau")) p.tau = c.get("tau");
  if (c.has("basis")) p.basis = c.get("basis") > 0.5 ? Basis::Poly2 : Basis::Id;
  (void)f;
  return p;
}

MethodResult run_method(Family f, const CellData& d, const RunConfig& cfg) {
  require(d.exp != nullptr && d.exp->exp != nullptr, "cell has no EXP data");
  const Dataset& exp = *d.exp->exp;
  const std::size_t n = exp.rows();
  require(n >= 2, "EXP requires at least two rows");
  if (family_uses_obs(f)) require(d.cache != nullptr, family_name(f) + " requires OBS data");

  auto fit = [&](const Candidate& c, std::span<const std::size_t> train) {
    return fit_family(f, d.cache, *d.exp, train, params_from(f, c, cfg), cfg.estimator);
  };
  auto score = [&](const RewardModel& m, std::span<const std::size_t> rows) {
    const Matrix phi = rows_of(exp.features, rows);
    Matrix psi, tilde;
    FeatureView v{&phi, nullptr, nullptr};
    if (d.exp->psi.size() > 0) {
      psi = rows_of(d.exp->psi, rows);
      tilde = rows_of(d.exp->psi_tilde, rows);
      v.psi = &psi;
      v.psi_tilde = &tilde;
    }
    return m.predict(v);
  };

  MethodResult r;
  r.family = f;
  const auto candidates = family_candidates(f, cfg);
  const TieRule rule = tie_rule(f);
  switch (family_tuning(f, cfg)) {
    case CvMode::Fixed:
      require(candidates.size() == 1, "fixed family with several candidates");
      r.selection.best = candidates.front();
      r.selection.candidates = candidates;
      r.selection.effective_mode = CvMode::Fixed;
      break;
    case CvMode::ExpHoldout:
      r.selection = exp_holdout_select(candidates, fit, score, exp.action, exp.outcome, cfg.holdout_frac, d.cv_seed,
                                       rule, cfg.tie_tolerance);
      break;
    default:
      r.selection = agent_cv_select(candidates, fit, score, exp.action, exp.outcome, cfg.k_cv, d.cv_seed, rule,
                                    cfg.tie_tolerance);
      break;
  }
  const FitParams best = params_from(f, r.selection.best, cfg);
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  r.model = fit_family(f, d.cache, *d.exp, all, best, cfg.estimator);
  r.hparams = r.selection.best.values.empty() ? "-" : r.selection.best.label();

  r.values = dm_values(r.model, d.sim, d.n_eval, d.agents, d.draws);

  // DR refits keep the hyperparameters chosen on all rows.
  CrossFitPredictor predictor = [&](std::span<const std::size_t> train, std::span<const std::size_t> held) {
    if (f == Family::ObsOnly) return score(r.model, held);
    const RewardModel m = fit_family(f, d.cache, *d.exp, train, best, cfg.estimator);
    return score(m, held);
  };
  const std::vector<int> folds =
      f == Family::ObsOnly ? std::vector<int>{} : cross_fit_partition(n, cfg.k_cf, d.dr_seed);
  r.dr = dr_values(r.values, predictor, exp.action, exp.outcome, d.agents, folds);
  return r;
}

}  // namespace ceval
