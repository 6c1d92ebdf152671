/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "ceval/values.hpp"

#include <algorithm>

#include "ceval/random.hpp"

namespace ceval {

ValueEstimate dm_from_predictions(const DenseVec& pred, int n_eval, int agents, int draws) {
  require(n_eval >= 1 && agents >= 1 && draws >= 1, "direct method sizes must be positive");
  require(pred.size() == static_cast<Eigen::Index>(n_eval) * agents * draws, "direct method: prediction count mismatch");
  ValueEstimate v;
  v.q_dm.resize(n_eval, agents);
  for (int i = 0; i < n_eval; ++i) {
    for (int a = 0; a < agents; ++a) {
      const Eigen::Index base = (static_cast<Eigen::Index>(i) * agents + a) * draws;
      double s = 0.0;
      for (int b = 0; b < draws; ++b) s += pred[base + b];
      v.q_dm(i, a) = s / draws;
    }
  }
  v.mu_dm = v.q_dm.colwise().mean().transpose();
  return v;
}

ValueEstimate dm_values(const RewardModel& model, const FeatureView& sim, int n_eval, int agents, int draws) {
  return dm_from_predictions(model.predict(sim), n_eval, agents, draws);
}

std::vector<int> cross_fit_partition(std::size_t n, int k, std::uint64_t seed) {
  require(k >= 1, "cross-fitting needs at least one fold");
  require(static_cast<std::size_t>(k) <= n, "more cross-fitting folds than EXP rows");
  Rng rng(seed);
  return balanced_folds(n, k, rng);
}

DenseVec ht_correction(const DenseVec& residual, const std::vector<int>& actions, int agents) {
  require(residual.size() == static_cast<Eigen::Index>(actions.size()), "residual and action counts differ");
  require(!actions.empty(), "no EXP rows");
  DenseVec corr = DenseVec::Zero(agents);
  const double n = static_cast<double>(actions.size());
  for (std::size_t j = 0; j < actions.size(); ++j) {
    require(actions[j] >= 0 && actions[j] < agents, "action out of range");
    corr[actions[j]] += static_cast<double>(agents) * residual[static_cast<Eigen::Index>(j)] / n;
  }
  return corr;
}

DrResult dr_values(ValueEstimate& est, const CrossFitPredictor& predictor, const std::vector<int>& actions,
                   const DenseVec& outcomes, int agents, const std::vector<int>& folds) {
  const std::size_t n = actions.size();
  require(n == static_cast<std::size_t>(outcomes.size()), "actions and outcomes differ in length");
  require(est.mu_dm.size() == agents, "direct-method values do not match the agent count");
  DrResult r;
  r.residual.resize(static_cast<Eigen::Index>(n));
  std::vector<std::size_t> all(n);
  for (std::size_t j = 0; j < n; ++j) all[j] = j;
  if (folds.empty()) {
    const DenseVec pred = predictor(all, all);
    r.residual = outcomes - pred;
  } else {
    require(folds.size() == n, "fold labels do not match the EXP rows");
    const int k = *std::max_element(folds.begin(), folds.end()) + 1;
    for (int f = 0; f < k; ++f) {
      std::vector<std::size_t> tr, ho;
      for (std::size_t j = 0; j < n; ++j) (folds[j] == f ? ho : tr).push_back(j);
      if (ho.empty()) continue;
      const DenseVec pred = predictor(tr, ho);
      for (std::size_t t = 0; t < ho.size(); ++t)
        r.residual[static_cast<Eigen::Index>(ho[t])] =
            outcomes[static_cast<Eigen::Index>(ho[t])] - pred[static_cast<Eigen::Index>(t)];
    }
  }
  r.correction = ht_correction(r.residual, actions, agents);
  est.mu_dr = est.mu_dm + r.correction;
  return r;
}

}  // namespace ceval
