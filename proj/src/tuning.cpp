/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "ceval/tuning.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>

#include "ceval/random.hpp"

namespace ceval {

std::string cv_mode_name(CvMode m) {
  switch (m) {
    case CvMode::AgentCv: return "agent_cv";
    case CvMode::SampleCvFallback: return "sample_cv_fallback";
    case CvMode::ExpHoldout: return "exp_holdout";
    case CvMode::Fixed: return "fixed";
  }
  return "fixed";
}

CvMode parse_cv_mode(const std::string& s) {
  for (CvMode m : {CvMode::AgentCv, CvMode::SampleCvFallback, CvMode::ExpHoldout, CvMode::Fixed})
    if (cv_mode_name(m) == s) return m;
  fail(ErrorCode::Config, "unknown tuning mode '" + s + "'");
}

double Candidate::get(const std::string& name) const {
  for (const auto& [k, v] : values)
    if (k == name) return v;
  fail(ErrorCode::InvalidArgument, "candidate has no parameter '" + name + "'");
}

bool Candidate::has(const std::string& name) const {
  return std::any_of(values.begin(), values.end(), [&](const auto& kv) { return kv.first == name; });
}

std::string Candidate::label() const {
  std::string s;
  char buf[64];
  for (const auto& [k, v] : values) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    if (!s.empty()) s += ';';
    s += k + '=' + buf;
  }
  return s;
}

std::vector<Candidate> candidate_grid(const std::vector<std::pair<std::string, std::vector<double>>>& axes) {
  std::vector<Candidate> out{Candidate{}};
  for (const auto& [name, vals] : axes) {
    require(!vals.empty(), "empty grid axis '" + name + "'");
    std::vector<Candidate> next;
    for (const auto& c : out) {
      for (double v : vals) {
        Candidate d = c;
        d.values.emplace_back(name, v);
        next.push_back(std::move(d));
      }
    }
    out = std::move(next);
  }
  return out;
}

TieRule tie_rule(Family f) {
  switch (f) {
    case Family::CvciRes: return {{"penalty", true}, {"lambda", true}};
    case Family::Cvci: return {{"lambda", true}, {"penalty", true}};
    case Family::GroundedLin: return {{"alpha", false}, {"penalty", true}};
    case Family::GroundedRich: return {{"alpha", false}, {"tau", true}, {"basis", false}};
    case Family::GroundedAnchor: return {{"lambda", true}, {"tau", true}, {"basis", false}};
    default: return {{"penalty", true}};
  }
}

namespace {

bool lex_less(const Candidate& a, const Candidate& b) {
  return std::lexicographical_compare(a.values.begin(), a.values.end(), b.values.begin(), b.values.end());
}

// True when a is preferred over b.
bool preferred(const Candidate& a, const Candidate& b, const TieRule& rule) {
  for (const auto& key : rule) {
    if (!a.has(key.name) || !b.has(key.name)) continue;
    const double va = a.get(key.name), vb = b.get(key.name);
    if (va != vb) return key.prefer_larger ? va > vb : va < vb;
  }
  return lex_less(a, b);
}

std::vector<int> unique_sorted(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

Selection finish(Selection s, const TieRule& rule, double tolerance) {
  require(!s.candidates.empty(), "empty candidate grid");
  s.mean_losses.clear();
  for (const auto& fl : s.fold_losses) {
    double m = 0.0;
    for (double v : fl) m += v;
    s.mean_losses.push_back(fl.empty() ? 0.0 : m / static_cast<double>(fl.size()));
  }
  double best = s.mean_losses[0];
  for (double v : s.mean_losses) best = std::min(best, v);
  require(std::isfinite(best), "non-finite selection loss", ErrorCode::Numeric);
  const double cut = best + tolerance * std::max(std::abs(best), 1e-15);
  std::vector<Candidate> tied;
  for (std::size_t i = 0; i < s.candidates.size(); ++i)
    if (s.mean_losses[i] <= cut) tied.push_back(s.candidates[i]);
  s.best = tie_break(tied, rule);
  for (std::size_t i = 0; i < s.candidates.size(); ++i)
    if (s.candidates[i] == s.best) s.loss = s.mean_losses[i];
  return s;
}

}  // namespace

const Candidate& tie_break(std::span<const Candidate> tied, const TieRule& rule) {
  require(!tied.empty(), "empty candidate grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < tied.size(); ++i)
    if (preferred(tied[i], tied[best], rule)) best = i;
  return tied[best];
}

double agent_mean_loss(std::span<const int> agents, const DenseVec& pred, const DenseVec& y,
                       std::vector<int>* val_agents, std::vector<double>* weights) {
  require(agents.size() == static_cast<std::size_t>(pred.size()) && pred.size() == y.size(),
          "agent loss: shape mismatch");
  require(!agents.empty(), "agent loss: no held-out rows");
  std::map<int, std::array<double, 3>> acc;  // count, sum pred, sum y
  for (std::size_t j = 0; j < agents.size(); ++j) {
    auto& a = acc[agents[j]];
    a[0] += 1.0;
    a[1] += pred[static_cast<Eigen::Index>(j)];
    a[2] += y[static_cast<Eigen::Index>(j)];
  }
  const double total = static_cast<double>(agents.size());
  double loss = 0.0;
  if (val_agents) val_agents->clear();
  if (weights) weights->clear();
  for (const auto& [agent, a] : acc) {
    const double w = a[0] / total;
    const double d = a[1] / a[0] - a[2] / a[0];
    loss += w * d * d;
    if (val_agents) val_agents->push_back(agent);
    if (weights) weights->push_back(w);
  }
  return loss;
}

Selection agent_cv_select(const std::vector<Candidate>& candidates, const Fitter& fit, const Scorer& score,
                          const std::vector<int>& actions, const DenseVec& outcomes, int folds, std::uint64_t seed,
                          const TieRule& rule, double tolerance) {
  require(!candidates.empty(), "empty candidate grid");
  require(folds >= 2, "cross-validation needs at least two folds");
  require(actions.size() == static_cast<std::size_t>(outcomes.size()), "actions and outcomes differ in length");
  const std::size_t n = actions.size();
  require(n >= 2, "cross-validation needs at least two EXP rows");
  Rng rng(seed);
  const std::vector<int> agents = unique_sorted(actions);

  Selection s;
  s.candidates = candidates;
  std::vector<int> row_fold(n);
  int k = folds;
  if (static_cast<int>(agents.size()) >= folds) {
    s.effective_mode = CvMode::AgentCv;
    const std::vector<int> agent_fold = balanced_folds(agents.size(), folds, rng);
    for (std::size_t j = 0; j < n; ++j) {
      const auto pos = std::lower_bound(agents.begin(), agents.end(), actions[j]) - agents.begin();
      row_fold[j] = agent_fold[static_cast<std::size_t>(pos)];
    }
  } else {
    s.effective_mode = CvMode::SampleCvFallback;
    k = std::min<int>(folds, static_cast<int>(n));
    row_fold = balanced_folds(n, k, rng);
  }

  std::vector<std::vector<std::size_t>> train(static_cast<std::size_t>(k)), val(static_cast<std::size_t>(k));
  for (std::size_t j = 0; j < n; ++j) {
    for (int f = 0; f < k; ++f) (row_fold[j] == f ? val : train)[static_cast<std::size_t>(f)].push_back(j);
  }
  for (int f = 0; f < k; ++f) {
    FoldRecord rec;
    std::vector<int> ta;
    for (auto j : train[static_cast<std::size_t>(f)]) ta.push_back(actions[j]);
    rec.train_agents = unique_sorted(ta);
    s.folds.push_back(std::move(rec));
  }

  s.fold_losses.assign(candidates.size(), {});
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    for (int f = 0; f < k; ++f) {
      const auto& tr = train[static_cast<std::size_t>(f)];
      const auto& va = val[static_cast<std::size_t>(f)];
      require(!tr.empty() && !va.empty(), "degenerate cross-validation fold");
      const RewardModel m = fit(candidates[c], tr);
      const DenseVec pred = score(m, va);
      std::vector<int> va_agents;
      DenseVec y(static_cast<Eigen::Index>(va.size()));
      for (std::size_t r = 0; r < va.size(); ++r) {
        va_agents.push_back(actions[va[r]]);
        y[static_cast<Eigen::Index>(r)] = outcomes[static_cast<Eigen::Index>(va[r])];
      }
      auto& rec = s.folds[static_cast<std::size_t>(f)];
      s.fold_losses[c].push_back(agent_mean_loss(va_agents, pred, y, &rec.val_agents, &rec.weights));
    }
  }
  return finish(std::move(s), rule, tolerance);
}

std::pair<std::size_t, std::size_t> holdout_sizes(std::size_t n, double holdout_frac) {
  require(holdout_frac > 0.0 && holdout_frac < 1.0, "holdout fraction must lie in (0,1)");
  const auto h = static_cast<std::size_t>(std::llround(holdout_frac * static_cast<double>(n)));
  if (h < 2 || n < h + 2) fail(ErrorCode::InvalidArgument, "EXP budget too small for holdout");
  return {n - h, h};
}

Selection exp_holdout_select(const std::vector<Candidate>& candidates, const Fitter& fit, const Scorer& score,
                             const std::vector<int>& actions, const DenseVec& outcomes, double holdout_frac,
                             std::uint64_t seed, const TieRule& rule, double tolerance) {
  require(!candidates.empty(), "empty candidate grid");
  const std::size_t n = actions.size();
  require(n == static_cast<std::size_t>(outcomes.size()), "actions and outcomes differ in length");
  const auto [n_train, n_hold] = holdout_sizes(n, holdout_frac);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  std::sort(hold.begin(), hold.end());
  std::sort(tr.begin(), tr.end());
  (void)n_train;

  Selection s;
  s.effective_mode = CvMode::ExpHoldout;
  s.candidates = candidates;
  FoldRecord rec;
  std::vector<int> ta, va;
  for (auto j : tr) ta.push_back(actions[j]);
  for (auto j : hold) va.push_back(actions[j]);
  rec.train_agents = unique_sorted(ta);
  rec.val_agents = unique_sorted(va);
  s.folds.push_back(rec);
  for (const auto& c : candidates) {
    const RewardModel m = fit(c, tr);
    const DenseVec pred = score(m, hold);
    double mse = 0.0;
    for (std::size_t r = 0; r < hold.size(); ++r) {
      const double d = pred[static_cast<Eigen::Index>(r)] - outcomes[static_cast<Eigen::Index>(hold[r])];
      mse += d * d;
    }
    s.fold_losses.push_back({mse / static_cast<double>(hold.size())});
  }
  return finish(std::move(s), rule, tolerance);
}

nlohmann::json Selection::trace() const {
  nlohmann::json cands = nlohmann::json::array();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    nlohmann::json c{{"candidate", candidates[i].label()}};
    if (i < fold_losses.size()) c["fold_losses"] = fold_losses[i];
    if (i < mean_losses.size()) c["mean_loss"] = mean_losses[i];
    cands.push_back(std::move(c));
  }
  return {{"effective_mode", cv_mode_name(effective_mode)},
          {"selected", best.label()},
          {"loss", loss},
          {"candidates", cands}};
}

}  // namespace ceval
