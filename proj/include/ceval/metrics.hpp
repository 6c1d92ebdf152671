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
#include "ceval/scm.hpp"

namespace ceval {

struct CellKey {
  double beta = 0.0;
  int n_obs = 0;
  int n_exp = 0;
  RewardMode mode;
  RouterKind router = RouterKind::Mixture;

  /// File-name safe key, e.g. "b0.5_obs2000_exp100_scalar_mixture".
  std::string str() const;
  bool operator==(const CellKey&) const = default;
};
/// Orders by (mode key, router, beta, n_obs, n_exp).
bool operator<(const CellKey& a, const CellKey& b);

struct CellReport {
  std::uint64_t seed_index = 0;
  CellKey cell;
  std::string method;
  double regret = 0.0;
  double rmse_xa = 0.0;
  double rmse_agent = 0.0;     // direct method
  double rmse_agent_dr = 0.0;  // doubly robust
  std::string hparams;
  std::vector<double> mu_dm;
  std::vector<double> mu_dr;
};

/// Mean over rows of max_a q(x, a) - q(x, argmax_a q_hat(x, a)); argmax ties go to the smallest id.
double regret(const Matrix& q_hat, const Matrix& q_true);
double rmse_xa(const Matrix& q_hat, const Matrix& q_ref);
double rmse_agent(const DenseVec& mu_hat, const DenseVec& mu_ref);

struct MethodSummary {
  std::string method;
  double avg_rank = 0.0;
  int top3_count = 0;
  double excess_pct = 0.0;
  double macro_regret = 0.0;
};

struct CellMethodStats {
  std::string method;
  int seeds = 0;
  double mean_regret = 0.0;
  double se_regret = 0.0;
  double rank = 0.0;
  double mean_rmse_xa = 0.0;
  double mean_rmse_agent = 0.0;
  double mean_rmse_agent_dr = 0.0;
};

struct CellSummary {
  CellKey cell;
  std::vector<CellMethodStats> methods;  // sorted by method name
  std::string winner;
  std::string runner_up;
  double gap = 0.0;
};

struct AggregateReport {
  std::vector<MethodSummary> methods;  // sorted by method name
  std::vector<CellSummary> cells;      // sorted by cell key
};

/// Per-cell seed means, average ranks (ties share the mean rank), inclusive top-3 counts,
/// excess percentage over the per-cell best (floored at 1e-9) and the winner map.
AggregateReport aggregate(std::vector<CellReport> reports);

/// Sample standard error of the mean.
double standard_error(const std::vector<double>& v);

/// printf("%.17g").
std::string fmt17(double v);

std::string cell_csv_header();
std::string cell_csv_row(const CellReport& r);
std::string values_csv_header();
std::string values_csv_row(const CellReport& r);
std::string aggregate_csv(const AggregateReport& a);
std::string winner_map_csv(const AggregateReport& a);
std::string cell_means_csv(const AggregateReport& a);

/// Reads rows written by cell_csv_row (the mu vectors are not part of that file).
std::vector<CellReport> parse_cell_csv(const std::string& text);

}  // namespace ceval
