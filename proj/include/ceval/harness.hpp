/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ceval/config.hpp"
#include "ceval/metrics.hpp"
#include "ceval/scm.hpp"

namespace ceval {

inline constexpr const char* kVersion = "0.1.0";

/// Seeds of one (seed index, cell). OBS and EXP draws do not depend on the reward mode, so
/// cells that differ only in the reward map see the same rows.
struct CellSeeds {
  std::uint64_t obs = 0;
  std::uint64_t obs_folds = 0;
  std::uint64_t exp = 0;
  std::uint64_t cv = 0;
  std::uint64_t dr = 0;
};

std::uint64_t derive_cell_seed(std::uint64_t master_seed, const CellKey& key, std::uint64_t seed_index);
CellSeeds cell_seeds(std::uint64_t master_seed, const CellKey& key, std::uint64_t seed_index);

/// Cartesian product of the grid axes in sorted order.
std::vector<CellKey> cell_grid(const RunConfig& cfg);

struct CellFailure {
  std::uint64_t seed_index = 0;
  std::string cell;
  std::string method;  // empty when the whole cell failed
  std::string message;
};

struct SeedOutput {
  std::vector<CellReport> reports;
  std::vector<std::string> traces;  // one JSON object per (cell, method)
  std::vector<CellFailure> failures;
};

/// Every requested cell for one seed index; failures are recorded and the run continues.
SeedOutput run_seed(const RunConfig& cfg, const Generator& gen, std::uint64_t seed_index,
                    const std::vector<CellKey>& cells);

/// One cell for one seed.
SeedOutput run_cell(const RunConfig& cfg, const CellKey& key, std::uint64_t seed_index);

struct SweepResult {
  std::vector<CellReport> reports;  // sorted by (cell, seed, method order)
  std::vector<std::string> traces;
  std::vector<CellFailure> failures;
};

using Logger = std::function<void(const std::string&)>;

/// All cells and seeds, `cfg.threads` workers over seed indices. Writes outputs when `out_dir`
/// is non-empty.
SweepResult run_sweep(const RunConfig& cfg, const std::string& out_dir, const Logger& log = {});

void write_sweep(const RunConfig& cfg, const SweepResult& r, const std::string& out_dir);

/// Re-aggregates cells/*.csv under `run_dir` and writes the summary tables to `out_dir`.
AggregateReport report_dir(const std::string& run_dir, const std::string& out_dir);

/// OBS and EXP rows of one cell as CSV plus a JSON sidecar with the feature matrices.
void write_generated(const RunConfig& cfg, const CellKey& key, std::uint64_t seed_index, const std::string& out_dir);

}  // namespace ceval
