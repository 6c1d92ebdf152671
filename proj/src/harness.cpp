/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "ceval/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "ceval/methods.hpp"
#include "ceval/random.hpp"

namespace ceval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTagObs = 0x4F42534441ull;
constexpr std::uint64_t kTagObsFolds = 0x4F4253464Full;
constexpr std::uint64_t kTagExp = 0x4558504441ull;
constexpr std::uint64_t kTagCell = 0x43454C4Cull;
constexpr std::uint64_t kTagDr = 0x4452ull;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t u64(int v) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(v)); }

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write '" + p.string() + "'");
  out << text;
  if (!out) fail(ErrorCode::Io, "write failed for '" + p.string() + "'");
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_group(const CellKey& a, const CellKey& b) {
  return a.mode == b.mode && a.router == b.router && a.beta == b.beta && a.n_obs == b.n_obs;
}

std::size_t method_index(const RunConfig& cfg, const std::string& name) {
  for (std::size_t i = 0; i < cfg.methods.size(); ++i)
    if (family_name(cfg.methods[i]) == name) return i;
  return cfg.methods.size();
}

}  // namespace

std::uint64_t derive_cell_seed(std::uint64_t master_seed, const CellKey& key, std::uint64_t seed_index) {
  return derive_seed({master_seed, kTagCell, seed_index, double_bits(key.beta), u64(key.n_obs), u64(key.n_exp),
                      fnv1a(key.mode.key()), fnv1a(router_name(key.router))});
}

CellSeeds cell_seeds(std::uint64_t ms, const CellKey& key, std::uint64_t s) {
  CellSeeds c;
  const std::uint64_t r = fnv1a(router_name(key.router));
  c.obs = derive_seed({ms, kTagObs, s, double_bits(key.beta), u64(key.n_obs), r});
  c.obs_folds = derive_seed({ms, kTagObsFolds, s, double_bits(key.beta), u64(key.n_obs), r});
  c.exp = derive_seed({ms, kTagExp, s, u64(key.n_exp)});
  c.cv = derive_cell_seed(ms, key, s);
  c.dr = derive_seed({ms, kTagDr, s, u64(key.n_exp)});
  return c;
}

std::vector<CellKey> cell_grid(const RunConfig& cfg) {
  std::vector<CellKey> out;
  for (const auto& m : cfg.grid.modes)
    for (double b : cfg.grid.betas)
      for (int no : cfg.grid.n_obs)
        for (int ne : cfg.grid.n_exp) out.push_back(CellKey{b, no, ne, m, cfg.grid.router});
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SeedOutput run_seed(const RunConfig& cfg, const Generator& gen, std::uint64_t s, const std::vector<CellKey>& cells_in) {
  SeedOutput out;
  std::vector<CellKey> cells = cells_in;
  std::sort(cells.begin(), cells.end());
  bool need_obs = false, need_proxy = false;
  for (auto f : cfg.methods) {
    need_obs = need_obs || family_uses_obs(f);
    need_proxy = need_proxy || family_uses_proxy(f);
  }
  auto fail_all = [&](const std::vector<CellKey>& which, const std::string& msg) {
    for (const auto& k : which) out.failures.push_back({s, k.str(), "", msg});
  };

  std::vector<RewardMode> modes;
  for (const auto& k : cells)
    if (std::find(modes.begin(), modes.end(), k.mode) == modes.end()) modes.push_back(k.mode);
  World world;
  try {
    world = build_world(gen, s, cfg.world, modes);
  } catch (const std::exception& e) {
    fail_all(cells, std::string("world: ") + e.what());
    return out;
  }
  const int agents = gen.num_agents();

  for (std::size_t g0 = 0; g0 < cells.size();) {
    std::size_t g1 = g0;
    while (g1 < cells.size() && same_group(cells[g0], cells[g1])) ++g1;
    const CellKey& head = cells[g0];
    const CellSeeds hs = cell_seeds(cfg.master_seed, head, s);

    std::optional<Dataset> obs;
    std::optional<ObsCache> cache;
    Matrix sim_psi, sim_tilde;
    std::string obs_error;
    if (need_obs) {
      try {
        obs = generate_obs(gen, head.mode, head.router, head.beta, static_cast<std::size_t>(head.n_obs), hs.obs);
        cache = build_obs_cache(*obs, cfg.estimator, need_proxy, hs.obs_folds);
        if (cache->proxy) {
          sim_psi = cache->proxy->psi(world.sim_features);
          sim_tilde = cache->proxy->psi_tilde(sim_psi);
        }
      } catch (const std::exception& e) {
        obs_error = std::string("OBS: ") + e.what();
        cache.reset();
      }
    }

    for (std::size_t ci = g0; ci < g1; ++ci) {
      const CellKey& key = cells[ci];
      const CellSeeds cs = cell_seeds(cfg.master_seed, key, s);
      try {
        const Dataset exp = generate_exp(gen, key.mode, static_cast<std::size_t>(key.n_exp), cs.exp);
        const ExpView ev = make_exp_view(exp, cache ? &*cache : nullptr);
        const TruthTable& truth = world.table(key.mode);
        CellData d;
        d.cache = cache ? &*cache : nullptr;
        d.exp = &ev;
        d.sim = FeatureView{&world.sim_features, sim_psi.size() ? &sim_psi : nullptr,
                            sim_tilde.size() ? &sim_tilde : nullptr};
        d.n_eval = cfg.world.n_eval;
        d.agents = agents;
        d.draws = cfg.world.b_dm;
        d.cv_seed = cs.cv;
        d.dr_seed = cs.dr;
        for (auto f : cfg.methods) {
          const std::string name = family_name(f);
          if (family_uses_obs(f) && !cache) {
            out.failures.push_back({s, key.str(), name, obs_error});
            continue;
          }
          try {
            const MethodResult m = run_method(f, d, cfg);
            CellReport rep;
            rep.seed_index = s;
            rep.cell = key;
            rep.method = name;
            rep.regret = regret(m.values.q_dm, truth.q_eval);
            rep.rmse_xa = rmse_xa(m.values.q_dm, truth.q_eval);
            rep.rmse_agent = rmse_agent(m.values.mu_dm, truth.mu);
            rep.rmse_agent_dr = rmse_agent(m.values.mu_dr, truth.mu);
            rep.hparams = m.hparams;
            rep.mu_dm.assign(m.values.mu_dm.data(), m.values.mu_dm.data() + m.values.mu_dm.size());
            rep.mu_dr.assign(m.values.mu_dr.data(), m.values.mu_dr.data() + m.values.mu_dr.size());
            out.reports.push_back(std::move(rep));
            json t{{"seed", s},
                   {"cell", key.str()},
                   {"method", name},
                   {"hparams", m.hparams},
                   {"selection", m.selection.trace()}};
            out.traces.push_back(t.dump());
          } catch (const std::exception& e) {
            out.failures.push_back({s, key.str(), name, e.what()});
          }
        }
      } catch (const std::exception& e) {
        out.failures.push_back({s, key.str(), "", e.what()});
      }
    }
    g0 = g1;
  }
  return out;
}

SeedOutput run_cell(const RunConfig& cfg, const CellKey& key, std::uint64_t seed_index) {
  validate_config(cfg);
  const Generator gen(cfg.generator, cfg.master_seed);
  return run_seed(cfg, gen, seed_index, {key});
}

SweepResult run_sweep(const RunConfig& cfg, const std::string& out_dir, const Logger& log) {
  validate_config(cfg);
  const auto cells = cell_grid(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const Generator gen(cfg.generator, cfg.master_seed);
  const auto n = static_cast<std::size_t>(cfg.seeds);
  std::vector<SeedOutput> per_seed(n);
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  std::size_t done = 0;
  auto worker = [&]() {
    for (;;) {
      const std::size_t s = next.fetch_add(1);
      if (s >= n) return;
      per_seed[s] = run_seed(cfg, gen, s, cells);
      if (log) {
        std::lock_guard<std::mutex> lk(log_mu);
        ++done;
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        char buf[128];
        std::snprintf(buf, sizeof buf, "seed %zu done (%zu/%zu, %.1f s, %zu failures)", s, done, n, secs,
                      per_seed[s].failures.size());
        log(buf);
      }
    }
  };
  const int nt = std::max(1, std::min<int>(cfg.threads, static_cast<int>(n)));
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SweepResult r;
  for (auto& so : per_seed) {
    for (auto& rep : so.reports) r.reports.push_back(std::move(rep));
    for (auto& t : so.traces) r.traces.push_back(std::move(t));
    for (auto& f : so.failures) r.failures.push_back(std::move(f));
  }
  std::stable_sort(r.reports.begin(), r.reports.end(), [&](const CellReport& a, const CellReport& b) {
    if (a.cell < b.cell) return true;
    if (b.cell < a.cell) return false;
    if (a.seed_index != b.seed_index) return a.seed_index < b.seed_index;
    return method_index(cfg, a.method) < method_index(cfg, b.method);
  });
  if (!out_dir.empty()) write_sweep(cfg, r, out_dir);
  return r;
}

void write_sweep(const RunConfig& cfg, const SweepResult& r, const std::string& out_dir) {
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "cells", ec);
  if (ec) fail(ErrorCode::Io, "cannot create '" + (root / "cells").string() + "': " + ec.message());

  std::map<std::string, std::pair<std::string, std::string>> files;
  for (const auto& rep : r.reports) {
    auto& f = files[rep.cell.str()];
    if (f.first.empty()) {
      f.first = cell_csv_header();
      f.second = values_csv_header();
    }
    f.first += cell_csv_row(rep);
    f.second += values_csv_row(rep);
  }
  json outputs = json::array();
  for (const auto& [key, text] : files) {
    write_text(root / "cells" / (key + ".csv"), text.first);
    write_text(root / "cells" / (key + "_values.csv"), text.second);
    outputs.push_back("cells/" + key + ".csv");
    outputs.push_back("cells/" + key + "_values.csv");
  }
  if (!r.reports.empty()) {
    const AggregateReport agg = aggregate(r.reports);
    write_text(root / "aggregate.csv", aggregate_csv(agg));
    write_text(root / "winner_map.csv", winner_map_csv(agg));
    write_text(root / "cell_means.csv", cell_means_csv(agg));
    for (const char* f : {"aggregate.csv", "winner_map.csv", "cell_means.csv"}) outputs.push_back(f);
  }
  std::string traces;
  for (const auto& t : r.traces) traces += t + "\n";
  write_text(root / "selection_trace.jsonl", traces);
  std::string failures;
  for (const auto& f : r.failures)
    failures += json{{"seed", f.seed_index}, {"cell", f.cell}, {"method", f.method}, {"message", f.message}}.dump() + "\n";
  write_text(root / "failures.jsonl", failures);
  outputs.push_back("selection_trace.jsonl");
  outputs.push_back("failures.jsonl");

  json cells = json::array();
  for (const auto& key : cell_grid(cfg)) {
    json seeds = json::array();
    for (int s = 0; s < cfg.seeds; ++s) {
      const CellSeeds cs = cell_seeds(cfg.master_seed, key, static_cast<std::uint64_t>(s));
      seeds.push_back({{"seed_index", s}, {"obs", cs.obs}, {"obs_folds", cs.obs_folds}, {"exp", cs.exp},
                       {"cv", cs.cv}, {"dr", cs.dr}});
    }
    cells.push_back({{"cell", key.str()}, {"seeds", seeds}});
  }
  json manifest{{"software", {{"name", "ceval"}, {"version", kVersion}}},
                {"config", config_to_json(cfg)},
                {"cells", cells},
                {"outputs", outputs},
                {"reports", r.reports.size()},
                {"failures", r.failures.size()}};
  write_text(root / "manifest.json", manifest.dump(2) + "\n");
}

AggregateReport report_dir(const std::string& run_dir, const std::string& out_dir) {
  const fs::path cells = fs::path(run_dir) / "cells";
  if (!fs::is_directory(cells)) fail(ErrorCode::Io, "no cells directory under '" + run_dir + "'");
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(cells)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && e.path().extension() == ".csv" && name.find("_values.csv") == std::string::npos)
      paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) fail(ErrorCode::Io, "no cell files under '" + cells.string() + "'");
  std::vector<CellReport> reports;
  for (const auto& p : paths) {
    auto part = parse_cell_csv(read_text(p));
    for (auto& r : part) reports.push_back(std::move(r));
  }
  const AggregateReport agg = aggregate(reports);
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create '" + out_dir + "': " + ec.message());
    write_text(fs::path(out_dir) / "aggregate.csv", aggregate_csv(agg));
    write_text(fs::path(out_dir) / "winner_map.csv", winner_map_csv(agg));
    write_text(fs::path(out_dir) / "cell_means.csv", cell_means_csv(agg));
  }
  return agg;
}

namespace {

std::string rows_csv(const Dataset& d) {
  std::ostringstream o;
  o << "context_id,source,action,outcome,segment";
  for (Eigen::Index k = 0; k < d.aux.cols(); ++k) o << ",aux_" << k;
  o << '\n';
  const bool aux = d.has_aux();
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    o << d.context_id[i] << ',' << (d.source == Source::Obs ? "OBS" : "EXP") << ',' << d.action[i] << ','
      << fmt17(d.outcome[r]) << ',' << d.segment[i];
    if (aux)
      for (Eigen::Index k = 0; k < d.aux.cols(); ++k) o << ',' << fmt17(d.aux(r, k));
    o << '\n';
  }
  return o.str();
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void write_generated(const RunConfig& cfg, const CellKey& key, std::uint64_t seed_index, const std::string& out_dir) {
  validate_config(cfg);
  const Generator gen(cfg.generator, cfg.master_seed);
  const CellSeeds cs = cell_seeds(cfg.master_seed, key, seed_index);
  const Dataset obs = generate_obs(gen, key.mode, key.router, key.beta, static_cast<std::size_t>(key.n_obs), cs.obs);
  const Dataset exp = generate_exp(gen, key.mode, static_cast<std::size_t>(key.n_exp), cs.exp);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create '" + out_dir + "': " + ec.message());
  const fs::path root(out_dir);
  write_text(root / "obs.csv", rows_csv(obs));
  write_text(root / "exp.csv", rows_csv(exp));
  json side{{"cell", key.str()},
            {"seed_index", seed_index},
            {"seeds", {{"obs", cs.obs}, {"exp", cs.exp}}},
            {"densify_dim", cfg.generator.densify_dim},
            {"obs_features", matrix_json(obs.features)},
            {"exp_features", matrix_json(exp.features)}};
  write_text(root / "features.json", side.dump() + "\n");
}

}  // namespace ceval
