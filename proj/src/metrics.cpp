/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "ceval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace ceval {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string CellKey::str() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "b%g_obs%d_exp%d_", beta, n_obs, n_exp);
  return buf + mode.key() + "_" + router_name(router);
}

bool operator<(const CellKey& a, const CellKey& b) {
  const auto ka = a.mode.key(), kb = b.mode.key();
  const auto ra = router_name(a.router), rb = router_name(b.router);
  return std::tie(ka, ra, a.beta, a.n_obs, a.n_exp) < std::tie(kb, rb, b.beta, b.n_obs, b.n_exp);
}

double regret(const Matrix& q_hat, const Matrix& q_true) {
  require(q_hat.rows() == q_true.rows() && q_hat.cols() == q_true.cols(), "regret: grid shape mismatch");
  require(q_hat.rows() >= 1 && q_hat.cols() >= 1, "regret: empty grid");
  require(q_hat.allFinite() && q_true.allFinite(), "regret: missing grid entries", ErrorCode::Numeric);
  double total = 0.0;
  for (Eigen::Index i = 0; i < q_hat.rows(); ++i) {
    Eigen::Index pick = 0;
    for (Eigen::Index a = 1; a < q_hat.cols(); ++a)
      if (q_hat(i, a) > q_hat(i, pick)) pick = a;
    total += q_true.row(i).maxCoeff() - q_true(i, pick);
  }
  return total / static_cast<double>(q_hat.rows());
}

double rmse_xa(const Matrix& q_hat, const Matrix& q_ref) {
  require(q_hat.rows() == q_ref.rows() && q_hat.cols() == q_ref.cols(), "rmse: shape mismatch");
  require(q_hat.size() > 0, "rmse: empty grid");
  return std::sqrt((q_hat - q_ref).squaredNorm() / static_cast<double>(q_hat.size()));
}

double rmse_agent(const DenseVec& mu_hat, const DenseVec& mu_ref) {
  require(mu_hat.size() == mu_ref.size(), "rmse: shape mismatch");
  require(mu_hat.size() > 0, "rmse: empty input");
  return std::sqrt((mu_hat - mu_ref).squaredNorm() / static_cast<double>(mu_hat.size()));
}

double standard_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

AggregateReport aggregate(std::vector<CellReport> reports) {
  require(!reports.empty(), "aggregate: no reports");
  std::sort(reports.begin(), reports.end(), [](const CellReport& a, const CellReport& b) {
    if (a.cell < b.cell) return true;
    if (b.cell < a.cell) return false;
    return std::tie(a.method, a.seed_index) < std::tie(b.method, b.seed_index);
  });

  std::vector<std::pair<CellKey, std::map<std::string, std::vector<const CellReport*>>>> cells;
  for (const auto& r : reports) {
    if (cells.empty() || !(cells.back().first == r.cell)) cells.push_back({r.cell, {}});
    cells.back().second[r.method].push_back(&r);
  }
  std::set<std::string> method_set;
  for (const auto& [name, _] : cells.front().second) method_set.insert(name);
  for (const auto& [key, by_method] : cells) {
    std::set<std::string> s;
    for (const auto& [name, _] : by_method) s.insert(name);
    require(s == method_set, "aggregate: inconsistent method sets across cells");
  }

  AggregateReport out;
  std::map<std::string, MethodSummary> summary;
  for (const auto& m : method_set) summary[m].method = m;
  for (const auto& [key, by_method] : cells) {
    CellSummary cs;
    cs.cell = key;
    for (const auto& [name, rows] : by_method) {
      CellMethodStats st;
      st.method = name;
      st.seeds = static_cast<int>(rows.size());
      std::vector<double> reg;
      for (const auto* r : rows) {
        reg.push_back(r->regret);
        st.mean_regret += r->regret;
        st.mean_rmse_xa += r->rmse_xa;
        st.mean_rmse_agent += r->rmse_agent;
        st.mean_rmse_agent_dr += r->rmse_agent_dr;
      }
      const double n = static_cast<double>(rows.size());
      st.mean_regret /= n;
      st.mean_rmse_xa /= n;
      st.mean_rmse_agent /= n;
      st.mean_rmse_agent_dr /= n;
      st.se_regret = standard_error(reg);
      cs.methods.push_back(st);
    }
    // Average ranks over exact ties.
    std::vector<std::size_t> order(cs.methods.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cs.methods[a].mean_regret < cs.methods[b].mean_regret; });
    for (std::size_t p = 0; p < order.size();) {
      std::size_t q = p;
      while (q + 1 < order.size() && cs.methods[order[q + 1]].mean_regret == cs.methods[order[p]].mean_regret) ++q;
      const double avg = 0.5 * static_cast<double>(p + q) + 1.0;
      for (std::size_t t = p; t <= q; ++t) {
        cs.methods[order[t]].rank = avg;
        if (p + 1 <= 3) summary[cs.methods[order[t]].method].top3_count += 1;
      }
      p = q + 1;
    }
    const double best = cs.methods[order[0]].mean_regret;
    cs.winner = cs.methods[order[0]].method;
    if (order.size() > 1) {
      cs.runner_up = cs.methods[order[1]].method;
      cs.gap = cs.methods[order[1]].mean_regret - best;
    }
    for (const auto& st : cs.methods) {
      auto& ms = summary[st.method];
      ms.avg_rank += st.rank;
      ms.excess_pct += 100.0 * (st.mean_regret - best) / std::max(best, 1e-9);
      ms.macro_regret += st.mean_regret;
    }
    out.cells.push_back(std::move(cs));
  }
  const double nc = static_cast<double>(out.cells.size());
  for (auto& [name, ms] : summary) {
    ms.avg_rank /= nc;
    ms.excess_pct /= nc;
    ms.macro_regret /= nc;
    out.methods.push_back(ms);
  }
  return out;
}

std::string cell_csv_header() {
  return "seed,beta,n_obs,n_exp,reward_mode,router,method,regret,rmse_xa,rmse_agent_dm,rmse_agent_dr,hparams\n";
}

std::string cell_csv_row(const CellReport& r) {
  std::ostringstream o;
  o << r.seed_index << ',' << fmt17(r.cell.beta) << ',' << r.cell.n_obs << ',' << r.cell.n_exp << ','
    << r.cell.mode.key() << ',' << router_name(r.cell.router) << ',' << r.method << ',' << fmt17(r.regret) << ','
    << fmt17(r.rmse_xa) << ',' << fmt17(r.rmse_agent) << ',' << fmt17(r.rmse_agent_dr) << ',' << r.hparams << '\n';
  return o.str();
}

std::string values_csv_header() { return "seed,method,agent,mu_dm,mu_dr\n"; }

std::string values_csv_row(const CellReport& r) {
  std::ostringstream o;
  for (std::size_t a = 0; a < r.mu_dm.size(); ++a) {
    o << r.seed_index << ',' << r.method << ',' << a << ',' << fmt17(r.mu_dm[a]) << ','
      << (a < r.mu_dr.size() ? fmt17(r.mu_dr[a]) : std::string("nan")) << '\n';
  }
  return o.str();
}

std::string aggregate_csv(const AggregateReport& a) {
  std::ostringstream o;
  o << "method,avg_rank,top3_count,excess_pct,macro_regret\n";
  for (const auto& m : a.methods)
    o << m.method << ',' << fmt17(m.avg_rank) << ',' << m.top3_count << ',' << fmt17(m.excess_pct) << ','
      << fmt17(m.macro_regret) << '\n';
  return o.str();
}

std::string winner_map_csv(const AggregateReport& a) {
  std::ostringstream o;
  o << "beta,n_obs,n_exp,reward_mode,router,winner,runner_up,gap\n";
  for (const auto& c : a.cells)
    o << fmt17(c.cell.beta) << ',' << c.cell.n_obs << ',' << c.cell.n_exp << ',' << c.cell.mode.key() << ','
      << router_name(c.cell.router) << ',' << c.winner << ',' << c.runner_up << ',' << fmt17(c.gap) << '\n';
  return o.str();
}

std::string cell_means_csv(const AggregateReport& a) {
  std::ostringstream o;
  o << "beta,n_obs,n_exp,reward_mode,router,method,seeds,mean_regret,se_regret,rank,mean_rmse_xa,"
       "mean_rmse_agent_dm,mean_rmse_agent_dr\n";
  for (const auto& c : a.cells)
    for (const auto& m : c.methods)
      o << fmt17(c.cell.beta) << ',' << c.cell.n_obs << ',' << c.cell.n_exp << ',' << c.cell.mode.key() << ','
        << router_name(c.cell.router) << ',' << m.method << ',' << m.seeds << ',' << fmt17(m.mean_regret) << ','
        << fmt17(m.se_regret) << ',' << fmt17(m.rank) << ',' << fmt17(m.mean_rmse_xa) << ','
        << fmt17(m.mean_rmse_agent) << ',' << fmt17(m.mean_rmse_agent_dr) << '\n';
  return o.str();
}

std::vector<CellReport> parse_cell_csv(const std::string& text) {
  std::vector<CellReport> out;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      require(line + "\n" == cell_csv_header(), "cell csv: unexpected header", ErrorCode::Io);
      header = false;
      continue;
    }
    std::vector<std::string> f;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    f.push_back(cur);
    require(f.size() == 12, "cell csv: expected 12 fields", ErrorCode::Io);
    try {
      CellReport r;
      r.seed_index = std::stoull(f[0]);
      r.cell.beta = std::stod(f[1]);
      r.cell.n_obs = std::stoi(f[2]);
      r.cell.n_exp = std::stoi(f[3]);
      r.cell.mode = RewardMode::parse(f[4]);
      r.cell.router = parse_router(f[5]);
      r.method = f[6];
      r.regret = std::stod(f[7]);
      r.rmse_xa = std::stod(f[8]);
      r.rmse_agent = std::stod(f[9]);
      r.rmse_agent_dr = std::stod(f[10]);
      r.hparams = f[11];
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      fail(ErrorCode::Io, "cell csv: malformed number in '" + line + "'");
    }
  }
  return out;
}

}  // namespace ceval
