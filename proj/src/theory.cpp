/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "ceval/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/QR>

#include "ceval/estimators.hpp"
#include "ceval/random.hpp"

namespace ceval {

namespace {

constexpr std::uint64_t kTagTheory = 0x5448454Full;

Matrix gaussian(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

DenseVec gaussian(Rng& rng, Eigen::Index n) {
  DenseVec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

CheckReport finish(std::string name, double worst, double tol, int instances, std::string detail = {}) {
  CheckReport r;
  r.name = std::move(name);
  r.max_violation = worst;
  r.tolerance = tol;
  r.instances = instances;
  r.passed = std::isfinite(worst) && worst <= tol;
  r.detail = std::move(detail);
  return r;
}

}  // namespace

DenseVec centered_ridge(const Matrix& psi, const DenseVec& y, double penalty, const DenseVec& beta_obs) {
  require(psi.rows() == y.size(), "centered ridge: shape mismatch");
  require(beta_obs.size() == psi.cols(), "centered ridge: center has the wrong length");
  require(penalty > 0.0, "centered ridge: penalty must be positive");
  Matrix a = psi.transpose() * psi;
  a.diagonal().array() += penalty;
  const DenseVec rhs = psi.transpose() * y + penalty * beta_obs;
  return a.ldlt().solve(rhs);
}

Projection l2_project(const DenseVec& b, const Matrix& psi, const DenseVec& weights) {
  require(b.size() == psi.rows() && weights.size() == b.size(), "projection: shape mismatch");
  require((weights.array() >= 0.0).all(), "projection: negative weight");
  const DenseVec sw = weights.array().sqrt();
  const Matrix x = sw.asDiagonal() * psi;
  const DenseVec t = sw.cwiseProduct(b);
  Projection p;
  p.coef = x.completeOrthogonalDecomposition().solve(t);
  p.h = psi * p.coef;
  p.residual = b - p.h;
  return p;
}

double weighted_sq_norm(const DenseVec& v, const DenseVec& w) { return (w.array() * v.array().square()).sum(); }

double oracle_risk(const RiskInstance& inst, const DenseVec& f) {
  return inst.sigma2 + weighted_sq_norm(f - inst.r_star, inst.weights);
}

RiskInstance RiskInstance::random(std::uint64_t seed, int support, int d_psi, int d_phi) {
  require(support >= 2 && d_psi >= 2 && d_phi >= 2, "risk instance sizes too small");
  Rng rng(seed);
  RiskInstance r;
  r.weights.resize(support);
  for (int i = 0; i < support; ++i) r.weights[i] = 0.2 + rng.uniform();
  r.weights /= r.weights.sum();
  const Matrix z = gaussian(rng, support, 3);
  r.psi.resize(support, d_psi);
  r.psi.col(0).setOnes();
  r.psi.rightCols(d_psi - 1) = gaussian(rng, support, d_psi - 1);
  r.phi.resize(support, d_phi);
  r.phi.col(0).setOnes();
  r.phi.rightCols(d_phi - 1) = gaussian(rng, support, d_phi - 1);
  r.r_star.resize(support);
  r.f_obs.resize(support);
  const double shift = uniform(rng, -0.2, 0.2);
  for (int i = 0; i < support; ++i) {
    const double s = 0.6 * z(i, 0) + 0.3 * r.psi(i, 1) - 0.2 * r.phi(i, 1);
    r.r_star[i] = 1.0 / (1.0 + std::exp(-s));
    r.f_obs[i] = r.r_star[i] + shift + 0.15 * std::sin(z(i, 1) + r.psi(i, 2)) + 0.1 * z(i, 2);
  }
  r.sigma2 = uniform(rng, 0.01, 0.1);
  return r;
}

CheckReport check_centered_ridge(int instances, std::uint64_t seed) {
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    Rng rng(derive_seed({seed, kTagTheory, 1, static_cast<std::uint64_t>(k)}));
    const int n = 30 + rng.below(60), d = 2 + rng.below(8);
    const Matrix psi = gaussian(rng, n, d) * uniform(rng, 0.3, 3.0);
    const DenseVec y = gaussian(rng, n);
    const DenseVec b0 = gaussian(rng, d);
    const double lam = std::exp(uniform(rng, std::log(0.01), std::log(100.0)));
    const DenseVec beta = centered_ridge(psi, y, lam, b0);
    const double scale = 1.0 + beta.norm() + b0.norm();

    // Stacked least squares [psi; sqrt(lam) I] beta ~ [y; sqrt(lam) b0].
    Matrix stacked(n + d, d);
    stacked.topRows(n) = psi;
    stacked.bottomRows(d) = std::sqrt(lam) * Matrix::Identity(d, d);
    DenseVec rhs(n + d);
    rhs.head(n) = y;
    rhs.tail(d) = std::sqrt(lam) * b0;
    const DenseVec qr = stacked.householderQr().solve(rhs);
    worst = std::max(worst, (beta - qr).norm() / scale);

    // Zero gradient.
    const DenseVec grad = psi.transpose() * (psi * beta - y) + lam * (beta - b0);
    worst = std::max(worst, grad.norm() / (1.0 + (psi.transpose() * y).norm() + lam * b0.norm()));

    // Grounded correction on centered features recovers the same coefficients.
    const DenseVec mean = psi.colwise().mean().transpose();
    const Matrix pc = psi.rowwise() - mean.transpose();
    const DenseVec f = pc * b0 + DenseVec::Constant(n, uniform(rng, -1.0, 1.0));
    const LinearModel corr = fit_correction(pc, f, y, lam);
    const DenseVec via_fit = b0 - corr.weights;
    worst = std::max(worst, (via_fit - centered_ridge(pc, y, lam, b0)).norm() / scale);
  }
  return finish("centered_ridge", worst, 1e-8, instances, "closed form vs stacked QR, gradient, grounded fit");
}

CheckReport check_oracle_grounding_gain(int instances, std::uint64_t seed) {
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    const auto inst = RiskInstance::random(derive_seed({seed, kTagTheory, 2, static_cast<std::uint64_t>(k)}));
    const DenseVec b = inst.f_obs - inst.r_star;
    const Projection p = l2_project(b, inst.psi, inst.weights);
    const DenseVec ortho = inst.psi.transpose() * inst.weights.cwiseProduct(p.residual);
    worst = std::max(worst, ortho.cwiseAbs().maxCoeff());
    const double base = oracle_risk(inst, inst.f_obs);
    const double hn = weighted_sq_norm(p.h, inst.weights);
    for (double a : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0, 1.25, 1.5, 2.0}) {
      const double lhs = oracle_risk(inst, inst.f_obs - a * p.h);
      const double rhs = base - (2.0 * a - a * a) * hn;
      worst = std::max(worst, std::abs(lhs - rhs));
      if (a <= 1.0 && lhs > base + 1e-12) worst = std::max(worst, lhs - base);
    }
  }
  return finish("oracle_grounding_gain", worst, 1e-10, instances, "risk identity on a 10-point alpha grid");
}

CheckReport check_noisy_correction(int instances, std::uint64_t seed) {
  double worst = 0.0;
  int sign_errors = 0;
  for (int k = 0; k < instances; ++k) {
    const auto inst = RiskInstance::random(derive_seed({seed, kTagTheory, 3, static_cast<std::uint64_t>(k)}));
    Rng rng(derive_seed({seed, kTagTheory, 33, static_cast<std::uint64_t>(k)}));
    const DenseVec b = inst.f_obs - inst.r_star;
    const auto S = b.size();
    const DenseVec h_proj = l2_project(b, inst.psi, inst.weights).h;
    const std::vector<DenseVec> corrections{b, -b, h_proj, h_proj + 0.3 * gaussian(rng, S),
                                            0.1 * gaussian(rng, S)};
    for (const auto& h : corrections) {
      for (int t = 0; t < 5; ++t) {
        const double a = uniform(rng, 0.0, 2.0);
        const double lhs = oracle_risk(inst, inst.f_obs - a * h) - oracle_risk(inst, inst.f_obs);
        const double hn = weighted_sq_norm(h, inst.weights);
        const double inner = (inst.weights.array() * b.array() * h.array()).sum();
        const double rhs = a * a * hn - 2.0 * a * inner;
        worst = std::max(worst, std::abs(lhs - rhs));
        const bool helps = inner > 0.5 * a * hn;
        if (std::abs(lhs) > 1e-9 && helps != (lhs < 0.0)) ++sign_errors;
      }
    }
  }
  if (sign_errors > 0) worst = std::max(worst, 1.0);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d sign mismatches", sign_errors);
  return finish("noisy_correction", worst, 1e-10, instances, buf);
}

CheckReport check_residual_vs_pooling(int instances, std::uint64_t seed) {
  double worst = 0.0;
  int order_errors = 0;
  for (int k = 0; k < instances; ++k) {
    auto inst = RiskInstance::random(derive_seed({seed, kTagTheory, 4, static_cast<std::uint64_t>(k)}));
    Rng rng(derive_seed({seed, kTagTheory, 44, static_cast<std::uint64_t>(k)}));
    const auto& w = inst.weights;

    auto compare = [&](const RiskInstance& in) {
      const DenseVec gap = in.r_star - in.f_obs;
      const Projection pr = l2_project(gap, in.psi, w);
      const Projection pp = l2_project(in.r_star, in.phi, w);
      const double risk_res = oracle_risk(in, in.f_obs + pr.h);
      const double risk_pool = oracle_risk(in, pp.h);
      // Pythagoras: dist^2 = ||v||^2 - ||proj v||^2.
      const double d_res = weighted_sq_norm(gap, w) - weighted_sq_norm(pr.h, w);
      const double d_pool = weighted_sq_norm(in.r_star, w) - weighted_sq_norm(pp.h, w);
      worst = std::max(worst, std::abs((risk_res - risk_pool) - (d_res - d_pool)));
      worst = std::max(worst, std::abs(risk_res - in.sigma2 - d_res));
      return std::pair<double, double>{risk_res, risk_pool};
    };
    compare(inst);

    // Residual class contains r*, pooled class does not.
    RiskInstance a = inst;
    a.r_star = a.f_obs + a.psi * (0.1 * gaussian(rng, a.psi.cols()));
    const auto [ra, pa] = compare(a);
    worst = std::max(worst, std::abs(ra - a.sigma2));
    if (!(pa > ra + 1e-6)) ++order_errors;

    // Nested: span psi within span phi and f_obs in span phi, so pooling is never worse.
    RiskInstance c = inst;
    c.phi.resize(inst.phi.rows(), inst.phi.cols() + inst.psi.cols() - 1);
    c.phi << inst.phi, inst.psi.rightCols(inst.psi.cols() - 1);
    c.f_obs = c.phi * (0.2 * gaussian(rng, c.phi.cols()));
    const auto [rc, pc] = compare(c);
    if (pc > rc + 1e-12) ++order_errors;
  }
  if (order_errors > 0) worst = std::max(worst, 1.0);
  char buf[96];
  std::snprintf(buf, sizeof buf, "%d ordering errors", order_errors);
  return finish("residual_vs_pooling", worst, 1e-10, instances, buf);
}

CheckReport check_obs_center(int instances, std::uint64_t seed, int draws) {
  require(draws >= 100, "Monte Carlo needs at least 100 draws");
  double worst_z = 0.0;
  double worst_exact = 0.0;
  for (int k = 0; k < instances; ++k) {
    Rng rng(derive_seed({seed, kTagTheory, 5, static_cast<std::uint64_t>(k)}));
    const int n = 20 + rng.below(40), d = 2 + rng.below(5);
    const Matrix psi = gaussian(rng, n, d);
    const Matrix gm = gaussian(rng, d, d);
    const Matrix G = gm.transpose() * gm / d + 0.1 * Matrix::Identity(d, d);
    const double sigma = uniform(rng, 0.3, 1.5);
    const double lam = std::exp(uniform(rng, std::log(0.5), std::log(50.0)));
    const DenseVec bstar = gaussian(rng, d);
    DenseVec bobs;
    switch (k % 4) {
      case 0: bobs = bstar; break;
      case 1: bobs = 2.0 * bstar; break;  // tie
      case 2: bobs = bstar + 0.3 * gaussian(rng, d); break;
      default: bobs = bstar + 3.0 * gaussian(rng, d); break;
    }

    const Matrix S = psi.transpose() * psi;
    Matrix reg = S;
    reg.diagonal().array() += lam;
    const Matrix A = reg.inverse();
    const Matrix AGA = A * G * A;
    const double trace_term = sigma * sigma * (G * A * S * A).trace();
    const DenseVec delta = bstar - bobs;
    const double r_exp = lam * lam * bstar.dot(AGA * bstar) + trace_term;
    const double r_grd = lam * lam * delta.dot(AGA * delta) + trace_term;

    // Rule: grounded is no worse iff delta' AGA delta <= beta*' AGA beta*.
    const bool rule = delta.dot(AGA * delta) <= bstar.dot(AGA * bstar) + 1e-12;
    if (rule != (r_grd <= r_exp + 1e-12)) worst_exact = std::max(worst_exact, 1.0);
    if (k % 4 == 0) worst_exact = std::max(worst_exact, std::abs(r_grd - trace_term));
    if (k % 4 == 1) worst_exact = std::max(worst_exact, std::abs(r_grd - r_exp));

    const Matrix APt = A * psi.transpose();
    const DenseVec mean_fit = APt * (psi * bstar);
    double se = 0.0, sg = 0.0, se2 = 0.0, sg2 = 0.0;
    for (int t = 0; t < draws; ++t) {
      const DenseVec eps = sigma * gaussian(rng, n);
      const DenseVec noise = APt * eps;
      const DenseVec ee = mean_fit + noise - bstar;
      const DenseVec eg = ee + lam * (A * bobs);
      const double le = ee.dot(G * ee), lg = eg.dot(G * eg);
      se += le;
      se2 += le * le;
      sg += lg;
      sg2 += lg * lg;
    }
    const double m = draws;
    auto z = [&](double s, double s2, double closed) {
      const double mean = s / m;
      const double var = std::max(0.0, (s2 / m - mean * mean) * m / (m - 1.0));
      const double sem = std::sqrt(var / m);
      return std::abs(mean - closed) / std::max(sem, 1e-300);
    };
    worst_z = std::max({worst_z, z(se, se2, r_exp), z(sg, sg2, r_grd)});
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d Monte Carlo draws per instance, exact-part violation %.3g", draws, worst_exact);
  CheckReport r = finish("obs_center_corollary", worst_z, 3.0, instances, buf);
  if (worst_exact > 1e-10) r.passed = false;
  return r;
}

std::vector<CheckReport> run_theory_suite(int instances, std::uint64_t seed) {
  require(instances >= 1, "theory suite needs at least one instance");
  return {check_centered_ridge(instances, seed), check_oracle_grounding_gain(instances, seed),
          check_noisy_correction(instances, seed), check_residual_vs_pooling(instances, seed),
          check_obs_center(instances, seed)};
}

std::string format_check(const CheckReport& r) {
  char buf[384];
  std::snprintf(buf, sizeof buf, "%-22s %s max_violation=%.3e tol=%.1e instances=%d (%s)", r.name.c_str(),
                r.passed ? "PASS" : "FAIL", r.max_violation, r.tolerance, r.instances, r.detail.c_str());
  return buf;
}

}  // namespace ceval
