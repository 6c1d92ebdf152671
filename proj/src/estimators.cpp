/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "ceval/estimators.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "ceval/random.hpp"

namespace ceval {

namespace {

struct FamilyInfo {
  Family family;
  const char* name;
  bool proxy, obs, exp;
};

constexpr FamilyInfo kFamilies[] = {
    {Family::ExpOnly, "EXP_ONLY", false, false, true},
    {Family::ObsOnly, "OBS_ONLY", false, true, false},
    {Family::ProxyExp, "PROXY_EXP", true, true, true},
    {Family::GroundedLin, "GROUNDED_LIN", true, true, true},
    {Family::GroundedRich, "GROUNDED_RICH", true, true, true},
    {Family::GroundedAnchor, "GROUNDED_ANCHOR", true, true, true},
    {Family::Cvci, "CVCI", false, true, true},
    {Family::CvciRes, "CVCI_RES", true, true, true},
};

const FamilyInfo& info(Family f) {
  for (const auto& i : kFamilies)
    if (i.family == f) return i;
  fail(ErrorCode::Internal, "unknown family");
}

// First loading above tolerance made positive, row by row.
void fix_signs(Matrix& rows) {
  for (Eigen::Index k = 0; k < rows.rows(); ++k) {
    auto row = rows.row(k);
    const double big = row.cwiseAbs().maxCoeff();
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      if (std::abs(row[j]) > 1e-12 * big) {
        if (row[j] < 0.0) row *= -1.0;
        break;
      }
    }
  }
}

// Population covariance and cross-covariance from sufficient statistics.
Matrix covariance(const NormalEquations& ne) {
  const double w = ne.weight_sum();
  const DenseVec mean = ne.x_sum() / w;
  return ne.gram() / w - mean * mean.transpose();
}

DenseVec clip_all(DenseVec v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = clip01(v[i]);
  return v;
}

DenseVec linear(const LinearModel& m, const Matrix& x) {
  require(x.cols() == m.weights.size(), "model: feature dimension mismatch");
  DenseVec out = x * m.weights;
  out.array() += m.intercept;
  return out;
}

ProxyMap proxy_from_stats(const NormalEquations& ne, Eigen::Index first_aux, Eigen::Index aux_count,
                          const ProxyOptions& opt) {
  const Eigen::Index dim = ne.dim();
  const int d = opt.d_psi;
  require(d >= 1 && d <= dim, "proxy dimension must lie in [1, feature dimension]");
  require(opt.aux_penalty >= 0.0, "aux penalty must be nonnegative");
  const double w = ne.weight_sum();
  const Matrix cxx = covariance(ne);
  const DenseVec mean = ne.x_sum() / w;
  Matrix cxz(dim, aux_count);
  for (Eigen::Index k = 0; k < aux_count; ++k) {
    const Eigen::Index t = first_aux + k;
    cxz.col(k) = ne.xy().col(t) / w - mean * (ne.y_sum()[t] / w);
  }
  Matrix a = cxx;
  a.diagonal().array() += opt.aux_penalty;
  const Matrix coef = solve_spd(a, cxz, false);  // dim x K

  Eigen::JacobiSVD<Matrix> svd(coef, Eigen::ComputeThinU);
  const DenseVec& s = svd.singularValues();
  Eigen::Index r = 0;
  const double s0 = s.size() ? s[0] : 0.0;
  while (r < s.size() && s0 > 0.0 && s[r] > 1e-10 * s0) ++r;
  r = std::min<Eigen::Index>(r, d);

  Matrix dirs(d, dim);
  if (r > 0) dirs.topRows(r) = svd.matrixU().leftCols(r).transpose();
  if (r < d) {
    Matrix proj = Matrix::Identity(dim, dim);
    if (r > 0) proj -= svd.matrixU().leftCols(r) * svd.matrixU().leftCols(r).transpose();
    const Matrix rest = proj * cxx * proj;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (rest + rest.transpose()));
    const auto& ev = es.eigenvalues();
    const Eigen::Index fill = d - r;
    if (ev[dim - fill] <= 1e-12 * std::max(ev[dim - 1], 1e-300)) fail(ErrorCode::Numeric, "insufficient rank");
    for (Eigen::Index k = 0; k < fill; ++k) dirs.row(r + k) = es.eigenvectors().col(dim - 1 - k).transpose();
  }
  fix_signs(dirs);

  ProxyMap map;
  map.aux_directions = static_cast<int>(r);
  map.projector.matrix = dirs;
  map.projector.centering = mean;
  const Matrix cpsi = dirs * cxx * dirs.transpose();
  DenseVec scale = cpsi.diagonal().cwiseMax(0.0).cwiseSqrt();
  if ((scale.array() <= 1e-300).any()) fail(ErrorCode::Numeric, "insufficient rank");
  map.projector.scaling = scale;

  // Standardized principal compression of psi, from its covariance on OBS.
  const int dc = std::min(opt.d_compress, d);
  require(dc >= 1, "compression dimension must be positive");
  const Matrix corr = scale.asDiagonal().inverse() * cpsi * scale.asDiagonal().inverse();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (corr + corr.transpose()));
  Matrix comp(dc, d);
  DenseVec cscale(dc);
  for (int k = 0; k < dc; ++k) {
    comp.row(k) = es.eigenvectors().col(d - 1 - k).transpose();
    const double ev = es.eigenvalues()[d - 1 - k];
    if (ev <= 1e-12 * std::max(es.eigenvalues()[d - 1], 1e-300)) fail(ErrorCode::Numeric, "insufficient rank");
    cscale[k] = std::sqrt(ev);
  }
  fix_signs(comp);
  map.compress.matrix = comp;
  map.compress.scaling = cscale;
  return map;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
  return out;
}

DenseVec gather(const DenseVec& v, std::span<const std::size_t> rows) {
  DenseVec out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Eigen::Index>(r)] = v[static_cast<Eigen::Index>(rows[r])];
  return out;
}

nlohmann::json linear_json(const LinearModel& m) {
  return {{"weights", std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size())},
          {"intercept", m.intercept},
          {"penalty", m.penalty}};
}

LinearModel linear_from_json(const nlohmann::json& j) {
  LinearModel m;
  const auto w = j.at("weights").get<std::vector<double>>();
  m.weights = Eigen::Map<const DenseVec>(w.data(), static_cast<Eigen::Index>(w.size()));
  m.intercept = j.at("intercept").get<double>();
  m.penalty = j.at("penalty").get<double>();
  return m;
}

nlohmann::json vec_json(const DenseVec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

DenseVec vec_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const DenseVec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json projection_json(const ProjectionMap& p) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < p.matrix.rows(); ++r) rows.push_back(vec_json(p.matrix.row(r).transpose()));
  nlohmann::json j{{"matrix", rows}};
  j["centering"] = p.centering ? vec_json(*p.centering) : nlohmann::json();
  j["scaling"] = p.scaling ? vec_json(*p.scaling) : nlohmann::json();
  return j;
}

ProjectionMap projection_from_json(const nlohmann::json& j) {
  ProjectionMap p;
  const auto& rows = j.at("matrix");
  const auto n = static_cast<Eigen::Index>(rows.size());
  for (Eigen::Index r = 0; r < n; ++r) {
    const DenseVec row = vec_from_json(rows[static_cast<std::size_t>(r)]);
    if (r == 0) p.matrix.resize(n, row.size());
    require(row.size() == p.matrix.cols(), "projection rows must have equal length", ErrorCode::Config);
    p.matrix.row(r) = row.transpose();
  }
  if (j.contains("centering") && !j["centering"].is_null()) p.centering = vec_from_json(j["centering"]);
  if (j.contains("scaling") && !j["scaling"].is_null()) p.scaling = vec_from_json(j["scaling"]);
  return p;
}

}  // namespace

std::string family_name(Family f) { return info(f).name; }

Family parse_family(const std::string& s) {
  for (const auto& i : kFamilies)
    if (s == i.name) return i.family;
  fail(ErrorCode::Config, "unknown estimator family '" + s + "'");
}

bool family_uses_proxy(Family f) { return info(f).proxy; }
bool family_uses_obs(Family f) { return info(f).obs; }
bool family_uses_exp(Family f) { return info(f).exp; }

std::string basis_name(Basis b) { return b == Basis::Id ? "id" : "poly2"; }

Basis parse_basis(const std::string& s) {
  if (s == "id") return Basis::Id;
  if (s == "poly2") return Basis::Poly2;
  fail(ErrorCode::Config, "unknown basis '" + s + "'");
}

Matrix apply_basis(Basis b, const Matrix& u) {
  if (b == Basis::Id) return u;
  Matrix out(u.rows(), 2 * u.cols());
  out.leftCols(u.cols()) = u;
  out.rightCols(u.cols()) = u.array().square().matrix();
  return out;
}

// ---------------------------------------------------------------------------
// Proxy

ProxyMap learn_proxy(const Dataset& obs, const ProxyOptions& opt) {
  require(obs.has_aux(), "proxy requires aux channel");
  require(obs.rows() >= static_cast<std::size_t>(10 * opt.d_psi), "proxy requires n_OBS >= 10 * d_psi");
  require(obs.features.allFinite() && obs.aux.allFinite(), "proxy: non-finite input", ErrorCode::Numeric);
  NormalEquations ne(obs.features.cols(), obs.aux.cols());
  ne.add_rows(obs.features, obs.aux);
  return proxy_from_stats(ne, 0, obs.aux.cols(), opt);
}

// ---------------------------------------------------------------------------
// Prediction

DenseVec RewardModel::predict(const FeatureView& v) const {
  require(v.phi != nullptr, "prediction requires phi features");
  const Matrix& phi = *v.phi;
  auto base = [&]() {
    require(baseline.has_value(), "model has no OBS baseline");
    return clip_all(linear(*baseline, phi));
  };
  Matrix psi_local, tilde_local;
  auto psi = [&]() -> const Matrix& {
    if (v.psi) return *v.psi;
    require(proxy != nullptr, "model requires a proxy map");
    if (psi_local.size() == 0) psi_local = proxy->psi(phi);
    return psi_local;
  };
  auto tilde = [&]() -> const Matrix& {
    if (v.psi_tilde) return *v.psi_tilde;
    require(proxy != nullptr, "model requires a proxy map");
    if (tilde_local.size() == 0) tilde_local = proxy->psi_tilde(psi());
    return tilde_local;
  };
  switch (family) {
    case Family::ExpOnly:
    case Family::ObsOnly:
    case Family::Cvci:
      return clip_all(linear(head, phi));
    case Family::ProxyExp:
      return clip_all(linear(head, psi()));
    case Family::GroundedLin:
      return clip_all(base() - alpha_corr.value_or(1.0) * linear(head, psi()));
    case Family::GroundedRich:
      return clip_all(base() - alpha_corr.value_or(1.0) * linear(head, apply_basis(basis.value_or(Basis::Id), tilde())));
    case Family::GroundedAnchor:
      return clip_all(anchor_b.value_or(1.0) * base() -
                      alpha_corr.value_or(1.0) * linear(head, apply_basis(basis.value_or(Basis::Id), tilde())));
    case Family::CvciRes:
      return clip_all(base() + linear(head, psi()));
  }
  fail(ErrorCode::Internal, "unknown family");
}

double RewardModel::predict_one(const DenseVec& phi) const {
  const Matrix row = phi.transpose();
  return predict(row)[0];
}

nlohmann::json RewardModel::to_json() const {
  nlohmann::json j{{"family", family_name(family)}, {"head", linear_json(head)}};
  if (baseline) j["baseline"] = linear_json(*baseline);
  if (basis) j["basis"] = basis_name(*basis);
  if (alpha_corr) j["alpha_corr"] = *alpha_corr;
  if (lambda_pool) j["lambda_pool"] = *lambda_pool;
  if (anchor_b) j["anchor_b"] = *anchor_b;
  if (proxy) {
    j["proxy"] = {{"projector", projection_json(proxy->projector)},
                  {"compress", projection_json(proxy->compress)},
                  {"aux_directions", proxy->aux_directions},
                  {"source", proxy->source}};
  }
  return j;
}

RewardModel RewardModel::from_json(const nlohmann::json& j) {
  try {
    RewardModel m;
    m.family = parse_family(j.at("family").get<std::string>());
    m.head = linear_from_json(j.at("head"));
    if (j.contains("baseline")) m.baseline = linear_from_json(j["baseline"]);
    if (j.contains("basis")) m.basis = parse_basis(j["basis"].get<std::string>());
    if (j.contains("alpha_corr")) m.alpha_corr = j["alpha_corr"].get<double>();
    if (j.contains("lambda_pool")) m.lambda_pool = j["lambda_pool"].get<double>();
    if (j.contains("anchor_b")) m.anchor_b = j["anchor_b"].get<double>();
    if (j.contains("proxy")) {
      auto p = std::make_shared<ProxyMap>();
      p->projector = projection_from_json(j["proxy"].at("projector"));
      p->compress = projection_from_json(j["proxy"].at("compress"));
      p->aux_directions = j["proxy"].at("aux_directions").get<int>();
      p->source = j["proxy"].at("source").get<std::string>();
      m.proxy = std::move(p);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Config, std::string("reward model json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Caches

ObsCache build_obs_cache(const Dataset& obs, const EstimatorConfig& cfg, bool need_proxy, std::uint64_t seed) {
  const auto n = obs.rows();
  require(n >= 2, "OBS requires at least two rows");
  require(obs.features.allFinite() && obs.outcome.allFinite(), "OBS: non-finite input", ErrorCode::Numeric);
  if (need_proxy) {
    require(obs.has_aux(), "proxy requires aux channel");
    require(n >= static_cast<std::size_t>(10 * cfg.proxy.d_psi), "proxy requires n_OBS >= 10 * d_psi");
  }
  const int k = std::min<int>(cfg.obs_crossfit_folds, static_cast<int>(n));
  require(k >= 2, "OBS cross-fitting needs at least two folds");
  Rng rng(seed);
  const std::vector<int> fold = balanced_folds(n, k, rng);

  const Eigen::Index dim = obs.features.cols();
  const Eigen::Index aux = need_proxy ? obs.aux.cols() : 0;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(fold[i])].push_back(i);

  std::vector<NormalEquations> parts;
  NormalEquations all(dim, 1 + aux);
  for (const auto& idx : members) {
    const Matrix x = gather_rows(obs.features, idx);
    Matrix y(x.rows(), 1 + aux);
    y.col(0) = gather(obs.outcome, idx);
    if (aux > 0) y.rightCols(aux) = gather_rows(obs.aux, idx);
    NormalEquations part(dim, 1 + aux);
    part.add_rows(x, y);
    all += part;
    parts.push_back(part.select_target(0));
  }

  ObsCache c;
  c.obs = &obs;
  c.raw = all.select_target(0);
  c.baseline = c.raw.solve(cfg.penalty_raw, true);
  c.baseline_pred = clip_all(linear(c.baseline, obs.features));
  c.baseline_cf.resize(static_cast<Eigen::Index>(n));
  for (int f = 0; f < k; ++f) {
    const auto& idx = members[static_cast<std::size_t>(f)];
    NormalEquations rest = c.raw;
    rest -= parts[static_cast<std::size_t>(f)];
    const LinearModel m = rest.solve(cfg.penalty_raw, true);
    const DenseVec p = clip_all(linear(m, gather_rows(obs.features, idx)));
    for (std::size_t r = 0; r < idx.size(); ++r) c.baseline_cf[static_cast<Eigen::Index>(idx[r])] = p[static_cast<Eigen::Index>(r)];
  }
  if (need_proxy) {
    c.proxy = std::make_shared<ProxyMap>(proxy_from_stats(all, 1, aux, cfg.proxy));
    c.psi = c.proxy->psi(obs.features);
    c.psi_tilde = c.proxy->psi_tilde(c.psi);
    c.residual = NormalEquations(c.psi.cols(), 1);
    c.residual.add_rows(c.psi, obs.outcome - c.baseline_pred);
  }
  return c;
}

ExpView make_exp_view(const Dataset& exp, const ObsCache* cache) {
  require(exp.features.allFinite() && exp.outcome.allFinite(), "EXP: non-finite input", ErrorCode::Numeric);
  ExpView v;
  v.exp = &exp;
  if (cache) {
    v.baseline = clip_all(linear(cache->baseline, exp.features));
    if (cache->proxy) {
      v.psi = cache->proxy->psi(exp.features);
      v.psi_tilde = cache->proxy->psi_tilde(v.psi);
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Fits

LinearModel fit_correction(const Matrix& x, const DenseVec& f_obs, const DenseVec& y, double penalty) {
  require(x.rows() == y.size() && f_obs.size() == y.size(), "correction: shape mismatch");
  require(x.rows() >= 1, "correction requires EXP rows");
  NormalEquations ne(x.cols(), 1);
  ne.add_rows(x, f_obs - y);
  return ne.solve(penalty, true);
}

std::pair<double, double> solve_anchor(const DenseVec& y_obs, const DenseVec& f_cf, const DenseVec& c_obs,
                                       const DenseVec& y_exp, const DenseVec& f_exp, const DenseVec& c_exp,
                                       double lambda, double rho_b, double rho_alpha) {
  require(lambda >= 0.0 && lambda <= 1.0, "pooling weight must lie in [0,1]");
  require(rho_b >= 0.0 && rho_alpha >= 0.0, "anchor penalties must be nonnegative");
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Eigen::Vector2d rhs(rho_b, rho_alpha);
  a(0, 0) = rho_b;
  a(1, 1) = rho_alpha;
  auto add = [&](const DenseVec& y, const DenseVec& f, const DenseVec& c, double w) {
    if (y.size() == 0 || w == 0.0) return;
    const double s = w / static_cast<double>(y.size());
    // Prediction b f - alpha c, design (f, -c).
    a(0, 0) += s * f.squaredNorm();
    a(0, 1) -= s * f.dot(c);
    a(1, 1) += s * c.squaredNorm();
    rhs[0] += s * f.dot(y);
    rhs[1] -= s * c.dot(y);
  };
  add(y_obs, f_cf, c_obs, lambda);
  add(y_exp, f_exp, c_exp, 1.0 - lambda);
  a(1, 0) = a(0, 1);
  const double det = a.determinant();
  require(std::abs(det) > 1e-300, "anchored calibration is singular", ErrorCode::Numeric);
  const Eigen::Vector2d sol = a.ldlt().solve(rhs);
  return {sol[0], sol[1]};
}

std::pair<double, double> pooled_row_weights(double lambda, double n_obs, double n_exp) {
  require(lambda >= 0.0 && lambda <= 1.0, "pooling weight must lie in [0,1]");
  const double a = n_obs > 0.0 ? lambda / n_obs : 0.0;
  const double b = n_exp > 0.0 ? (1.0 - lambda) / n_exp : 0.0;
  const double s = a + b;
  require(s > 0.0, "pooled fit has no weighted rows");
  return {a / s, b / s};
}

RewardModel fit_family(Family f, const ObsCache* cache, const ExpView& ev, std::span<const std::size_t> rows,
                       const FitParams& p, const EstimatorConfig& cfg) {
  const bool needs_obs = family_uses_obs(f) && f != Family::ProxyExp;
  require(!needs_obs || cache != nullptr, family_name(f) + " requires OBS data");
  require(!family_uses_proxy(f) || (cache != nullptr && cache->proxy != nullptr), family_name(f) + " requires a proxy map");
  const Dataset* exp = ev.exp;
  if (family_uses_exp(f)) require(exp != nullptr, family_name(f) + " requires EXP data");
  const auto m = static_cast<double>(rows.size());

  RewardModel out;
  out.family = f;
  if (needs_obs) out.baseline = cache->baseline;
  if (family_uses_proxy(f)) out.proxy = cache->proxy;

  auto y_e = [&]() { return gather(exp->outcome, rows); };
  switch (f) {
    case Family::ExpOnly: {
      require(rows.size() >= 2, "EXP-Only requires at least two rows");
      NormalEquations ne(exp->features.cols(), 1);
      ne.add_rows(gather_rows(exp->features, rows), y_e());
      out.head = ne.solve(p.penalty, true);
      out.baseline.reset();
      break;
    }
    case Family::ObsOnly: {
      out.head = p.penalty == cfg.penalty_raw ? cache->baseline : cache->raw.solve(p.penalty, true);
      out.baseline.reset();
      break;
    }
    case Family::ProxyExp: {
      require(rows.size() >= 2, "Proxy-EXP requires at least two rows");
      NormalEquations ne(ev.psi.cols(), 1);
      ne.add_rows(gather_rows(ev.psi, rows), y_e());
      out.head = ne.solve(p.penalty, true);
      out.baseline.reset();
      break;
    }
    case Family::GroundedLin: {
      out.head = fit_correction(gather_rows(ev.psi, rows), gather(ev.baseline, rows), y_e(), p.penalty);
      out.alpha_corr = p.alpha;
      break;
    }
    case Family::GroundedRich:
    case Family::GroundedAnchor: {
      out.head = fit_correction(apply_basis(p.basis, gather_rows(ev.psi_tilde, rows)), gather(ev.baseline, rows), y_e(),
                                p.tau);
      out.basis = p.basis;
      if (f == Family::GroundedRich) {
        out.alpha_corr = p.alpha;
      } else {
        const DenseVec c_obs = linear(out.head, apply_basis(p.basis, cache->psi_tilde));
        const DenseVec c_exp = linear(out.head, apply_basis(p.basis, gather_rows(ev.psi_tilde, rows)));
        const auto [b, a] = solve_anchor(cache->obs->outcome, cache->baseline_cf, c_obs, y_e(), gather(ev.baseline, rows),
                                         c_exp, p.lambda, cfg.rho_b, cfg.rho_alpha);
        out.anchor_b = b;
        out.alpha_corr = a;
        out.lambda_pool = p.lambda;
      }
      break;
    }
    case Family::Cvci: {
      require(p.lambda >= 0.0 && p.lambda <= 1.0, "pooling weight must lie in [0,1]");
      const double n = cache->raw.weight_sum();
      require(n > 0.0 || m > 0.0, "CVCI requires data");
      if (p.lambda < 1.0) require(m > 0.0, "CVCI with lambda < 1 requires EXP rows");
      const auto [wo, we] = pooled_row_weights(p.lambda, n, m);
      NormalEquations pooled = cache->raw.scaled(wo);
      if (m > 0.0 && we > 0.0) {
        NormalEquations ne(exp->features.cols(), 1);
        ne.add_rows(gather_rows(exp->features, rows), y_e());
        pooled += ne.scaled(we);
      }
      out.head = pooled.solve(p.penalty, true);
      out.lambda_pool = p.lambda;
      out.baseline.reset();
      break;
    }
    case Family::CvciRes: {
      require(p.lambda >= 0.0 && p.lambda <= 1.0, "pooling weight must lie in [0,1]");
      if (p.lambda < 1.0) require(m > 0.0, "CVCI-Res with lambda < 1 requires EXP rows");
      NormalEquations pooled = cache->residual.scaled(p.lambda / cache->residual.weight_sum());
      if (m > 0.0) {
        NormalEquations ne(ev.psi.cols(), 1);
        ne.add_rows(gather_rows(ev.psi, rows), y_e() - gather(ev.baseline, rows));
        pooled += ne.scaled((1.0 - p.lambda) / m);
      }
      out.head = pooled.solve(p.penalty, true);
      out.lambda_pool = p.lambda;
      break;
    }
  }
  return out;
}

namespace {

std::vector<std::size_t> all_rows(const Dataset& d) {
  std::vector<std::size_t> r(d.rows());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
  return r;
}

}  // namespace

RewardModel fit_exp_only(const Dataset& exp, double penalty) {
  ExpView v;
  v.exp = &exp;
  const auto rows = all_rows(exp);
  FitParams p;
  p.penalty = penalty;
  return fit_family(Family::ExpOnly, nullptr, v, rows, p, EstimatorConfig{});
}

RewardModel fit_obs_only(const Dataset& obs, double penalty) {
  require(obs.rows() >= 2, "OBS-Only requires at least two rows");
  NormalEquations ne(obs.features.cols(), 1);
  ne.add_rows(obs.features, obs.outcome);
  RewardModel m;
  m.family = Family::ObsOnly;
  m.head = ne.solve(penalty, true);
  return m;
}

RewardModel fit_proxy_exp(const Dataset& exp, std::shared_ptr<const ProxyMap> proxy, double penalty) {
  require(proxy != nullptr, "Proxy-EXP requires a proxy map");
  require(exp.rows() >= 2, "Proxy-EXP requires at least two rows");
  NormalEquations ne(proxy->dim(), 1);
  ne.add_rows(proxy->psi(exp.features), exp.outcome);
  RewardModel m;
  m.family = Family::ProxyExp;
  m.head = ne.solve(penalty, true);
  m.proxy = std::move(proxy);
  return m;
}

RewardModel fit_cvci(const Dataset& obs, const Dataset& exp, double lambda, double penalty) {
  require(lambda >= 0.0 && lambda <= 1.0, "pooling weight must lie in [0,1]");
  require(obs.rows() + exp.rows() > 0, "CVCI requires data");
  const Eigen::Index dim = obs.rows() ? obs.features.cols() : exp.features.cols();
  const auto [wo, we] = pooled_row_weights(lambda, static_cast<double>(obs.rows()), static_cast<double>(exp.rows()));
  NormalEquations pooled(dim, 1);
  if (obs.rows() > 0 && wo > 0.0) {
    NormalEquations ne(dim, 1);
    ne.add_rows(obs.features, obs.outcome);
    pooled += ne.scaled(wo);
  }
  if (exp.rows() > 0 && we > 0.0) {
    NormalEquations ne(dim, 1);
    ne.add_rows(exp.features, exp.outcome);
    pooled += ne.scaled(we);
  }
  RewardModel m;
  m.family = Family::Cvci;
  m.head = pooled.solve(penalty, true);
  m.lambda_pool = lambda;
  return m;
}

}  // namespace ceval
