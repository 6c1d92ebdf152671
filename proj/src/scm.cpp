/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "ceval/scm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace ceval {

namespace {

// Stream tags.
constexpr std::uint64_t kTagParams = 0x5041524D53ull;
constexpr std::uint64_t kTagReference = 0x5245464552ull;
constexpr std::uint64_t kTagWorld = 0x574F524C44ull;
constexpr std::uint64_t kTagSim = 0x53494D44ull;
constexpr std::uint64_t kTagTruth = 0x5452555448ull;

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

DenseVec unit_gaussian(Rng& rng, int n, double norm) {
  DenseVec g(n);
  for (int i = 0; i < n; ++i) g[i] = rng.normal();
  const double gn = g.norm();
  return gn > 0.0 ? DenseVec(g * (norm / gn)) : g;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= z;
  return p;
}

std::size_t draw(const std::vector<double>& probs, Rng& rng) {
  std::vector<double> cdf(probs.size());
  std::partial_sum(probs.begin(), probs.end(), cdf.begin());
  return rng.from_cdf(cdf);
}

}  // namespace

// ---------------------------------------------------------------------------
// Modes

std::string RewardMode::key() const {
  switch (kind) {
    case RewardKind::Scalar: return "scalar";
    case RewardKind::RubricSmooth: return "rubric_smooth";
    case RewardKind::RubricSharp: return "rubric_sharp";
    case RewardKind::Coding: return "coding_a" + fmt_num(alpha_fix) + "_w" + fmt_num(omega);
  }
  return "unknown";
}

RewardMode RewardMode::parse(const std::string& key) {
  RewardMode m;
  if (key == "scalar") return m;
  if (key == "rubric_smooth") { m.kind = RewardKind::RubricSmooth; return m; }
  if (key == "rubric_sharp") { m.kind = RewardKind::RubricSharp; return m; }
  double a = 0.0, w = 0.0;
  if (std::sscanf(key.c_str(), "coding_a%lf_w%lf", &a, &w) == 2) {
    require(a >= 0.0 && a <= 1.0 && w >= 0.0 && w <= 1.0, "coding parameters must lie in [0,1]",
            ErrorCode::Config);
    m.kind = RewardKind::Coding;
    m.alpha_fix = a;
    m.omega = w;
    return m;
  }
  fail(ErrorCode::Config, "unknown reward mode '" + key + "'");
}

std::string router_name(RouterKind r) { return r == RouterKind::Mixture ? "mixture" : "softmax"; }

RouterKind parse_router(const std::string& s) {
  if (s == "mixture") return RouterKind::Mixture;
  if (s == "softmax") return RouterKind::Softmax;
  fail(ErrorCode::Config, "unknown router '" + s + "'");
}

// ---------------------------------------------------------------------------
// Reward maps

std::array<double, 4> sharpen_weights(const std::array<double, 4>& w, double gamma) {
  std::array<double, 4> out{};
  const double mx = *std::max_element(w.begin(), w.end());
  require(mx > 0.0, "weights must have a positive entry");
  double z = 0.0;
  for (int k = 0; k < 4; ++k) z += (out[k] = std::pow(w[k] / mx, gamma));
  for (double& v : out) v /= z;
  return out;
}

namespace {
void check_simplex(const std::array<double, 4>& w) {
  double s = 0.0;
  for (double v : w) {
    require(v >= 0.0 && std::isfinite(v), "weights not on simplex");
    s += v;
  }
  require(std::abs(s - 1.0) <= 1e-9, "weights not on simplex");
}
}  // namespace

double reward_smooth(const std::array<double, 4>& s, int, const std::array<double, 4>& w_tau) {
  check_simplex(w_tau);
  double r = 0.0;
  for (int k = 0; k < 4; ++k) r += w_tau[k] * s[k];
  return r;
}

double reward_sharpened(const std::array<double, 4>& s, int u_claims, const std::array<double, 4>& w_tau,
                        double gamma, double claim_penalty, double center, double scale) {
  check_simplex(w_tau);
  const auto wb = sharpen_weights(w_tau, gamma);
  double l = 0.0;
  for (int k = 0; k < 4; ++k) l += wb[k] * s[k];
  l -= claim_penalty * static_cast<double>(u_claims) / 20.0;
  return sigmoid((clip01(l) - center) / scale);
}

double coding_utility(const std::array<double, 4>& c, const std::array<double, 4>& w_u, double alpha_fix,
                      double omega_weak) {
  for (double v : w_u) require(v >= 0.0 && std::isfinite(v), "degenerate user weights");
  const double tail = w_u[1] + w_u[2] + w_u[3];
  require(tail > 0.0, "degenerate user weights");
  double add = 0.0;
  for (int k = 1; k < 4; ++k) add += (w_u[k] / tail) * c[k];
  const double weakest = std::min({c[1], c[2], c[3]});
  const double g = (1.0 - omega_weak) * add + omega_weak * weakest;
  return w_u[0] * alpha_fix * c[0] + (1.0 - w_u[0]) * g;
}

// ---------------------------------------------------------------------------
// Generator

Generator::Generator(GeneratorConfig cfg, std::uint64_t master_seed) : cfg_(std::move(cfg)), master_seed_(master_seed) {
  require(cfg_.num_agents >= 1, "num_agents must be positive", ErrorCode::Config);
  require(cfg_.vocab_size >= 2, "vocab_size must be at least 2", ErrorCode::Config);
  require(cfg_.min_length >= 1 && cfg_.max_length >= cfg_.min_length, "invalid length range", ErrorCode::Config);
  require(cfg_.hidden_dim >= 1 && cfg_.densify_dim >= 1 && cfg_.psi_x_dim >= 1 && cfg_.latent_dim >= 1,
          "dimensions must be positive", ErrorCode::Config);
  require(cfg_.num_segments >= 1, "num_segments must be positive", ErrorCode::Config);
  require(cfg_.aux_dim >= 1, "aux_dim must be positive", ErrorCode::Config);
  require(cfg_.shortlist_k >= 1, "shortlist_k must be positive", ErrorCode::Config);
  require(cfg_.eps_floor >= 0.0 && cfg_.eps_floor <= 1.0, "eps_floor must lie in [0,1]", ErrorCode::Config);
  require(cfg_.keep_rate_min >= 0.0 && cfg_.keep_rate_max <= 1.0 && cfg_.keep_rate_min <= cfg_.keep_rate_max,
          "keep rates must lie in [0,1]", ErrorCode::Config);
  require(cfg_.hash_dim > 0 && (cfg_.hash_dim & (cfg_.hash_dim - 1)) == 0, "hash_dim must be a power of two",
          ErrorCode::Config);
  require(cfg_.sigma_y >= 0.0 && cfg_.sigma_z >= 0.0 && cfg_.latent_var >= 0.0, "variances must be nonnegative",
          ErrorCode::Config);
  require(!cfg_.coding_fix_weights.empty(), "coding_fix_weights must be nonempty", ErrorCode::Config);
  build_params();
}

void Generator::build_params() {
  const int A = cfg_.num_agents, H = cfg_.hidden_dim, P = cfg_.psi_x_dim, L = cfg_.latent_dim;
  Rng rng(derive_seed({master_seed_, kTagParams}));
  p_.phi_seed = rng.bits();
  p_.hidden_seed = rng.bits();
  p_.densify_seed = rng.bits();
  p_.sketch_seed = rng.bits();
  p_.affinity_seed = rng.bits();
  p_.sigma_y = cfg_.sigma_y;
  p_.sigma_z = cfg_.sigma_z;
  p_.kappa = cfg_.kappa;
  p_.eps_floor = cfg_.eps_floor;
  p_.shortlist_k = std::min(cfg_.shortlist_k, A);

  {
    std::vector<double> zw(static_cast<std::size_t>(cfg_.vocab_size));
    for (int k = 0; k < cfg_.vocab_size; ++k) zw[static_cast<std::size_t>(k)] = std::pow(k + 1.0, -cfg_.zipf_s);
    zipf_ = AliasTable(zw);
  }

  {
    Rng srng(p_.sketch_seed);
    sketch_.resize(P, cfg_.vocab_size);
    for (int t = 0; t < cfg_.vocab_size; ++t)
      for (int j = 0; j < P; ++j) sketch_(j, t) = srng.normal();
  }

  const std::uint64_t table_ids =
      static_cast<std::uint64_t>(cfg_.vocab_size) + static_cast<std::uint64_t>(A) * static_cast<std::uint64_t>(cfg_.style_tokens);
  token_code_.resize(table_ids);
  for (std::uint64_t id = 0; id < table_ids; ++id) {
    const auto h = hash_token_id(id, p_.phi_seed);
    token_code_[id] = {static_cast<std::uint32_t>(h & (cfg_.hash_dim - 1)), hash_sign(h)};
  }
  index_code_.resize(cfg_.hash_dim);
  for (std::uint32_t i = 0; i < cfg_.hash_dim; ++i) {
    const auto hd = hash_token_id(i, p_.densify_seed);
    const auto hh = hash_token_id(i, p_.hidden_seed);
    index_code_[i] = {static_cast<std::uint32_t>(hd) % static_cast<std::uint32_t>(cfg_.densify_dim),
                      static_cast<std::uint32_t>(hh) % static_cast<std::uint32_t>(H),
                      static_cast<float>(hash_sign(hd)), static_cast<float>(hash_sign(hh))};
  }

  // Sketch standardization on a reference sample.
  p_.psi_x_mean = DenseVec::Zero(P);
  p_.psi_x_scale = DenseVec::Ones(P);
  {
    Rng rref(derive_seed({master_seed_, kTagReference}));
    const int n = std::max(cfg_.reference_contexts, 2);
    Matrix raw(n, P);
    for (int i = 0; i < n; ++i) raw.row(i) = sample_context(rref, -1 - i).psi_x.transpose();
    p_.psi_x_mean = raw.colwise().mean().transpose();
    const Matrix c = raw.rowwise() - p_.psi_x_mean.transpose();
    p_.psi_x_scale = (c.array().square().colwise().sum() / static_cast<double>(n)).sqrt().transpose();
    for (int j = 0; j < P; ++j)
      if (!(p_.psi_x_scale[j] > 0.0)) p_.psi_x_scale[j] = 1.0;
  }

  p_.latent_map.resize(L, P);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < P; ++j) p_.latent_map(i, j) = rng.normal() / std::sqrt(static_cast<double>(P));

  p_.w_star = unit_gaussian(rng, H, cfg_.w_star_scale);
  p_.lambda_latent = unit_gaussian(rng, L, cfg_.latent_effect);

  p_.theta_x.resize(A, P);
  for (int a = 0; a < A; ++a) p_.theta_x.row(a) = unit_gaussian(rng, P, cfg_.theta_x_scale).transpose();
  p_.cost.resize(A);
  p_.keep_rate.resize(A);
  for (int a = 0; a < A; ++a) p_.cost[a] = rng.uniform();
  for (int a = 0; a < A; ++a)
    p_.keep_rate[a] = cfg_.keep_rate_min + (cfg_.keep_rate_max - cfg_.keep_rate_min) * rng.uniform();

  // Agent quality: mean hidden score of each agent on reference contexts.
  p_.agent_quality = DenseVec::Zero(A);
  {
    Rng rq(derive_seed({master_seed_, kTagReference, 1}));
    const int nq = 40;
    std::vector<Context> ctx;
    for (int i = 0; i < nq; ++i) ctx.push_back(sample_context(rq, -100000 - i));
    DenseVec hid(H);
    for (int a = 0; a < A; ++a) {
      double s = 0.0;
      for (const auto& x : ctx) {
        sample_mediator_fast(x, a, rq, nullptr, hid.data());
        s += p_.w_star.dot(hid);
      }
      p_.agent_quality[a] = s / nq;
    }
    const double m = p_.agent_quality.mean();
    const double sd = std::sqrt((p_.agent_quality.array() - m).square().mean());
    p_.agent_quality = (p_.agent_quality.array() - m) / (sd > 0.0 ? sd : 1.0);
  }

  const double rho = std::clamp(cfg_.confound_alignment, -1.0, 1.0);
  const DenseVec lam_hat = p_.lambda_latent.norm() > 0.0 ? DenseVec(p_.lambda_latent.normalized()) : DenseVec(DenseVec::Zero(L));
  p_.theta_u.resize(A, L);
  for (int a = 0; a < A; ++a) {
    const DenseVec g = unit_gaussian(rng, L, 1.0);
    p_.theta_u.row(a) =
        (cfg_.theta_u_scale * (rho * p_.agent_quality[a] * lam_hat + std::sqrt(1.0 - rho * rho) * g)).transpose();
  }
  p_.theta_seg.resize(A, cfg_.num_segments);
  for (int a = 0; a < A; ++a)
    for (int s = 0; s < cfg_.num_segments; ++s) p_.theta_seg(a, s) = cfg_.segment_affinity * rng.normal();

  // Coding heads; the first aux heads copy components 2..4, component 1 is orthogonal to every aux head.
  const int K = cfg_.aux_dim;
  p_.coding_heads.resize(4, H);
  p_.coding_bias = DenseVec::Constant(4, cfg_.coding_bias);
  for (int k = 1; k < 4; ++k) p_.coding_heads.row(k) = unit_gaussian(rng, H, cfg_.coding_head_scale).transpose();
  p_.aux_heads.resize(K, H);
  p_.aux_bias = DenseVec::Zero(K);
  for (int k = 0; k < K; ++k) {
    if (k < 3) {
      p_.aux_heads.row(k) = p_.coding_heads.row(k + 1);
      p_.aux_bias[k] = cfg_.coding_bias;
    } else {
      p_.aux_heads.row(k) = unit_gaussian(rng, H, cfg_.coding_head_scale).transpose();
    }
  }
  {
    DenseVec c1 = unit_gaussian(rng, H, 1.0);
    Eigen::JacobiSVD<Matrix> svd(p_.aux_heads, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    for (Eigen::Index j = 0; j < sv.size(); ++j) {
      if (sv[j] <= 1e-10 * sv[0]) continue;
      const DenseVec v = svd.matrixV().col(j);
      c1 -= v.dot(c1) * v;
    }
    if (c1.norm() < 1e-8) c1 = unit_gaussian(rng, H, 1.0);
    p_.coding_heads.row(0) = (c1.normalized() * cfg_.coding_head_scale).transpose();
  }

  p_.rubric_heads.resize(4, H);
  for (int k = 0; k < 4; ++k) p_.rubric_heads.row(k) = unit_gaussian(rng, H, cfg_.rubric_head_scale).transpose();
  p_.rubric_bias = DenseVec::Constant(4, cfg_.rubric_bias);
  p_.claims_head = unit_gaussian(rng, H, cfg_.rubric_head_scale);
  p_.claims_bias = cfg_.claims_bias;

  const int S = cfg_.num_segments;
  p_.segment_weights.resize(S, 4);
  p_.user_weights.resize(S, 4);
  for (int s = 0; s < S; ++s) {
    for (int k = 0; k < 4; ++k) p_.segment_weights(s, k) = 0.1 + (k == s % 4 ? 0.6 : 0.0);
    p_.user_weights(s, 0) = cfg_.coding_fix_weights[static_cast<std::size_t>(s) % cfg_.coding_fix_weights.size()];
    for (int k = 1; k < 4; ++k) p_.user_weights(s, k) = 0.5 + rng.uniform();
  }
}

DenseVec Generator::context_sketch(const std::vector<TokenCount>& tokens, int length) const {
  DenseVec raw = DenseVec::Zero(cfg_.psi_x_dim);
  for (const auto& t : tokens) raw += (static_cast<double>(t.count) / length) * sketch_.col(static_cast<Eigen::Index>(t.id));
  return ((raw - p_.psi_x_mean).array() / p_.psi_x_scale.array()).matrix();
}

Context Generator::sample_context(Rng& rng, std::int64_t id) const {
  Context x;
  x.id = id;
  x.length = cfg_.min_length + rng.below(cfg_.max_length - cfg_.min_length + 1);
  std::vector<std::uint32_t> ids(static_cast<std::size_t>(x.length));
  for (auto& t : ids) t = static_cast<std::uint32_t>(zipf_.sample(rng));
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size();) {
    std::size_t j = i;
    while (j < ids.size() && ids[j] == ids[i]) ++j;
    x.tokens.push_back({ids[i], static_cast<std::uint32_t>(j - i)});
    i = j;
  }
  x.psi_x = context_sketch(x.tokens, x.length);
  x.segment = rng.below(cfg_.num_segments);
  return x;
}

DenseVec Generator::latent_mean(const Context& x) const { return p_.latent_map * x.psi_x; }

LatentState Generator::sample_latent(const Context& x, Rng& rng) const {
  LatentState s;
  s.u = latent_mean(x);
  const double sd = std::sqrt(cfg_.latent_var);
  for (Eigen::Index i = 0; i < s.u.size(); ++i) s.u[i] += sd * rng.normal();
  return s;
}

DenseVec Generator::routing_code(const Context& x, const LatentState& u, bool segment_code) const {
  if (!segment_code) return u.u;
  DenseVec e = DenseVec::Zero(cfg_.num_segments);
  e[x.segment] = 1.0;
  return e;
}

std::vector<double> Generator::pi_x(const Context& x) const {
  std::vector<double> logits(static_cast<std::size_t>(cfg_.num_agents));
  for (int a = 0; a < cfg_.num_agents; ++a)
    logits[static_cast<std::size_t>(a)] = p_.theta_x.row(a).dot(x.psi_x) - p_.kappa * p_.cost[a];
  return softmax(logits);
}

std::vector<double> Generator::pi_u(const DenseVec& code, bool segment_code) const {
  const Matrix& th = segment_code ? p_.theta_seg : p_.theta_u;
  require(code.size() == th.cols(), "routing code dimension mismatch");
  const int A = cfg_.num_agents;
  std::vector<double> score(static_cast<std::size_t>(A));
  for (int a = 0; a < A; ++a) score[static_cast<std::size_t>(a)] = th.row(a).dot(code);
  // Top-k by score, ties to the smaller agent id.
  std::vector<double> p(static_cast<std::size_t>(A), 0.0);
  for (int r = 0; r < p_.shortlist_k; ++r) {
    int best = -1;
    for (int a = 0; a < A; ++a) {
      const auto i = static_cast<std::size_t>(a);
      if (p[i] > 0.0) continue;
      if (best < 0 || score[i] > score[static_cast<std::size_t>(best)]) best = a;
    }
    p[static_cast<std::size_t>(best)] = 1.0 / p_.shortlist_k;
  }
  return p;
}

std::vector<double> Generator::mixture_probs(const Context& x, const DenseVec& code, double beta,
                                             bool segment_code) const {
  require(beta >= 0.0 && beta <= 1.0, "beta must lie in [0,1]");
  auto px = pi_x(x);
  const auto pu = pi_u(code, segment_code);
  for (std::size_t a = 0; a < px.size(); ++a) px[a] = (1.0 - beta) * px[a] + beta * pu[a];
  return px;
}

int Generator::route_obs_mixture(const Context& x, const DenseVec& code, double beta, bool segment_code,
                                 Rng& rng) const {
  require(beta >= 0.0 && beta <= 1.0, "beta must lie in [0,1]");
  const bool latent_branch = rng.uniform() < beta;
  const auto probs = latent_branch ? pi_u(code, segment_code) : pi_x(x);
  return static_cast<int>(draw(probs, rng));
}

std::vector<double> Generator::softmax_probs(const Context& x, int segment, double beta) const {
  require(beta >= 0.0, "beta must be nonnegative");
  require(segment >= 0 && segment < cfg_.num_segments, "segment out of range");
  const int A = cfg_.num_agents;
  std::vector<double> logits(static_cast<std::size_t>(A));
  for (int a = 0; a < A; ++a)
    logits[static_cast<std::size_t>(a)] =
        p_.theta_x.row(a).dot(x.psi_x) - p_.kappa * p_.cost[a] + beta * p_.theta_seg(a, segment);
  auto p = softmax(logits);
  for (double& v : p) v = (1.0 - p_.eps_floor) * v + p_.eps_floor / A;
  return p;
}

int Generator::route_obs_softmax(const Context& x, int segment, double beta, Rng& rng) const {
  return static_cast<int>(draw(softmax_probs(x, segment, beta), rng));
}

double Generator::affinity(std::uint64_t token, int agent) const noexcept {
  const auto h = mix64(p_.affinity_seed ^ mix64(token * 0x100000001B3ull + static_cast<std::uint64_t>(agent)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::vector<TokenCount> Generator::mediator_tokens(const Context& x, int agent, Rng& rng) const {
  require(agent >= 0 && agent < cfg_.num_agents, "agent out of range");
  std::vector<TokenCount> out;
  out.reserve(x.tokens.size() + static_cast<std::size_t>(cfg_.style_tokens + cfg_.noise_tokens));
  const double keep = p_.keep_rate[agent];
  BitTrials trials(rng);
  for (const auto& t : x.tokens) {
    const auto th = BitTrials::threshold(keep * (0.5 + affinity(t.id, agent)));
    std::uint32_t k = 0;
    for (std::uint32_t c = 0; c < t.count; ++c) k += trials.trial(th) ? 1u : 0u;
    if (k > 0) out.push_back({t.id, k});
  }
  const auto base = static_cast<std::uint64_t>(cfg_.vocab_size) +
                    static_cast<std::uint64_t>(agent) * static_cast<std::uint64_t>(cfg_.style_tokens);
  for (int j = 0; j < cfg_.style_tokens; ++j)
    if (cfg_.style_reps > 0) out.push_back({base + static_cast<std::uint64_t>(j), static_cast<std::uint32_t>(cfg_.style_reps)});
  for (int j = 0; j < cfg_.noise_tokens; ++j)
    out.push_back({static_cast<std::uint64_t>(rng.below(cfg_.vocab_size)), 1u});
  return out;
}

void Generator::project_tokens(const std::vector<TokenCount>& tokens, double* dense, double* hidden,
                               SparseVec* phi_out) const {
  std::vector<std::pair<std::uint32_t, double>> pairs;
  pairs.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (t.count == 0) continue;
    if (t.id < token_code_.size()) {
      const auto& c = token_code_[t.id];
      pairs.emplace_back(c.phi_index, c.phi_sign * t.count);
    } else {
      const auto h = hash_token_id(t.id, p_.phi_seed);
      pairs.emplace_back(static_cast<std::uint32_t>(h & (cfg_.hash_dim - 1)), hash_sign(h) * t.count);
    }
  }
  require(!pairs.empty(), "empty context");
  SparseVec phi = l2_normalized(SparseVec::from_pairs(cfg_.hash_dim, std::move(pairs)));
  if (dense) std::fill(dense, dense + cfg_.densify_dim, 0.0);
  if (hidden) std::fill(hidden, hidden + cfg_.hidden_dim, 0.0);
  for (std::size_t k = 0; k < phi.indices.size(); ++k) {
    const auto& ic = index_code_[phi.indices[k]];
    if (dense) dense[ic.dense_bucket] += static_cast<double>(ic.dense_sign) * phi.values[k];
    if (hidden) hidden[ic.hidden_bucket] += static_cast<double>(ic.hidden_sign) * phi.values[k];
  }
  if (phi_out) *phi_out = std::move(phi);
}

Mediator Generator::sample_mediator(const Context& x, int agent, Rng& rng) const {
  Mediator m;
  m.dense.resize(cfg_.densify_dim);
  m.hidden.resize(cfg_.hidden_dim);
  project_tokens(mediator_tokens(x, agent, rng), m.dense.data(), m.hidden.data(), &m.phi);
  return m;
}

void Generator::sample_mediator_fast(const Context& x, int agent, Rng& rng, double* dense, double* hidden) const {
  project_tokens(mediator_tokens(x, agent, rng), dense, hidden, nullptr);
}

MediatorPlan Generator::plan_mediator(const Context& x, int agent) const {
  require(agent >= 0 && agent < cfg_.num_agents, "agent out of range");
  MediatorPlan plan;
  plan.agent = agent;
  const double keep = p_.keep_rate[agent];
  std::vector<std::uint32_t> phis;
  for (const auto& t : x.tokens) {
    plan.ctx_ids.push_back(t.id);
    plan.thresholds.push_back(BitTrials::threshold(keep * (0.5 + affinity(t.id, agent))));
    plan.counts.push_back(t.count);
    const auto& c = token_code_[t.id];
    plan.sign.push_back(c.phi_sign);
    phis.push_back(c.phi_index);
  }
  const auto base = static_cast<std::uint64_t>(cfg_.vocab_size) +
                    static_cast<std::uint64_t>(agent) * static_cast<std::uint64_t>(cfg_.style_tokens);
  std::vector<std::uint32_t> style_phi;
  if (cfg_.style_reps > 0) {
    for (int j = 0; j < cfg_.style_tokens; ++j) {
      const auto& c = token_code_[base + static_cast<std::uint64_t>(j)];
      style_phi.push_back(c.phi_index);
      plan.style_value.push_back(c.phi_sign * static_cast<std::uint32_t>(cfg_.style_reps));
      phis.push_back(c.phi_index);
    }
  }
  std::sort(phis.begin(), phis.end());
  phis.erase(std::unique(phis.begin(), phis.end()), phis.end());
  plan.slot_phi = phis;
  auto slot_of = [&](std::uint32_t phi) {
    return static_cast<std::uint32_t>(std::lower_bound(phis.begin(), phis.end(), phi) - phis.begin());
  };
  for (const auto& t : x.tokens) plan.slot.push_back(slot_of(token_code_[t.id].phi_index));
  for (auto ph : style_phi) plan.style_slot.push_back(slot_of(ph));
  return plan;
}

void Generator::sample_planned(const MediatorPlan& plan, Rng& rng, double* dense, double* hidden) const {
  thread_local std::vector<double> vals;
  thread_local std::vector<std::pair<std::uint32_t, double>> extra;
  vals.assign(plan.slot_phi.size(), 0.0);
  extra.clear();
  BitTrials trials(rng);
  for (std::size_t i = 0; i < plan.ctx_ids.size(); ++i) {
    const auto th = plan.thresholds[i];
    std::uint32_t k = 0;
    for (std::uint32_t c = 0; c < plan.counts[i]; ++c) k += trials.trial(th) ? 1u : 0u;
    if (k > 0) vals[plan.slot[i]] += plan.sign[i] * k;
  }
  for (std::size_t j = 0; j < plan.style_slot.size(); ++j) vals[plan.style_slot[j]] += plan.style_value[j];
  for (int j = 0; j < cfg_.noise_tokens; ++j) {
    const auto id = static_cast<std::uint64_t>(rng.below(cfg_.vocab_size));
    const auto& c = token_code_[id];
    const auto it = std::lower_bound(plan.slot_phi.begin(), plan.slot_phi.end(), c.phi_index);
    if (it != plan.slot_phi.end() && *it == c.phi_index)
      vals[static_cast<std::size_t>(it - plan.slot_phi.begin())] += c.phi_sign;
    else
      extra.emplace_back(c.phi_index, c.phi_sign);
  }
  std::sort(extra.begin(), extra.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::size_t m = 0;
  for (std::size_t i = 0; i < extra.size(); ++i) {
    if (m > 0 && extra[m - 1].first == extra[i].first)
      extra[m - 1].second += extra[i].second;
    else
      extra[m++] = extra[i];
  }
  extra.resize(m);
  double n2 = 0.0;
  for (double v : vals) n2 += v * v;
  for (const auto& e : extra) n2 += e.second * e.second;
  if (dense) std::fill(dense, dense + cfg_.densify_dim, 0.0);
  if (hidden) std::fill(hidden, hidden + cfg_.hidden_dim, 0.0);
  if (n2 <= 0.0) return;
  const double inv = 1.0 / std::sqrt(n2);
  auto emit = [&](std::uint32_t phi, double v) {
    const auto& ic = index_code_[phi];
    if (dense) dense[ic.dense_bucket] += static_cast<double>(ic.dense_sign) * (v * inv);
    if (hidden) hidden[ic.hidden_bucket] += static_cast<double>(ic.hidden_sign) * (v * inv);
  };
  for (std::size_t sidx = 0; sidx < vals.size(); ++sidx)
    if (vals[sidx] != 0.0) emit(plan.slot_phi[sidx], vals[sidx]);
  for (const auto& e : extra)
    if (e.second != 0.0) emit(e.first, e.second);
}

double Generator::outcome_scalar(const DenseVec& hidden, const LatentState& u, Rng& rng) const {
  const double eps = p_.sigma_y > 0.0 ? p_.sigma_y * rng.normal() : 0.0;
  return sigmoid(p_.w_star.dot(hidden) + p_.lambda_latent.dot(u.u) + eps);
}

DenseVec Generator::aux_labels(const DenseVec& hidden, Rng& rng) const {
  DenseVec z(p_.aux_heads.rows());
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    const double nu = p_.sigma_z > 0.0 ? p_.sigma_z * rng.normal() : 0.0;
    z[k] = sigmoid(p_.aux_heads.row(k).dot(hidden) + p_.aux_bias[k] + nu);
  }
  return z;
}

RubricComponents Generator::rubric_components(const DenseVec& hidden) const {
  RubricComponents rc;
  for (int k = 0; k < 4; ++k) rc.s[static_cast<std::size_t>(k)] = sigmoid(p_.rubric_heads.row(k).dot(hidden) + p_.rubric_bias[k]);
  rc.u_claims = static_cast<int>(std::lround(20.0 * sigmoid(p_.claims_head.dot(hidden) + p_.claims_bias)));
  return rc;
}

std::array<double, 4> Generator::coding_components(const DenseVec& hidden) const {
  std::array<double, 4> c{};
  for (int k = 0; k < 4; ++k) c[static_cast<std::size_t>(k)] = sigmoid(p_.coding_heads.row(k).dot(hidden) + p_.coding_bias[k]);
  return c;
}

std::array<double, 4> Generator::segment_weight(int segment) const {
  std::array<double, 4> w{};
  for (int k = 0; k < 4; ++k) w[static_cast<std::size_t>(k)] = p_.segment_weights(segment, k);
  return w;
}

std::array<double, 4> Generator::user_weight(int segment) const {
  std::array<double, 4> w{};
  for (int k = 0; k < 4; ++k) w[static_cast<std::size_t>(k)] = p_.user_weights(segment, k);
  return w;
}

double Generator::outcome(const RewardMode& mode, const DenseVec& hidden, const LatentState& u, int segment,
                          Rng& rng) const {
  switch (mode.kind) {
    case RewardKind::Scalar: return outcome_scalar(hidden, u, rng);
    case RewardKind::RubricSmooth: {
      const auto rc = rubric_components(hidden);
      return reward_smooth(rc.s, rc.u_claims, segment_weight(segment));
    }
    case RewardKind::RubricSharp: {
      const auto rc = rubric_components(hidden);
      return reward_sharpened(rc.s, rc.u_claims, segment_weight(segment));
    }
    case RewardKind::Coding:
      return coding_utility(coding_components(hidden), user_weight(segment), mode.alpha_fix, mode.omega);
  }
  return 0.0;
}

double Generator::r_star(const RewardMode& mode, const DenseVec& hidden, const Context& x) const {
  return r_star_shift(mode, hidden, mode.kind == RewardKind::Scalar ? p_.lambda_latent.dot(latent_mean(x)) : 0.0);
}

double Generator::r_star_shift(const RewardMode& mode, const DenseVec& hidden, double latent_shift) const {
  const int S = cfg_.num_segments;
  switch (mode.kind) {
    case RewardKind::Scalar: {
      const double mean = p_.w_star.dot(hidden) + latent_shift;
      const double var = cfg_.latent_var * p_.lambda_latent.squaredNorm() + p_.sigma_y * p_.sigma_y;
      return expect_sigmoid_gaussian(mean, var);
    }
    case RewardKind::RubricSmooth:
    case RewardKind::RubricSharp: {
      const auto rc = rubric_components(hidden);
      double acc = 0.0;
      for (int s = 0; s < S; ++s)
        acc += mode.kind == RewardKind::RubricSmooth ? reward_smooth(rc.s, rc.u_claims, segment_weight(s))
                                                     : reward_sharpened(rc.s, rc.u_claims, segment_weight(s));
      return acc / S;
    }
    case RewardKind::Coding: {
      const auto c = coding_components(hidden);
      double acc = 0.0;
      for (int s = 0; s < S; ++s) acc += coding_utility(c, user_weight(s), mode.alpha_fix, mode.omega);
      return acc / S;
    }
  }
  return 0.0;
}

namespace {

std::vector<double> true_q_modes(const Generator& gen, const Context& x, int agent, int b_true,
                                 const std::vector<RewardMode>& modes, std::uint64_t seed) {
  require(b_true >= 1, "B_true must be positive");
  Rng rng(seed);
  std::vector<double> acc(modes.size(), 0.0);
  DenseVec hidden(gen.config().hidden_dim);
  const MediatorPlan plan = gen.plan_mediator(x, agent);
  const double shift = gen.params().lambda_latent.dot(gen.latent_mean(x));
  for (int b = 0; b < b_true; ++b) {
    gen.sample_planned(plan, rng, nullptr, hidden.data());
    for (std::size_t m = 0; m < modes.size(); ++m) acc[m] += gen.r_star_shift(modes[m], hidden, shift);
  }
  for (double& v : acc) v /= b_true;
  return acc;
}

}  // namespace

double Generator::true_q(const Context& x, int agent, int b_true, const RewardMode& mode, std::uint64_t seed) const {
  return true_q_modes(*this, x, agent, b_true, {mode}, seed)[0];
}

// ---------------------------------------------------------------------------
// Datasets

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset d;
  d.source = source;
  const auto n = static_cast<Eigen::Index>(idx.size());
  d.features.resize(n, features.cols());
  d.hidden.resize(n, hidden.cols());
  d.latent.resize(n, latent.cols());
  if (has_aux()) d.aux.resize(n, aux.cols());
  d.outcome.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]);
    require(i >= 0 && static_cast<std::size_t>(i) < rows(), "subset index out of range");
    d.features.row(r) = features.row(i);
    if (hidden.rows() > 0) d.hidden.row(r) = hidden.row(i);
    if (latent.rows() > 0) d.latent.row(r) = latent.row(i);
    if (has_aux()) d.aux.row(r) = aux.row(i);
    d.outcome[r] = outcome[i];
    d.action.push_back(action[static_cast<std::size_t>(i)]);
    d.segment.push_back(segment.empty() ? 0 : segment[static_cast<std::size_t>(i)]);
    d.context_id.push_back(context_id.empty() ? 0 : context_id[static_cast<std::size_t>(i)]);
  }
  if (hidden.rows() == 0) d.hidden.resize(0, hidden.cols());
  if (latent.rows() == 0) d.latent.resize(0, latent.cols());
  return d;
}

namespace {

Dataset allocate(const Generator& gen, Source src, std::size_t n, bool with_aux) {
  const auto& c = gen.config();
  Dataset d;
  d.source = src;
  const auto rows = static_cast<Eigen::Index>(n);
  d.features.resize(rows, c.densify_dim);
  d.hidden.resize(rows, c.hidden_dim);
  d.latent.resize(rows, c.latent_dim);
  if (with_aux) d.aux.resize(rows, c.aux_dim);
  d.outcome.resize(rows);
  d.action.resize(n);
  d.segment.resize(n);
  d.context_id.resize(n);
  return d;
}

}  // namespace

Dataset generate_obs(const Generator& gen, const RewardMode& mode, RouterKind router, double beta,
                     std::size_t n, std::uint64_t seed) {
  require(n >= 1, "n_OBS must be positive");
  require(beta >= 0.0, "beta must be nonnegative");
  if (router == RouterKind::Mixture) require(beta <= 1.0, "mixture beta must lie in [0,1]");
  Rng rng(seed);
  Dataset d = allocate(gen, Source::Obs, n, true);
  const auto& c = gen.config();
  DenseVec dense(c.densify_dim), hidden(c.hidden_dim);
  const bool seg = mode.uses_segment();
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Context x = gen.sample_context(rng, 10000000 + static_cast<std::int64_t>(i));
    const LatentState u = gen.sample_latent(x, rng);
    const int a = router == RouterKind::Mixture
                      ? gen.route_obs_mixture(x, gen.routing_code(x, u, seg), beta, seg, rng)
                      : gen.route_obs_softmax(x, x.segment, beta, rng);
    gen.sample_mediator_fast(x, a, rng, dense.data(), hidden.data());
    d.features.row(r) = dense.transpose();
    d.hidden.row(r) = hidden.transpose();
    d.latent.row(r) = u.u.transpose();
    d.outcome[r] = gen.outcome(mode, hidden, u, x.segment, rng);
    d.aux.row(r) = gen.aux_labels(hidden, rng).transpose();
    d.action[i] = a;
    d.segment[i] = x.segment;
    d.context_id[i] = x.id;
  }
  return d;
}

Dataset generate_exp(const Generator& gen, const RewardMode& mode, std::size_t n, std::uint64_t seed) {
  require(n >= 1, "n_EXP must be positive");
  Rng rng(seed);
  Dataset d = allocate(gen, Source::Exp, n, false);
  const auto& c = gen.config();
  DenseVec dense(c.densify_dim), hidden(c.hidden_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Context x = gen.sample_context(rng, 20000000 + static_cast<std::int64_t>(i));
    const LatentState u = gen.sample_latent(x, rng);
    const int a = rng.below(gen.num_agents());
    gen.sample_mediator_fast(x, a, rng, dense.data(), hidden.data());
    d.features.row(r) = dense.transpose();
    d.hidden.row(r) = hidden.transpose();
    d.latent.row(r) = u.u.transpose();
    d.outcome[r] = gen.outcome(mode, hidden, u, x.segment, rng);
    d.action[i] = a;
    d.segment[i] = x.segment;
    d.context_id[i] = x.id;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Worlds

const TruthTable& World::table(const RewardMode& mode) const {
  const auto it = truth.find(mode.key());
  require(it != truth.end(), "no truth table for reward mode '" + mode.key() + "'");
  return it->second;
}

World build_world(const Generator& gen, std::uint64_t seed_index, const WorldSpec& spec,
                  const std::vector<RewardMode>& modes) {
  require(spec.n_eval >= 1 && spec.n_true >= 1 && spec.b_true >= 1 && spec.b_dm >= 1,
          "world sizes must be positive", ErrorCode::Config);
  World w;
  w.seed_index = seed_index;
  w.spec = spec;
  const std::uint64_t ms = gen.master_seed();
  const int A = gen.num_agents();
  Rng rng(derive_seed({ms, kTagWorld, seed_index}));
  for (int i = 0; i < spec.n_eval; ++i) w.eval_contexts.push_back(gen.sample_context(rng, i));
  for (int i = 0; i < spec.n_true; ++i) w.ref_contexts.push_back(gen.sample_context(rng, 100000 + i));

  const auto& c = gen.config();
  const auto n_sim = static_cast<Eigen::Index>(spec.n_eval) * A * spec.b_dm;
  w.sim_features.resize(n_sim, c.densify_dim);
  w.sim_hidden.resize(n_sim, c.hidden_dim);
  DenseVec dense(c.densify_dim), hidden(c.hidden_dim);
  for (int i = 0; i < spec.n_eval; ++i) {
    for (int a = 0; a < A; ++a) {
      Rng srng(derive_seed({ms, kTagSim, seed_index, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(a)}));
      const MediatorPlan plan = gen.plan_mediator(w.eval_contexts[static_cast<std::size_t>(i)], a);
      for (int b = 0; b < spec.b_dm; ++b) {
        gen.sample_planned(plan, srng, dense.data(), hidden.data());
        const auto r = static_cast<Eigen::Index>(w.sim_row(static_cast<std::size_t>(i), a, b, A));
        w.sim_features.row(r) = dense.transpose();
        w.sim_hidden.row(r) = hidden.transpose();
      }
    }
  }

  std::vector<RewardMode> uniq;
  for (const auto& m : modes)
    if (std::find(uniq.begin(), uniq.end(), m) == uniq.end()) uniq.push_back(m);
  std::vector<TruthTable> tables(uniq.size());
  for (auto& t : tables) {
    t.q_eval.resize(spec.n_eval, A);
    t.q_ref.resize(spec.n_true, A);
  }
  for (int set = 0; set < 2; ++set) {
    const auto& ctx = set == 0 ? w.eval_contexts : w.ref_contexts;
    for (std::size_t i = 0; i < ctx.size(); ++i) {
      for (int a = 0; a < A; ++a) {
        const auto seed = derive_seed({ms, kTagTruth, seed_index, static_cast<std::uint64_t>(set), i,
                                       static_cast<std::uint64_t>(a)});
        const auto q = true_q_modes(gen, ctx[i], a, spec.b_true, uniq, seed);
        for (std::size_t m = 0; m < uniq.size(); ++m)
          (set == 0 ? tables[m].q_eval : tables[m].q_ref)(static_cast<Eigen::Index>(i), a) = q[m];
      }
    }
  }
  for (std::size_t m = 0; m < uniq.size(); ++m) {
    tables[m].mu = tables[m].q_ref.colwise().mean().transpose();
    w.truth.emplace(uniq[m].key(), std::move(tables[m]));
  }
  return w;
}

}  // namespace ceval
