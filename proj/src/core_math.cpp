/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include "ceval/core_math.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <unordered_map>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "ceval/random.hpp"

namespace ceval {

// ---------------------------------------------------------------------------
// Hashing

std::uint64_t hash_bytes(std::span<const unsigned char> bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = mix64(seed ^ 0x243F6A8885A308D3ull);
  std::size_t i = 0;
  for (; i + 8 <= bytes.size(); i += 8) {
    std::uint64_t word = 0;
    for (int b = 7; b >= 0; --b) word = (word << 8) | bytes[i + static_cast<std::size_t>(b)];
    h = mix64(h ^ word);
  }
  if (i < bytes.size()) {
    std::uint64_t word = 0;
    for (std::size_t b = bytes.size(); b > i; --b) word = (word << 8) | bytes[b - 1];
    h = mix64(h ^ word);
  }
  return mix64(h ^ static_cast<std::uint64_t>(bytes.size()));
}

std::uint64_t hash_token(std::string_view token, std::uint64_t seed) noexcept {
  return hash_bytes({reinterpret_cast<const unsigned char*>(token.data()), token.size()}, seed);
}

std::uint64_t hash_token_id(std::uint64_t id, std::uint64_t seed) noexcept {
  unsigned char buf[8];
  for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>(id >> (8 * b));
  return hash_bytes(buf, seed);
}

std::uint64_t double_bits(double v) noexcept { return std::bit_cast<std::uint64_t>(v); }

std::size_t Rng::from_cdf(const std::vector<double>& cdf) {
  const double u = uniform() * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

std::vector<int> balanced_folds(std::size_t n, int k, Rng& rng) {
  require(k >= 1, "fold count must be positive");
  require(static_cast<std::size_t>(k) <= n, "more folds than rows");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<int> fold(n);
  for (std::size_t p = 0; p < n; ++p) fold[order[p]] = static_cast<int>(p % static_cast<std::size_t>(k));
  return fold;
}

AliasTable::AliasTable(const std::vector<double>& weights) {
  const std::size_t n = weights.size();
  require(n > 0 && n < (1ull << 32), "alias table: invalid size");
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0 && std::isfinite(w), "alias table: weights must be nonnegative");
    total += w;
  }
  require(total > 0.0, "alias table: zero total weight");
  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<std::uint32_t> small, large;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = weights[i] * static_cast<double>(n) / total;
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  while (!small.empty() && !large.empty()) {
    const auto s = small.back();
    small.pop_back();
    const auto l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (auto i : large) prob_[i] = 1.0;
  for (auto i : small) prob_[i] = 1.0;
}

std::size_t AliasTable::sample(Rng& rng) const {
  const std::uint64_t r = rng.bits();
  const auto col = static_cast<std::size_t>((static_cast<unsigned __int128>(r >> 32) * prob_.size()) >> 32);
  const double coin = static_cast<double>(r & 0xFFFFFFFFull) * 0x1.0p-32;
  return coin < prob_[col] ? col : alias_[col];
}

// ---------------------------------------------------------------------------
// Sparse vectors

double SparseVec::squared_norm() const noexcept {
  double s = 0.0;
  for (double v : values) s += v * v;
  return s;
}

double SparseVec::dot(const DenseVec& w) const {
  require(w.size() == static_cast<Eigen::Index>(dim), "dimension mismatch in sparse dot");
  double s = 0.0;
  for (std::size_t k = 0; k < indices.size(); ++k) s += values[k] * w[indices[k]];
  return s;
}

SparseVec SparseVec::from_pairs(std::uint32_t dim, std::vector<std::pair<std::uint32_t, double>> pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseVec out;
  out.dim = dim;
  for (std::size_t i = 0; i < pairs.size();) {
    const auto idx = pairs[i].first;
    require(idx < dim, "sparse index out of range");
    double v = 0.0;
    for (; i < pairs.size() && pairs[i].first == idx; ++i) v += pairs[i].second;
    if (v != 0.0) {
      out.indices.push_back(idx);
      out.values.push_back(v);
    }
  }
  return out;
}

bool SparseVec::is_canonical() const noexcept {
  if (indices.size() != values.size()) return false;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= dim || values[k] == 0.0 || !std::isfinite(values[k])) return false;
    if (k > 0 && indices[k] <= indices[k - 1]) return false;
  }
  return true;
}

namespace {

void check_pow2(std::uint32_t dim) {
  require(dim > 0 && (dim & (dim - 1)) == 0, "hash dimension must be a power of two");
}

}  // namespace

SparseVec l2_normalized(SparseVec v) {
  const double n2 = v.squared_norm();
  if (n2 > 0.0) {
    const double inv = 1.0 / std::sqrt(n2);
    for (double& x : v.values) x *= inv;
  }
  return v;
}

SparseVec hash_features(std::span<const std::string> tokens, std::uint32_t dim, std::uint64_t seed) {
  check_pow2(dim);
  require(!tokens.empty(), "empty context");
  std::vector<std::pair<std::uint32_t, double>> pairs;
  pairs.reserve(tokens.size());
  for (const auto& t : tokens) {
    const auto h = hash_token(t, seed);
    pairs.emplace_back(static_cast<std::uint32_t>(h & (dim - 1)), hash_sign(h));
  }
  return l2_normalized(SparseVec::from_pairs(dim, std::move(pairs)));
}

SparseVec hash_token_counts(std::span<const TokenCount> tokens, std::uint32_t dim, std::uint64_t seed) {
  check_pow2(dim);
  std::vector<std::pair<std::uint32_t, double>> pairs;
  pairs.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (t.count == 0) continue;
    const auto h = hash_token_id(t.id, seed);
    pairs.emplace_back(static_cast<std::uint32_t>(h & (dim - 1)), hash_sign(h) * t.count);
  }
  require(!pairs.empty(), "empty context");
  return l2_normalized(SparseVec::from_pairs(dim, std::move(pairs)));
}

TokenHasher::TokenHasher(std::uint32_t dim, std::uint64_t seed, std::uint64_t cached_ids)
    : dim_(dim), seed_(seed), table_(cached_ids) {
  check_pow2(dim);
  for (std::uint64_t id = 0; id < cached_ids; ++id) table_[id] = hash_token_id(id, seed);
}

SparseVec TokenHasher::features(std::span<const TokenCount> tokens) const {
  std::vector<std::pair<std::uint32_t, double>> pairs;
  pairs.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (t.count == 0) continue;
    const auto h = t.id < table_.size() ? table_[t.id] : hash_token_id(t.id, seed_);
    pairs.emplace_back(static_cast<std::uint32_t>(h & (dim_ - 1)), hash_sign(h) * t.count);
  }
  require(!pairs.empty(), "empty context");
  return l2_normalized(SparseVec::from_pairs(dim_, std::move(pairs)));
}

DenseVec signed_hash_project(const SparseVec& x, int d, std::uint64_t seed) {
  require(d >= 1, "projection dimension must be positive");
  DenseVec out = DenseVec::Zero(d);
  for (std::size_t k = 0; k < x.indices.size(); ++k) {
    const auto h = hash_token_id(x.indices[k], seed);
    out[static_cast<Eigen::Index>(static_cast<std::uint32_t>(h) % static_cast<std::uint32_t>(d))] +=
        hash_sign(h) * x.values[k];
  }
  return out;
}

SparseVec signed_hash_project_sparse(const SparseVec& x, std::uint32_t d, std::uint64_t seed) {
  const DenseVec dense = signed_hash_project(x, static_cast<int>(d), seed);
  SparseVec out;
  out.dim = d;
  for (std::uint32_t j = 0; j < d; ++j) {
    if (dense[j] != 0.0) {
      out.indices.push_back(j);
      out.values.push_back(dense[j]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear models

double LinearModel::raw(const DenseVec& z) const {
  require(z.size() == weights.size(), "dimension mismatch: model has " + std::to_string(weights.size()) +
                                          " weights, input has " + std::to_string(z.size()));
  return weights.dot(z) + intercept;
}

double LinearModel::raw(const SparseVec& z) const {
  return z.dot(weights) + intercept;
}

double predict_clip(const LinearModel& model, const DenseVec& z) { return clip01(model.raw(z)); }
double predict_clip(const LinearModel& model, const SparseVec& z) { return clip01(model.raw(z)); }

NormalEquations::NormalEquations(Eigen::Index dim, Eigen::Index targets)
    : xx_(Matrix::Zero(dim, dim)),
      x_(DenseVec::Zero(dim)),
      xy_(Matrix::Zero(dim, targets)),
      y_(DenseVec::Zero(targets)),
      yy_(DenseVec::Zero(targets)) {}

void NormalEquations::add(const DenseVec& x, double y, double w) {
  require(x.size() == dim() && targets() == 1, "normal equations: shape mismatch");
  xx_.selfadjointView<Eigen::Upper>().rankUpdate(x, w);
  x_ += w * x;
  xy_.col(0) += (w * y) * x;
  y_[0] += w * y;
  yy_[0] += w * y * y;
  w_ += w;
}

void NormalEquations::add(const SparseVec& x, double y, double w) {
  require(static_cast<Eigen::Index>(x.dim) == dim() && targets() == 1, "normal equations: shape mismatch");
  const auto n = x.indices.size();
  for (std::size_t p = 0; p < n; ++p) {
    const auto ip = x.indices[p];
    const double wp = w * x.values[p];
    for (std::size_t q = p; q < n; ++q) xx_(ip, x.indices[q]) += wp * x.values[q];
    x_[ip] += wp;
    xy_(ip, 0) += wp * y;
  }
  y_[0] += w * y;
  yy_[0] += w * y * y;
  w_ += w;
}

void NormalEquations::add_rows(const Matrix& x, const Matrix& y, const DenseVec* w) {
  require(x.cols() == dim() && y.cols() == targets() && x.rows() == y.rows(),
          "normal equations: shape mismatch");
  if (x.rows() == 0) return;
  if (w) {
    require(w->size() == x.rows(), "normal equations: weight length mismatch");
    require((w->array() >= 0.0).all(), "row weights must be nonnegative");
    const Matrix xs = x.array().colwise() * w->array().sqrt();
    xx_.selfadjointView<Eigen::Upper>().rankUpdate(xs.transpose());
    x_ += x.transpose() * (*w);
    const Matrix wy = y.array().colwise() * w->array();
    xy_ += x.transpose() * wy;
    y_ += wy.colwise().sum().transpose();
    yy_ += (wy.array() * y.array()).colwise().sum().matrix().transpose();
    w_ += w->sum();
  } else {
    xx_.selfadjointView<Eigen::Upper>().rankUpdate(x.transpose());
    x_ += x.colwise().sum().transpose();
    xy_ += x.transpose() * y;
    y_ += y.colwise().sum().transpose();
    yy_ += y.array().square().colwise().sum().matrix().transpose();
    w_ += static_cast<double>(x.rows());
  }
}

NormalEquations& NormalEquations::operator+=(const NormalEquations& o) {
  require(o.dim() == dim() && o.targets() == targets(), "normal equations: shape mismatch");
  xx_ += o.xx_;
  x_ += o.x_;
  xy_ += o.xy_;
  y_ += o.y_;
  yy_ += o.yy_;
  w_ += o.w_;
  return *this;
}

NormalEquations& NormalEquations::operator-=(const NormalEquations& o) {
  require(o.dim() == dim() && o.targets() == targets(), "normal equations: shape mismatch");
  xx_ -= o.xx_;
  x_ -= o.x_;
  xy_ -= o.xy_;
  y_ -= o.y_;
  yy_ -= o.yy_;
  w_ -= o.w_;
  return *this;
}

NormalEquations NormalEquations::scaled(double s) const {
  NormalEquations out = *this;
  out.xx_ *= s;
  out.x_ *= s;
  out.xy_ *= s;
  out.y_ *= s;
  out.yy_ *= s;
  out.w_ *= s;
  return out;
}

NormalEquations NormalEquations::select_target(Eigen::Index target) const {
  require(target >= 0 && target < targets(), "target index out of range");
  NormalEquations out;
  out.xx_ = xx_;
  out.x_ = x_;
  out.xy_ = xy_.col(target);
  out.y_ = y_.segment(target, 1);
  out.yy_ = yy_.segment(target, 1);
  out.w_ = w_;
  return out;
}

Matrix NormalEquations::gram() const { return xx_.selfadjointView<Eigen::Upper>(); }

Matrix solve_spd(const Matrix& a, const Matrix& rhs, bool check_rank) {
  require(a.rows() == a.cols() && a.rows() == rhs.rows(), "solve: shape mismatch");
  const auto n = a.rows();
  if (n == 0) return Matrix(0, rhs.cols());
  require(a.allFinite() && rhs.allFinite(), "non-finite value in linear system", ErrorCode::Numeric);
  const double scale = std::max(a.trace() / static_cast<double>(n), 1e-300);
  if (check_rank) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    if (ev[0] <= 1e-12 * std::max(ev[n - 1], 1e-300)) fail(ErrorCode::Numeric, "rank-deficient design");
  }
  Matrix m = a;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() == Eigen::Success) {
      Matrix sol = llt.solve(rhs);
      const Matrix resid = a * sol - rhs;
      const double rn = rhs.norm();
      if (resid.norm() > 1e-8 * std::max(rn, 1e-300)) sol -= llt.solve(resid);
      return sol;
    }
    m.diagonal().array() += 1e-12 * scale;
  }
  fail(ErrorCode::Numeric, "matrix not positive definite after jitter escalation");
}

namespace {

// Centered system for the slopes; intercept recovered afterwards.
void build_system(const NormalEquations& ne, double penalty, bool fit_intercept, Matrix& a, Matrix& rhs) {
  a = ne.gram();
  rhs = ne.xy();
  if (fit_intercept) {
    const double w = ne.weight_sum();
    require(w > 0.0, "empty design");
    const DenseVec& xs = ne.x_sum();
    a.noalias() -= (xs * xs.transpose()) / w;
    rhs.noalias() -= (xs * ne.y_sum().transpose()) / w;
  }
  a.diagonal().array() += penalty;
}

}  // namespace

std::pair<Matrix, DenseVec> NormalEquations::solve_all(double penalty, bool fit_intercept) const {
  require(penalty >= 0.0 && std::isfinite(penalty), "penalty must be nonnegative");
  Matrix a, rhs;
  build_system(*this, penalty, fit_intercept, a, rhs);
  Matrix w = solve_spd(a, rhs, penalty == 0.0);
  DenseVec b = DenseVec::Zero(targets());
  if (fit_intercept) b = (y_ - w.transpose() * x_) / w_;
  return {std::move(w), std::move(b)};
}

LinearModel NormalEquations::solve(double penalty, bool fit_intercept, Eigen::Index target) const {
  require(target >= 0 && target < targets(), "target index out of range");
  require(penalty >= 0.0 && std::isfinite(penalty), "penalty must be nonnegative");
  Matrix a, rhs;
  build_system(*this, penalty, fit_intercept, a, rhs);
  const Matrix w = solve_spd(a, rhs.col(target), penalty == 0.0);
  LinearModel m;
  m.weights = w.col(0);
  m.penalty = penalty;
  m.intercept = fit_intercept ? (y_[target] - m.weights.dot(x_)) / w_ : 0.0;
  return m;
}

LinearModel ridge_fit(const Matrix& design, const DenseVec& targets, double penalty,
                      const std::optional<DenseVec>& weights, bool fit_intercept) {
  require(design.rows() == targets.size(), "ridge_fit: rows(design) != len(targets)");
  require(design.allFinite() && targets.allFinite(), "ridge_fit: NaN or infinite input", ErrorCode::Numeric);
  require(penalty >= 0.0, "ridge_fit: penalty must be nonnegative");
  if (weights) {
    require(weights->size() == targets.size(), "ridge_fit: weight length mismatch");
    require(weights->allFinite(), "ridge_fit: NaN weight", ErrorCode::Numeric);
  }
  NormalEquations ne(design.cols(), 1);
  ne.add_rows(design, targets, weights ? &*weights : nullptr);
  return ne.solve(penalty, fit_intercept);
}

// ---------------------------------------------------------------------------
// Projections

DenseVec ProjectionMap::apply(const DenseVec& x) const {
  require(x.size() == input_dim(), "projection: dimension mismatch");
  DenseVec out = centering ? DenseVec(matrix * (x - *centering)) : DenseVec(matrix * x);
  if (scaling) out.array() /= scaling->array();
  return out;
}

Matrix ProjectionMap::apply_rows(const Matrix& rows) const {
  require(rows.cols() == input_dim(), "projection: dimension mismatch");
  Matrix out = rows * matrix.transpose();
  if (centering) out.rowwise() -= (matrix * *centering).transpose();
  if (scaling) out.array().rowwise() /= scaling->transpose().array();
  return out;
}

ProjectionMap pca_fit(const Matrix& rows, int d, bool standardize) {
  require(d >= 1, "pca: d must be positive");
  require(rows.rows() >= d, "pca: fewer rows than components");
  require(rows.cols() >= d, "pca: d exceeds the input dimension");
  require(rows.allFinite(), "pca: non-finite input", ErrorCode::Numeric);
  const DenseVec mean = rows.colwise().mean().transpose();
  const Matrix centered = rows.rowwise() - mean.transpose();
  Eigen::BDCSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const DenseVec& s = svd.singularValues();
  const double tol = 1e-10 * std::max(s.size() ? s[0] : 0.0, 1e-300) *
                     static_cast<double>(std::max(rows.rows(), rows.cols()));
  Eigen::Index rank = 0;
  while (rank < s.size() && s[rank] > tol) ++rank;
  if (d > rank) fail(ErrorCode::Numeric, "insufficient rank");

  ProjectionMap map;
  map.matrix = svd.matrixV().leftCols(d).transpose();
  for (Eigen::Index k = 0; k < d; ++k) {
    auto row = map.matrix.row(k);
    const double big = row.cwiseAbs().maxCoeff();
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      if (std::abs(row[j]) > 1e-12 * big) {
        if (row[j] < 0.0) row *= -1.0;
        break;
      }
    }
  }
  map.centering = mean;
  if (standardize) {
    map.scaling = s.head(d) / std::sqrt(static_cast<double>(rows.rows()));
  }
  return map;
}

// ---------------------------------------------------------------------------
// Gauss-Hermite

namespace {

GaussHermiteRule golub_welsch(int n) {
  Matrix j = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = std::sqrt(0.5 * k);
    j(k, k - 1) = b;
    j(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(j);
  GaussHermiteRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  const double mu0 = std::sqrt(std::numbers::pi);
  for (int k = 0; k < n; ++k) {
    rule.nodes[static_cast<std::size_t>(k)] = es.eigenvalues()[k];
    const double v = es.eigenvectors()(0, k);
    rule.weights[static_cast<std::size_t>(k)] = mu0 * v * v;
  }
  // Symmetrize: the exact rule is symmetric about zero.
  for (int k = 0; k < n / 2; ++k) {
    const auto a = static_cast<std::size_t>(k), b = static_cast<std::size_t>(n - 1 - k);
    const double x = 0.5 * (rule.nodes[b] - rule.nodes[a]);
    const double w = 0.5 * (rule.weights[a] + rule.weights[b]);
    rule.nodes[a] = -x;
    rule.nodes[b] = x;
    rule.weights[a] = rule.weights[b] = w;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return rule;
}

}  // namespace

const GaussHermiteRule& gauss_hermite(int nodes) {
  require(nodes >= 1 && nodes <= 512, "gauss_hermite: node count out of range");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[nodes];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(golub_welsch(nodes));
  return *slot;
}

int gauss_hermite_nodes_for(double var) {
  require(var >= 0.0, "gauss_hermite_nodes_for: variance must be nonnegative");
  // Smallest rule keeping the error below 1e-11 up to each variance.
  static constexpr std::pair<double, int> kSchedule[] = {
      {3.0, 64}, {4.0, 96}, {6.0, 128}, {9.0, 192}, {12.0, 256}, {20.0, 384}, {25.0, 512}};
  for (const auto& [v, n] : kSchedule)
    if (var <= v) return n;
  return 512;
}

double expect_sigmoid_gaussian(double mean, double var, int nodes) {
  require(var >= 0.0, "expect_sigmoid_gaussian: variance must be nonnegative");
  if (var == 0.0) return sigmoid(mean);
  if (nodes == 0) nodes = gauss_hermite_nodes_for(var);
  require(nodes >= 16, "expect_sigmoid_gaussian: at least 16 nodes required");
  static const GaussHermiteRule& rule64 = gauss_hermite(64);
  const auto& rule = nodes == 64 ? rule64 : gauss_hermite(nodes);
  const double s = std::sqrt(2.0 * var);
  double acc = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) acc += rule.weights[k] * sigmoid(mean + s * rule.nodes[k]);
  return acc / std::sqrt(std::numbers::pi);
}

}  // namespace ceval
