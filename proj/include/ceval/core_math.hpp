/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ceval/error.hpp"

namespace ceval {

using DenseVec = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr std::uint32_t kDefaultHashDim = 1u << 18;

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Avalanche hash over a byte string and a seed. Bytes are consumed in
/// little-endian 8-byte words; the length is folded in last.
std::uint64_t hash_bytes(std::span<const unsigned char> bytes, std::uint64_t seed) noexcept;

/// Hash of a textual token.
std::uint64_t hash_token(std::string_view token, std::uint64_t seed) noexcept;

/// Hash of an integer token id (its 8 little-endian bytes).
std::uint64_t hash_token_id(std::uint64_t id, std::uint64_t seed) noexcept;

/// Sign carried by bit 63 of a hash value.
constexpr double hash_sign(std::uint64_t h) noexcept { return (h >> 63) ? -1.0 : 1.0; }

// ---------------------------------------------------------------------------
// Sparse vectors
// ---------------------------------------------------------------------------

/// Sparse vector with strictly increasing indices and no stored zeros.
struct SparseVec {
  std::uint32_t dim = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  std::size_t nnz() const noexcept { return indices.size(); }
  double squared_norm() const noexcept;
  double dot(const DenseVec& w) const;

  /// Build from unsorted (index, value) pairs: duplicates are summed, zeros dropped.
  static SparseVec from_pairs(std::uint32_t dim, std::vector<std::pair<std::uint32_t, double>> pairs);
  bool is_canonical() const noexcept;
};

/// Scales to unit L2 norm; the zero vector is returned unchanged.
SparseVec l2_normalized(SparseVec v);

/// A token id with its multiplicity.
struct TokenCount {
  std::uint64_t id;
  std::uint32_t count;
};

/// Signed, L2-normalized hashed bag of words: index = hash mod dim, sign from bit 63.
/// `dim` must be a power of two.
SparseVec hash_features(std::span<const std::string> tokens, std::uint32_t dim = kDefaultHashDim,
                        std::uint64_t seed = 0);
SparseVec hash_token_counts(std::span<const TokenCount> tokens, std::uint32_t dim = kDefaultHashDim,
                            std::uint64_t seed = 0);

/// Caches the (index, sign) pair of small integer token ids so hot loops avoid rehashing.
class TokenHasher {
 public:
  TokenHasher(std::uint32_t dim, std::uint64_t seed, std::uint64_t cached_ids);
  SparseVec features(std::span<const TokenCount> tokens) const;
  std::uint32_t dim() const noexcept { return dim_; }

 private:
  std::uint32_t dim_;
  std::uint64_t seed_;
  std::vector<std::uint64_t> table_;
};

/// out[j] = sum_i sign(i, seed) * x_i over indices with bucket(i, seed) == j.
DenseVec signed_hash_project(const SparseVec& x, int d, std::uint64_t seed);
/// Same projection, returned sparse (used for the densified regression features).
SparseVec signed_hash_project_sparse(const SparseVec& x, std::uint32_t d, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Penalized least squares
// ---------------------------------------------------------------------------

struct LinearModel {
  DenseVec weights;
  double intercept = 0.0;
  double penalty = 0.0;

  double raw(const DenseVec& z) const;
  double raw(const SparseVec& z) const;
};

inline double clip01(double v) noexcept { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

/// clip(w'z + b, 0, 1). Throws on dimension mismatch.
double predict_clip(const LinearModel& model, const DenseVec& z);
double predict_clip(const LinearModel& model, const SparseVec& z);

/// Weighted sufficient statistics for (multi-target) ridge regression.
/// Accumulates sum w x x', sum w x, sum w x y, sum w y, sum w y^2 and sum w.
class NormalEquations {
 public:
  NormalEquations() = default;
  NormalEquations(Eigen::Index dim, Eigen::Index targets = 1);

  void add(const DenseVec& x, double y, double w = 1.0);
  void add(const SparseVec& x, double y, double w = 1.0);
  /// Rows of `x` with matching rows of `y` (one column per target) and optional row weights.
  void add_rows(const Matrix& x, const Matrix& y, const DenseVec* w = nullptr);

  NormalEquations& operator+=(const NormalEquations& other);
  NormalEquations& operator-=(const NormalEquations& other);
  NormalEquations scaled(double s) const;
  /// The same statistics restricted to one target column.
  NormalEquations select_target(Eigen::Index target) const;

  Eigen::Index dim() const noexcept { return xx_.rows(); }
  Eigen::Index targets() const noexcept { return xy_.cols(); }
  double weight_sum() const noexcept { return w_; }
  /// Symmetric Gram matrix sum w x x'.
  Matrix gram() const;
  const DenseVec& x_sum() const noexcept { return x_; }
  const Matrix& xy() const noexcept { return xy_; }
  const DenseVec& y_sum() const noexcept { return y_; }
  const DenseVec& yy_sum() const noexcept { return yy_; }

  /// argmin sum w (y - w'x - b)^2 + penalty ||w||^2 for target `target`; intercept unpenalized.
  LinearModel solve(double penalty, bool fit_intercept, Eigen::Index target = 0) const;
  /// All targets at once; returns (dim x targets) weights and a targets-long intercept vector.
  std::pair<Matrix, DenseVec> solve_all(double penalty, bool fit_intercept) const;

 private:
  Matrix xx_;
  DenseVec x_;
  Matrix xy_;
  DenseVec y_;
  DenseVec yy_;
  double w_ = 0.0;
};

/// Symmetric positive (semi)definite solve used by every ridge path. Cholesky with jitter
/// escalation (1e-12 * trace / dim, at most three times). With `check_rank` the matrix is
/// first tested for numerical rank deficiency.
Matrix solve_spd(const Matrix& a, const Matrix& rhs, bool check_rank);

/// Weighted ridge on a dense design. Errors: rank-deficient design at penalty 0, NaN input.
LinearModel ridge_fit(const Matrix& design, const DenseVec& targets, double penalty,
                      const std::optional<DenseVec>& weights, bool fit_intercept);

// ---------------------------------------------------------------------------
// Projections
// ---------------------------------------------------------------------------

/// y = diag(1/scaling) * matrix * (x - centering).
struct ProjectionMap {
  Matrix matrix;                      // output dim x input dim
  std::optional<DenseVec> centering;  // input dim
  std::optional<DenseVec> scaling;    // output dim, entries > 0

  Eigen::Index output_dim() const noexcept { return matrix.rows(); }
  Eigen::Index input_dim() const noexcept { return matrix.cols(); }
  DenseVec apply(const DenseVec& x) const;
  Matrix apply_rows(const Matrix& rows) const;
};

/// PCA via thin SVD of the column-centered rows. Components have their first nonzero
/// loading positive; with `standardize` the outputs have unit (population) variance on `rows`.
ProjectionMap pca_fit(const Matrix& rows, int d, bool standardize);

// ---------------------------------------------------------------------------
// Scalar kernels
// ---------------------------------------------------------------------------

inline double sigmoid(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// Gauss-Hermite nodes and weights for the weight function exp(-x^2).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussHermiteRule& gauss_hermite(int nodes);

/// Rule size used for a given variance; 512 nodes beyond 25.
int gauss_hermite_nodes_for(double var);

/// E[sigmoid(mean + N(0, var))] by Gauss-Hermite quadrature. nodes = 0 picks the size from var.
double expect_sigmoid_gaussian(double mean, double var, int nodes = 0);

}  // namespace ceval
