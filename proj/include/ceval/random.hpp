/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include "ceval/core_math.hpp"

namespace ceval {

/// Folds a list of words into one seed with the SplitMix64 finalizer.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x6A09E667F3BCC909ull;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

/// Bit pattern of a double, for folding reals into seeds.
std::uint64_t double_bits(double v) noexcept;

/// One RNG stream. Thin wrapper over std::mt19937_64 and the standard distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return unif_(engine_); }
  double normal() { return norm_(engine_); }
  double normal(double mean, double sd) { return mean + sd * norm_(engine_); }
  /// Uniform integer in [0, n).
  int below(int n) { return std::uniform_int_distribution<int>(0, n - 1)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  int binomial(int n, double p) { return std::binomial_distribution<int>(n, p)(engine_); }
  std::uint64_t bits() { return engine_(); }
  /// Index drawn from a discrete distribution given as a cumulative table.
  std::size_t from_cdf(const std::vector<double>& cdf);
  /// Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(0, i - 1)(engine_));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

/// Bernoulli trials at 16-bit resolution: each engine word yields four trials.
class BitTrials {
 public:
  explicit BitTrials(Rng& rng) : rng_(rng) {}
  /// Threshold for success probability p (quantized to 2^-16).
  static std::uint32_t threshold(double p) noexcept {
    if (!(p > 0.0)) return 0;
    if (p >= 1.0) return 65536;
    return static_cast<std::uint32_t>(p * 65536.0);
  }
  bool trial(std::uint32_t threshold) {
    if (left_ == 0) {
      buf_ = rng_.bits();
      left_ = 4;
    }
    const auto chunk = static_cast<std::uint32_t>(buf_ & 0xFFFFu);
    buf_ >>= 16;
    --left_;
    return chunk < threshold;
  }

 private:
  Rng& rng_;
  std::uint64_t buf_ = 0;
  int left_ = 0;
};

/// Seeded, size-balanced fold labels: rows are shuffled and the row at shuffled position p
/// goes to fold p mod k, so fold sizes differ by at most one and the larger folds come first.
std::vector<int> balanced_folds(std::size_t n, int k, Rng& rng);

/// Walker alias table for O(1) draws from a fixed discrete distribution.
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(const std::vector<double>& weights);
  std::size_t sample(Rng& rng) const;
  std::size_t size() const noexcept { return prob_.size(); }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

}  // namespace ceval
