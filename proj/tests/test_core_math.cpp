/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include <doctest.h>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ceval/core_math.hpp"
#include "ceval/random.hpp"

using namespace ceval;

namespace {

Matrix randn(Rng& rng, int r, int c) {
  Matrix m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_SUITE("core_math") {
  TEST_CASE("hash is deterministic and seed dependent") {
    CHECK(hash_token("grounded", 3) == hash_token("grounded", 3));
    CHECK(hash_token("grounded", 3) != hash_token("grounded", 4));
    CHECK(hash_token("a", 0) != hash_token("b", 0));
    CHECK(hash_token_id(17, 5) == hash_token_id(17, 5));
  }

  TEST_CASE("hashed features are canonical and unit norm") {
    const std::vector<std::string> toks{"the", "cat", "the", "sat", "on", "the", "mat"};
    const SparseVec v = hash_features(toks, 1u << 10, 9);
    CHECK(v.is_canonical());
    CHECK(v.squared_norm() == doctest::Approx(1.0).epsilon(1e-12));
    // Direct recount: the bucket of "the" carries 3 / sqrt(sum of squared counts) when nothing collides.
    const std::uint64_t h = hash_token("the", 9);
    const std::uint32_t idx = static_cast<std::uint32_t>(h & ((1u << 10) - 1));
    std::set<std::uint32_t> buckets;
    for (const auto& t : {"the", "cat", "sat", "on", "mat"}) buckets.insert(static_cast<std::uint32_t>(hash_token(t, 9) & 1023u));
    if (buckets.size() == 5) {
      for (std::size_t k = 0; k < v.nnz(); ++k)
        if (v.indices[k] == idx) CHECK(v.values[k] == doctest::Approx(hash_sign(h) * 3.0 / std::sqrt(13.0)));
    }
  }

  TEST_CASE("sparse vector from pairs sums duplicates and drops zeros") {
    const SparseVec v = SparseVec::from_pairs(8, {{3, 1.0}, {1, 2.0}, {3, -1.0}, {5, 0.5}, {1, 1.0}});
    REQUIRE(v.nnz() == 2);
    CHECK(v.indices[0] == 1);
    CHECK(v.values[0] == 3.0);
    CHECK(v.indices[1] == 5);
    CHECK(v.is_canonical());
  }

  TEST_CASE("token hasher agrees with uncached hashing") {
    const TokenHasher th(1u << 12, 21, 100);
    const std::vector<TokenCount> toks{{3, 2}, {50, 1}, {150, 4}};
    const SparseVec a = th.features(toks);
    const SparseVec b = hash_token_counts(toks, 1u << 12, 21);
    REQUIRE(a.nnz() == b.nnz());
    for (std::size_t k = 0; k < a.nnz(); ++k) {
      CHECK(a.indices[k] == b.indices[k]);
      CHECK(a.values[k] == doctest::Approx(b.values[k]).epsilon(1e-15));
    }
  }

  TEST_CASE("signed hash projection preserves inner products on average") {
    Rng rng(4);
    std::vector<std::pair<std::uint32_t, double>> pa, pb;
    for (int i = 0; i < 400; ++i) {
      const auto idx = static_cast<std::uint32_t>(rng.below(1 << 16));
      const double v = rng.normal();
      pa.push_back({idx, v});
      pb.push_back({idx, v + 0.5 * rng.normal()});
    }
    const SparseVec a = SparseVec::from_pairs(1u << 16, pa), b = SparseVec::from_pairs(1u << 16, pb);
    double exact = 0.0;
    std::size_t j = 0;
    for (std::size_t i = 0; i < a.nnz(); ++i) {
      while (j < b.nnz() && b.indices[j] < a.indices[i]) ++j;
      if (j < b.nnz() && b.indices[j] == a.indices[i]) exact += a.values[i] * b.values[j];
    }
    double mean = 0.0;
    const int reps = 200;
    for (int s = 0; s < reps; ++s) mean += signed_hash_project(a, 64, s).dot(signed_hash_project(b, 64, s));
    mean /= reps;
    CHECK(std::abs(mean - exact) < 0.1 * std::abs(exact) + 5.0);
    const DenseVec d = signed_hash_project(a, 64, 1);
    const SparseVec sp = signed_hash_project_sparse(a, 64, 1);
    DenseVec dd = DenseVec::Zero(64);
    for (std::size_t k = 0; k < sp.nnz(); ++k) dd[sp.indices[k]] = sp.values[k];
    CHECK((d - dd).norm() < 1e-12);
  }

  TEST_CASE("ridge via normal equations matches the closed form") {
    Rng rng(11);
    const int n = 80, d = 6;
    const Matrix x = randn(rng, n, d);
    DenseVec y(n);
    for (int i = 0; i < n; ++i) y[i] = 0.3 + x.row(i).sum() * 0.2 + 0.1 * rng.normal();
    DenseVec w(n);
    for (int i = 0; i < n; ++i) w[i] = 0.5 + rng.uniform();
    const double lam = 2.5;
    NormalEquations ne(d, 1);
    ne.add_rows(x, y, &w);
    const LinearModel m = ne.solve(lam, true);

    // Oracle: augmented design with a free intercept column and penalty only on slopes.
    Matrix xa(n, d + 1);
    xa.leftCols(d) = x;
    xa.col(d).setOnes();
    Matrix a = xa.transpose() * w.asDiagonal() * xa;
    for (int j = 0; j < d; ++j) a(j, j) += lam;
    const DenseVec sol = a.ldlt().solve(xa.transpose() * w.asDiagonal() * y);
    CHECK((m.weights - sol.head(d)).norm() < 1e-10);
    CHECK(m.intercept == doctest::Approx(sol[d]).epsilon(1e-10));

    const LinearModel r = ridge_fit(x, y, lam, w, true);
    CHECK((r.weights - m.weights).norm() < 1e-10);
  }

  TEST_CASE("normal equations add and subtract") {
    Rng rng(2);
    const Matrix x = randn(rng, 30, 4);
    const Matrix y = randn(rng, 30, 2);
    NormalEquations all(4, 2), a(4, 2), b(4, 2);
    all.add_rows(x, y);
    a.add_rows(x.topRows(10), y.topRows(10));
    b.add_rows(x.bottomRows(20), y.bottomRows(20));
    NormalEquations s = a;
    s += b;
    CHECK((s.gram() - all.gram()).norm() < 1e-12);
    s -= b;
    CHECK((s.gram() - a.gram()).norm() < 1e-12);
    const auto t1 = all.select_target(1);
    CHECK(t1.targets() == 1);
    CHECK((t1.xy().col(0) - all.xy().col(1)).norm() == 0.0);
  }

  TEST_CASE("ridge rejects NaN and rank deficiency at zero penalty") {
    Matrix x = Matrix::Ones(5, 2);
    DenseVec y = DenseVec::Ones(5);
    CHECK_THROWS(ridge_fit(x, y, 0.0, std::nullopt, false));
    x(0, 0) = std::nan("");
    CHECK_THROWS(ridge_fit(x, y, 1.0, std::nullopt, false));
  }

  TEST_CASE("pca components are orthonormal and standardized") {
    Rng rng(3);
    Matrix z = randn(rng, 300, 5);
    z.col(1) *= 3.0;
    const ProjectionMap p = pca_fit(z, 3, true);
    const Matrix out = p.apply_rows(z);
    for (int j = 0; j < 3; ++j) {
      const double mean = out.col(j).mean();
      CHECK(std::abs(mean) < 1e-10);
      CHECK((out.col(j).array() - mean).square().mean() == doctest::Approx(1.0).epsilon(1e-9));
    }
    const Matrix g = p.matrix * p.matrix.transpose();
    CHECK((g - Matrix::Identity(3, 3)).norm() < 1e-10);
  }

  TEST_CASE("gauss hermite expectation matches adaptive quadrature") {
    using boost::math::quadrature::gauss_kronrod;
    for (double mean : {-2.0, -0.3, 0.0, 1.1, 3.0}) {
      for (double var : {0.01, 0.5, 2.0, 6.0, 11.0, 18.0, 25.0}) {
        const double sd = std::sqrt(var);
        auto f = [&](double t) {
          return sigmoid(mean + sd * t) * std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI);
        };
        const double ref = gauss_kronrod<double, 61>::integrate(f, -40.0, 40.0, 15, 1e-14);
        CHECK(std::abs(expect_sigmoid_gaussian(mean, var) - ref) < 1e-10);
      }
    }
  }

  TEST_CASE("balanced folds") {
    Rng rng(5);
    const auto f = balanced_folds(23, 4, rng);
    std::vector<int> count(4, 0);
    for (int v : f) ++count[v];
    CHECK(count[0] == 6);
    CHECK(count[3] == 5);
    CHECK_THROWS(balanced_folds(3, 4, rng));
  }

  TEST_CASE("alias table frequencies") {
    const AliasTable t({1.0, 2.0, 7.0});
    Rng rng(8);
    std::vector<int> c(3, 0);
    const int n = 200000;
    for (int i = 0; i < n; ++i) ++c[t.sample(rng)];
    CHECK(std::abs(c[2] / double(n) - 0.7) < 0.005);
    CHECK(std::abs(c[0] / double(n) - 0.1) < 0.005);
  }

  TEST_CASE("derived seeds differ per part") {
    CHECK(derive_seed({1, 2, 3}) != derive_seed({1, 3, 2}));
    CHECK(derive_seed({1, 2, 3}) == derive_seed({1, 2, 3}));
  }
}
