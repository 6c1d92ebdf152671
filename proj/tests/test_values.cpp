/*
 * (C) Copyright 2026 ceval developers
 *
 * This software is licensed under the terms of the Apache Licence Version 2.0
 * which can be obtained at http://www.apache.org/licenses/LICENSE-2.0.
 */
#include <doctest.h>

#include <cmath>
#include <set>

#include "ceval/random.hpp"
#include "ceval/values.hpp"

using namespace ceval;

TEST_SUITE("values") {
  TEST_CASE("direct method layout") {
    const int n = 3, A = 2, B = 4;
    DenseVec pred(n * A * B);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < A; ++a)
        for (int b = 0; b < B; ++b) pred[(i * A + a) * B + b] = 0.1 * i + 0.3 * a + 0.01 * b;
    const ValueEstimate v = dm_from_predictions(pred, n, A, B);
    CHECK(v.q_dm(2, 1) == doctest::Approx(0.2 + 0.3 + 0.015).epsilon(1e-14));
    CHECK(v.mu_dm[0] == doctest::Approx(0.1 + 0.015).epsilon(1e-14));
    CHECK_THROWS(dm_from_predictions(pred, n, A, B + 1));
  }

  TEST_CASE("DR correction equals an independent Horvitz-Thompson sum") {
    Rng rng(12);
    const int A = 4, n = 37;
    std::vector<int> act(n);
    DenseVec y(n);
    for (int j = 0; j < n; ++j) {
      act[j] = rng.below(A);
      y[j] = rng.uniform();
    }
    ValueEstimate est;
    est.mu_dm = DenseVec::LinSpaced(A, 0.2, 0.5);
    // Predictor: mean of the training outcomes plus an agent offset.
    CrossFitPredictor pr = [&](std::span<const std::size_t> tr, std::span<const std::size_t> ho) {
      double m = 0.0;
      for (auto j : tr) m += y[static_cast<Eigen::Index>(j)];
      m /= static_cast<double>(tr.size());
      DenseVec p(static_cast<Eigen::Index>(ho.size()));
      for (std::size_t r = 0; r < ho.size(); ++r) p[static_cast<Eigen::Index>(r)] = m + 0.05 * act[ho[r]];
      return p;
    };
    const auto folds = cross_fit_partition(n, 5, 3);
    const DrResult dr = dr_values(est, pr, act, y, A, folds);
    // Recompute residuals fold by fold and the weighted sum by hand.
    DenseVec expect = DenseVec::Zero(A);
    for (int j = 0; j < n; ++j) {
      double m = 0.0, c = 0.0;
      for (int t = 0; t < n; ++t)
        if (folds[t] != folds[j]) {
          m += y[t];
          c += 1.0;
        }
      const double res = y[j] - (m / c + 0.05 * act[j]);
      expect[act[j]] += A * res / n;
    }
    CHECK((dr.correction - expect).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(((est.mu_dr - est.mu_dm) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("cross-fit partition is balanced and seeded") {
    const auto a = cross_fit_partition(23, 5, 1);
    const auto b = cross_fit_partition(23, 5, 1);
    CHECK(a == b);
    std::vector<int> c(5, 0);
    for (int f : a) ++c[f];
    CHECK(*std::max_element(c.begin(), c.end()) - *std::min_element(c.begin(), c.end()) <= 1);
    CHECK_THROWS(cross_fit_partition(3, 5, 1));
  }

  TEST_CASE("absent agents get no correction") {
    ValueEstimate est;
    est.mu_dm = DenseVec::Constant(3, 0.5);
    const std::vector<int> act{0, 0, 2, 2};
    DenseVec y(4);
    y << 1, 0, 1, 1;
    CrossFitPredictor pr = [](std::span<const std::size_t>, std::span<const std::size_t> ho) {
      return DenseVec::Constant(static_cast<Eigen::Index>(ho.size()), 0.5);
    };
    dr_values(est, pr, act, y, 3, {});
    CHECK(est.mu_dr[1] == 0.5);
    CHECK(est.mu_dr[2] == doctest::Approx(0.5 + 3.0 * 1.0 / 4.0));
  }
}
