// Copyright 2026 The tsx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "tsx/bss_core.hpp"
#include "tsx/rng.hpp"

namespace {

Eigen::MatrixXcd random_complex(tsx::CounterRng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXcd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = {rng.normal(), rng.normal()};
  return m;
}

Eigen::MatrixXcd random_spd(tsx::CounterRng& rng, Eigen::Index n) {
  const Eigen::MatrixXcd a = random_complex(rng, n, n + 2);
  return a * a.adjoint() / static_cast<double>(n + 2) + 1e-3 * Eigen::MatrixXcd::Identity(n, n);
}

tsx::SpectrogramTensor random_tensor(tsx::CounterRng& rng, std::size_t m, std::size_t f, std::size_t t) {
  tsx::SpectrogramTensor x;
  x.window_length = 2 * (f - 1);
  x.hop = x.window_length / 4;
  for (std::size_t k = 0; k < f; ++k)
    x.bins.push_back(random_complex(rng, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(t)));
  return x;
}

}  // namespace

TEST(IterativeProjection, ScalarCaseIsExact) {
  Eigen::MatrixXcd w(1, 1), v(1, 1);
  w(0, 0) = 1.0;
  v(0, 0) = 4.0;
  const auto out = tsx::ip_update(w, v, 0);
  EXPECT_EQ(out(0), tsx::Complex(0.5, 0.0));
}

TEST(IterativeProjection, UnitNormUnderV) {
  tsx::CounterRng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const Eigen::Index n = 2 + trial % 3;
    const auto v = random_spd(rng, n);
    const auto w = random_complex(rng, n, n);
    const auto m = static_cast<std::size_t>(trial % n);
    const Eigen::VectorXcd row = tsx::ip_update(w, v, m);
    EXPECT_NEAR((row.adjoint() * v * row)(0, 0).real(), 1.0, 1e-8);
    // The other rows of W stay V-orthogonal to the update.
    for (Eigen::Index k = 0; k < n; ++k)
      if (k != static_cast<Eigen::Index>(m))
        EXPECT_NEAR(std::abs((w.row(k) * v * row)(0, 0)) /
                        (w.row(k).norm() * v.norm() * row.norm()), 0.0, 1e-9);
  }
}

TEST(IterativeProjection, SingularSystemNamesFrequency) {
  const Eigen::MatrixXcd w = Eigen::MatrixXcd::Zero(2, 2);
  const Eigen::MatrixXcd v = Eigen::MatrixXcd::Zero(2, 2);
  try {
    tsx::ip_update(w, v, 0, 5);
    FAIL() << "expected an error";
  } catch (const tsx::Error& e) {
    EXPECT_NE(std::string(e.what()).find("frequency 5"), std::string::npos);
  }
}

TEST(Objective, MatchesLoopOracle) {
  tsx::CounterRng rng(12);
  const auto x = random_tensor(rng, 2, 5, 9);
  tsx::DemixingSet w;
  for (int f = 0; f < 5; ++f) w.matrices.push_back(random_complex(rng, 2, 2));
  tsx::VarianceField v;
  for (int m = 0; m < 2; ++m) v.sources.push_back((Eigen::MatrixXd::Random(5, 9).array().abs() + 0.1).matrix());

  double oracle = 0.0;
  for (int f = 0; f < 5; ++f) {
    const auto& a = w.matrices[static_cast<std::size_t>(f)];
    const tsx::Complex det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    oracle -= 2.0 * 9.0 * std::log(std::abs(det));
    for (int t = 0; t < 9; ++t)
      for (int m = 0; m < 2; ++m) {
        tsx::Complex y = 0.0;
        for (int k = 0; k < 2; ++k) y += a(m, k) * x.bins[static_cast<std::size_t>(f)](k, t);
        const double var = v.sources[static_cast<std::size_t>(m)](f, t);
        oracle += std::log(var) + std::norm(y) / var;
      }
  }
  EXPECT_NEAR(tsx::objective(x, w, v), oracle, 1e-9 * std::abs(oracle));
}

TEST(Objective, IpSweepNeverIncreasesIt) {
  tsx::CounterRng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_tensor(rng, 3, 4, 30);
    auto w = tsx::DemixingSet::identity(4, 3);
    tsx::VarianceField v;
    for (int m = 0; m < 3; ++m) v.sources.push_back((Eigen::MatrixXd::Random(4, 30).array().abs() + 0.05).matrix());
    double prev = tsx::objective(x, w, v);
    for (int it = 0; it < 5; ++it) {
      tsx::ip_sweep(x, w, v);
      const double j = tsx::objective(x, w, v);
      EXPECT_LE(j, prev + 1e-9 * std::abs(prev));
      prev = j;
    }
  }
}

TEST(SpatialCovariance, HermitianAndMatchesLoop) {
  tsx::CounterRng rng(14);
  const auto xf = random_complex(rng, 3, 20);
  Eigen::RowVectorXd r(20);
  for (int t = 0; t < 20; ++t) r(t) = 0.5 + rng.uniform();
  const auto v = tsx::spatial_covariance(xf, r);
  Eigen::MatrixXcd oracle = Eigen::MatrixXcd::Zero(3, 3);
  for (int t = 0; t < 20; ++t) oracle += xf.col(t) * xf.col(t).adjoint() / r(t);
  oracle /= 20.0;
  EXPECT_LT((v - oracle).norm(), 1e-12);
  EXPECT_LT((v - v.adjoint()).norm(), 1e-15);
}

TEST(ProjectionBack, SourcesSumToReferenceChannel) {
  tsx::CounterRng rng(15);
  const auto x = random_tensor(rng, 2, 6, 12);
  tsx::DemixingSet w;
  for (int f = 0; f < 6; ++f) w.matrices.push_back(random_complex(rng, 2, 2));
  for (std::size_t ref : {0u, 1u}) {
    const auto out = tsx::projection_back(tsx::demix(x, w), w, ref);
    for (std::size_t f = 0; f < 6; ++f) {
      const Eigen::RowVectorXcd sum = out.bins[f].colwise().sum();
      EXPECT_LT((sum - x.bins[f].row(static_cast<Eigen::Index>(ref))).norm(), 1e-10);
    }
  }
}

TEST(ProjectionBack, Errors) {
  tsx::CounterRng rng(16);
  const auto x = random_tensor(rng, 2, 3, 4);
  auto w = tsx::DemixingSet::identity(3, 2);
  EXPECT_THROW(tsx::projection_back(x, w, 2), tsx::Error);
  w.matrices[1].setZero();
  EXPECT_THROW(tsx::projection_back(x, w, 0), tsx::Error);
  EXPECT_THROW(tsx::demix(x, tsx::DemixingSet::identity(2, 2)), tsx::Error);
}
