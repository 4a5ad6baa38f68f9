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

#include "test_support.hpp"
#include "tsx/ilrma.hpp"
#include "tsx/metrics.hpp"
#include "tsx/stft.hpp"

namespace {

Eigen::MatrixXd positive_matrix(tsx::CounterRng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::exp(2.0 * rng.normal());
  return m;
}

std::vector<std::vector<double>> separate(const tsx::TimeSignal& mix, const tsx::IlrmaOptions& opt) {
  auto out = tsx::synthesize(tsx::run_ilrma(tsx::analyze(mix), opt).separated);
  for (auto& ch : out.channels) ch.resize(mix.length());
  return out.channels;
}

}  // namespace

TEST(Nmf, RandomInitIsSeededAndInRange) {
  const auto a = tsx::NmfModel::random(2, 9, 11, 3, 5);
  const auto b = tsx::NmfModel::random(2, 9, 11, 3, 5);
  const auto c = tsx::NmfModel::random(2, 9, 11, 3, 6);
  EXPECT_EQ(a.basis[1], b.basis[1]);
  EXPECT_NE(a.basis[1], c.basis[1]);
  for (const auto& m : a.activation) {
    EXPECT_GE(m.minCoeff(), 0.1);
    EXPECT_LE(m.maxCoeff(), 1.0);
  }
}

TEST(Nmf, MultiplicativeUpdatesDecreaseIsDivergence) {
  tsx::CounterRng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd power = positive_matrix(rng, 20, 40);
    auto model = tsx::NmfModel::random(1, 20, 40, 4, static_cast<std::uint64_t>(trial));
    double prev = tsx::is_divergence(power, model.basis[0] * model.activation[0]);
    for (int it = 0; it < 30; ++it) {
      model = tsx::nmf_update(model, {power});
      const double d = tsx::is_divergence(power, model.basis[0] * model.activation[0]);
      EXPECT_LE(d, prev * (1.0 + 1e-12));
      prev = d;
    }
    EXPECT_GE(model.basis[0].minCoeff(), 0.0);
  }
}

TEST(Nmf, RejectsNegativePower) {
  auto model = tsx::NmfModel::random(1, 3, 4, 1, 0);
  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(3, 4);
  p(1, 2) = -1.0;
  EXPECT_THROW(tsx::nmf_update(model, {p}), tsx::Error);
}

TEST(Ilrma, ObjectiveIsMonotone) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto mix = tsx_test::instantaneous_mix(seed, 2.0);
    tsx::IlrmaOptions opt;
    opt.iterations = 30;
    opt.seed = seed;
    const auto r = tsx::run_ilrma(tsx::analyze(mix.mixture), opt);
    ASSERT_EQ(r.objective_trace.size(), 31u);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      EXPECT_LE(r.objective_trace[i], r.objective_trace[i - 1] + 1e-6 * std::abs(r.objective_trace[i - 1]))
          << "seed " << seed << " iteration " << i;
  }
}

TEST(Ilrma, NormalizationDoesNotChangeTheProjectedOutput) {
  const auto mix = tsx_test::instantaneous_mix(3, 2.0);
  const auto x = tsx::analyze(mix.mixture);
  tsx::IlrmaOptions a;
  a.iterations = 10;
  tsx::IlrmaOptions b = a;
  b.normalize = false;
  const auto ya = tsx::run_ilrma(x, a).separated;
  const auto yb = tsx::run_ilrma(x, b).separated;
  double num = 0.0, den = 0.0;
  for (std::size_t f = 0; f < ya.num_bins(); ++f) {
    num += (ya.bins[f] - yb.bins[f]).squaredNorm();
    den += yb.bins[f].squaredNorm();
  }
  EXPECT_LT(std::sqrt(num / den), 1e-6);
}

TEST(Ilrma, SeparatesInstantaneousMixture) {
  const auto mix = tsx_test::instantaneous_mix(11, 4.0);
  tsx::IlrmaOptions opt;
  opt.iterations = 60;
  const auto est = separate(mix.mixture, opt);
  const auto perm = tsx::oracle_permutation(est, mix.sources);
  for (std::size_t i = 0; i < 2; ++i) {
    const double before = tsx::si_sdr(mix.mixture.channels[0], mix.sources[i]);
    EXPECT_GT(perm.sdr[i] - before, 10.0) << "source " << i;
  }
}

TEST(Ilrma, ZeroIterationsReturnsIdentityProjection) {
  const auto mix = tsx_test::instantaneous_mix(1, 1.0);
  tsx::IlrmaOptions opt;
  opt.iterations = 0;
  const auto r = tsx::run_ilrma(tsx::analyze(mix.mixture), opt);
  EXPECT_EQ(r.objective_trace.size(), 1u);
  for (const auto& w : r.demixing.matrices) EXPECT_TRUE(w.isIdentity());
}

TEST(Ilrma, DeterministicForSeed) {
  const auto x = tsx::analyze(tsx_test::instantaneous_mix(2, 1.0).mixture);
  tsx::IlrmaOptions opt;
  opt.iterations = 5;
  opt.seed = 9;
  EXPECT_EQ(tsx::run_ilrma(x, opt).objective_trace, tsx::run_ilrma(x, opt).objective_trace);
}

TEST(Ilrma, Errors) {
  tsx::TimeSignal mono(1, 4096, 16000.0);
  mono.channels[0][10] = 1.0;
  EXPECT_THROW(tsx::run_ilrma(tsx::analyze(mono)), tsx::Error);
  const auto x = tsx::analyze(tsx_test::instantaneous_mix(2, 1.0).mixture);
  tsx::IlrmaOptions opt;
  opt.bases = 0;
  EXPECT_THROW(tsx::run_ilrma(x, opt), tsx::Error);
  opt.bases = 2;
  opt.initial_demixing = tsx::DemixingSet::identity(3, 2);
  EXPECT_THROW(tsx::run_ilrma(x, opt), tsx::Error);
}
