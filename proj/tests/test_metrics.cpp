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
#include <functional>

#include "tsx/metrics.hpp"
#include "tsx/rng.hpp"

namespace {

std::vector<double> noise(tsx::CounterRng& rng, std::size_t n) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

tsx::EvalResult trial(std::string id, double rt60, std::string alg, double oracle, double sdri, bool correct) {
  tsx::EvalResult r;
  r.trial = std::move(id);
  r.rt60 = rt60;
  r.algorithm = std::move(alg);
  r.oracle_sdr = oracle;
  r.sdri = sdri;
  r.selected_index = correct ? 0 : 1;
  r.correct = correct;
  return r;
}

}  // namespace

TEST(SiSdr, OrthogonalResidualGivesExactRatio) {
  // Reference e1, residual sqrt(0.1) e2: target 1, noise 0.1 -> 10 dB.
  EXPECT_NEAR(tsx::si_sdr({1.0, std::sqrt(0.1)}, {1.0, 0.0}), 10.0, 1e-12);
  EXPECT_NEAR(tsx::si_sdr({2.0, 2.0}, {1.0, 0.0}), 0.0, 1e-12);
}

TEST(SiSdr, ScaleInvariantAndCapped) {
  tsx::CounterRng rng(1);
  const auto ref = noise(rng, 1000);
  auto est = ref;
  const auto n = noise(rng, 1000);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += 0.3 * n[i];
  const double base = tsx::si_sdr(est, ref);
  auto scaled = est;
  for (auto& v : scaled) v *= -7.5;
  EXPECT_NEAR(tsx::si_sdr(scaled, ref), base, 1e-9);
  auto scaled_ref = ref;
  for (auto& v : scaled_ref) v *= 0.01;
  EXPECT_NEAR(tsx::si_sdr(est, scaled_ref), base, 1e-9);

  auto perfect = ref;
  for (auto& v : perfect) v *= 3.0;
  EXPECT_EQ(tsx::si_sdr(perfect, ref), tsx::kSdrCap);
  EXPECT_EQ(tsx::si_sdr(std::vector<double>(1000, 0.0), ref), -tsx::kSdrCap);
}

TEST(SiSdr, Errors) {
  EXPECT_THROW(tsx::si_sdr({1.0, 2.0}, {1.0}), tsx::Error);
  EXPECT_THROW(tsx::si_sdr({1.0, 2.0}, {0.0, 0.0}), tsx::Error);
}

TEST(SiSdr, ImprovementIsDifference) {
  tsx::CounterRng rng(2);
  const auto ref = noise(rng, 500), a = noise(rng, 500), b = noise(rng, 500);
  EXPECT_DOUBLE_EQ(tsx::sdr_improvement(a, ref, b), tsx::si_sdr(a, ref) - tsx::si_sdr(b, ref));
}

TEST(OraclePermutation, MatchesIndependentSearch) {
  tsx::CounterRng rng(3);
  for (std::size_t m : {2u, 3u, 4u}) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<std::vector<double>> refs, ests;
      for (std::size_t i = 0; i < m; ++i) refs.push_back(noise(rng, 200));
      for (std::size_t i = 0; i < m; ++i) {
        auto e = noise(rng, 200);
        for (std::size_t j = 0; j < m; ++j) {
          const double w = rng.uniform(0.0, 2.0);
          for (std::size_t k = 0; k < e.size(); ++k) e[k] += w * refs[j][k];
        }
        ests.push_back(std::move(e));
      }
      // Recursive enumeration, independent of std::next_permutation.
      double best = -1e300;
      std::vector<std::size_t> best_perm, cur;
      std::vector<bool> used(m, false);
      std::function<void()> rec = [&] {
        if (cur.size() == m) {
          double s = 0.0;
          for (std::size_t i = 0; i < m; ++i) s += tsx::si_sdr(ests[cur[i]], refs[i]);
          if (s / double(m) > best) best = s / double(m), best_perm = cur;
          return;
        }
        for (std::size_t j = 0; j < m; ++j) {
          if (used[j]) continue;
          used[j] = true;
          cur.push_back(j);
          rec();
          cur.pop_back();
          used[j] = false;
        }
      };
      rec();
      const auto r = tsx::oracle_permutation(ests, refs);
      EXPECT_EQ(r.permutation, best_perm);
      EXPECT_NEAR(r.mean_sdr, best, 1e-12);
    }
  }
  EXPECT_THROW(tsx::oracle_permutation({{1.0}}, {{1.0}, {2.0}}), tsx::Error);
}

TEST(TrialCsv, RoundTrip) {
  std::vector<tsx::EvalResult> rows{trial("t0", 0.16, "ilrma", 12.5, 8.25, true),
                                    trial("t1", 0.36, "mvae", -1.0, 0.0, false)};
  rows[1].sir_init = -5.0;
  tsx::EvalResult blank;
  blank.trial = "t2";
  blank.algorithm = "ilrma";
  rows.push_back(blank);
  std::string text = std::string(tsx::kTrialCsvHeader) + "\n";
  for (const auto& r : rows) text += tsx::to_csv_row(r) + "\n";
  const auto back = tsx::parse_trial_csv(text);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].trial, rows[i].trial);
    EXPECT_DOUBLE_EQ(back[i].rt60, rows[i].rt60);
    EXPECT_DOUBLE_EQ(back[i].sir_init, rows[i].sir_init);
    EXPECT_DOUBLE_EQ(back[i].sdri, rows[i].sdri);
    EXPECT_EQ(back[i].selected_index, rows[i].selected_index);
    EXPECT_EQ(back[i].correct, rows[i].correct);
  }
  EXPECT_THROW(tsx::parse_trial_csv(""), tsx::Error);
  EXPECT_THROW(tsx::parse_trial_csv("a,b\n"), tsx::Error);
  EXPECT_THROW(tsx::parse_trial_csv(text + "x,1\n"), tsx::Error);
}

TEST(Accuracy, CountsAndHistograms) {
  const std::vector<tsx::EvalResult> rows{trial("a", 0.16, "ilrma", 0.5, 3.2, true),
                                          trial("b", 0.16, "ilrma", 0.9, 3.9, false),
                                          trial("c", 0.16, "ilrma", -0.5, 5.0, true),
                                          trial("d", 0.16, "ilrma", 7.0, 5.5, true)};
  const auto r = tsx::accuracy(rows);
  EXPECT_EQ(r.total, 4u);
  EXPECT_EQ(r.correct, 3u);
  EXPECT_DOUBLE_EQ(r.rate, 0.75);
  ASSERT_EQ(r.by_oracle_sdr.size(), 3u);
  EXPECT_EQ(r.by_oracle_sdr[0].low, -1.0);
  EXPECT_EQ(r.by_oracle_sdr[1].count, 2u);
  EXPECT_EQ(r.by_oracle_sdr[1].correct, 1u);
  ASSERT_EQ(r.by_sdri.size(), 2u);
  EXPECT_EQ(r.by_sdri[1].count, 2u);
  EXPECT_THROW(tsx::accuracy({}), tsx::Error);
  auto unflagged = rows;
  unflagged[0].correct.reset();
  EXPECT_THROW(tsx::accuracy(unflagged), tsx::Error);
}

TEST(Table, GroupsAndAverages) {
  const std::vector<tsx::EvalResult> rows{trial("a", 0.36, "ilrma", 10.0, 4.0, true),
                                          trial("b", 0.16, "ilrma", 12.0, 6.0, true),
                                          trial("c", 0.16, "ilrma", 8.0, 2.0, false),
                                          trial("d", 0.16, "mvae", 9.0, 3.0, true)};
  const auto t = tsx::aggregate_table(rows);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0].algorithm, "ilrma");
  EXPECT_DOUBLE_EQ(t[0].rt60, 0.16);
  EXPECT_EQ(t[0].trials, 2u);
  EXPECT_DOUBLE_EQ(t[0].accuracy, 0.5);
  EXPECT_DOUBLE_EQ(t[0].mean_sdri, 4.0);
  EXPECT_DOUBLE_EQ(t[0].mean_oracle_sdr, 10.0);
  EXPECT_EQ(t[1].algorithm, "mvae");
  EXPECT_DOUBLE_EQ(t[2].rt60, 0.36);
  EXPECT_EQ(tsx::table_to_csv(t).substr(0, std::string(tsx::kTableCsvHeader).size()), tsx::kTableCsvHeader);
  EXPECT_THROW(tsx::aggregate_table({}), tsx::Error);
}
