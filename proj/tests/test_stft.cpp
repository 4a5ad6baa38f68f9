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

#include <chrono>
#include <cmath>
#include <vector>

#include "tsx/rng.hpp"
#include "tsx/stft.hpp"

namespace {

tsx::TimeSignal random_signal(std::size_t channels, std::size_t length, std::uint64_t seed) {
  tsx::TimeSignal s(channels, length, 16000.0);
  tsx::CounterRng rng(seed);
  for (auto& ch : s.channels)
    for (auto& v : ch) v = rng.normal();
  return s;
}

double relative_error(const tsx::TimeSignal& a, const tsx::TimeSignal& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t m = 0; m < a.num_channels(); ++m)
    for (std::size_t i = 0; i < a.length(); ++i) {
      num += (a.channels[m][i] - b.channels[m][i]) * (a.channels[m][i] - b.channels[m][i]);
      den += a.channels[m][i] * a.channels[m][i];
    }
  return std::sqrt(num / den);
}

}  // namespace

TEST(Stft, RoundTripFourSeconds) {
  const auto x = random_signal(1, 64000, 1);
  const auto start = std::chrono::steady_clock::now();
  const auto y = tsx::synthesize(tsx::analyze(x, 1024, 256));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ASSERT_EQ(y.length(), x.length());
  EXPECT_LT(relative_error(x, y), 1e-10);
  EXPECT_LT(seconds, 1.0);
}

TEST(Stft, ZeroSignalGivesZeroSpectrogram) {
  const tsx::TimeSignal x(1, 4096, 16000.0);
  const auto s = tsx::analyze(x);
  for (const auto& b : s.bins) EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Stft, ShapesAndDefaults) {
  const auto x = random_signal(2, 16000, 2);
  const auto s = tsx::analyze(x);
  EXPECT_EQ(s.num_channels(), 2u);
  EXPECT_EQ(s.num_bins(), 513u);
  EXPECT_EQ(s.hop, 256u);
  EXPECT_EQ(s.num_frames(), tsx::stft_frame_count(16000, 1024, 256));
  EXPECT_EQ(s.signal_length, 16000u);
}

TEST(Stft, FrameMatchesDirectDftOfWindowedSegment) {
  // Oracle: DFT of one windowed, edge-padded segment computed by direct sum.
  const auto x = random_signal(1, 3000, 3);
  const std::size_t n = 256, hop = 64, t = 7;
  const auto s = tsx::analyze(x, n, hop);
  const std::size_t edge = n - hop;
  for (std::size_t f : {0u, 1u, 17u, 128u}) {
    tsx::Complex acc{};
    for (std::size_t i = 0; i < n; ++i) {
      const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t * hop + i) - static_cast<std::ptrdiff_t>(edge);
      const double v = idx >= 0 && idx < 3000 ? x.channels[0][static_cast<std::size_t>(idx)] : 0.0;
      const double w = std::sqrt(0.5 - 0.5 * std::cos(2.0 * tsx::kPi * static_cast<double>(i) / static_cast<double>(n)));
      acc += w * v * std::polar(1.0, -2.0 * tsx::kPi * static_cast<double>(f * i) / static_cast<double>(n));
    }
    EXPECT_NEAR(std::abs(acc - s.at(0, f, t)), 0.0, 1e-9);
  }
}

TEST(Stft, ColaConstant) {
  // The squared window overlap-adds to n / (2 hop) at every interior sample.
  for (std::size_t hop : {256u, 512u}) {
    const std::size_t n = 1024;
    const auto w = tsx::sqrt_hann(n);
    for (std::size_t i = 0; i < hop; ++i) {
      double sum = 0.0;
      for (std::size_t k = i; k < n; k += hop) sum += w[k] * w[k];
      EXPECT_NEAR(sum, static_cast<double>(n) / (2.0 * static_cast<double>(hop)), 1e-12);
    }
  }
}

TEST(Stft, LinearityProperty) {
  const auto a = random_signal(1, 5000, 4);
  const auto b = random_signal(1, 5000, 5);
  tsx::TimeSignal c(1, 5000, 16000.0);
  for (std::size_t i = 0; i < 5000; ++i) c.channels[0][i] = 2.0 * a.channels[0][i] - 0.5 * b.channels[0][i];
  const auto sa = tsx::analyze(a), sb = tsx::analyze(b), sc = tsx::analyze(c);
  for (std::size_t f = 0; f < sa.num_bins(); f += 37)
    EXPECT_LT((sc.bins[f] - (2.0 * sa.bins[f] - 0.5 * sb.bins[f])).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Stft, RoundTripMultichannelAndOtherHops) {
  for (std::size_t hop : {128u, 256u, 512u}) {
    const auto x = random_signal(3, 7001, 6 + hop);
    EXPECT_LT(relative_error(x, tsx::synthesize(tsx::analyze(x, 1024, hop))), 1e-10) << "hop " << hop;
  }
}

TEST(Stft, Errors) {
  EXPECT_THROW(tsx::analyze(tsx::TimeSignal{}), tsx::Error);
  const auto x = random_signal(1, 4096, 7);
  EXPECT_THROW(tsx::analyze(x, 1000, 250), tsx::Error);
  EXPECT_THROW(tsx::analyze(x, 1024, 300), tsx::Error);
  EXPECT_THROW(tsx::analyze(x, 1024, 1024), tsx::Error);
  EXPECT_THROW(tsx::analyze(random_signal(1, 100, 8), 1024, 256), tsx::Error);
  auto s = tsx::analyze(x);
  s.bins.pop_back();
  EXPECT_THROW(tsx::synthesize(s), tsx::Error);
}
