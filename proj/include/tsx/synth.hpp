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


#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tsx/rng.hpp"
#include "tsx/signal.hpp"

namespace tsx {

/// Source-filter voice parameters for one synthetic speaker. Used as a
/// stand-in speech corpus for tests, demos and desk-scale experiments.
struct SpeakerProfile {
  std::uint64_t id = 0;
  double f0_mean = 120.0;    // Hz
  double f0_spread = 0.15;   // relative pitch excursion per syllable
  double formant_scale = 1;  // vocal-tract length factor applied to all formants
  double breathiness = 0.05;
  double tilt = 0.9;  // glottal one-pole low-pass coefficient
  double syllable_rate = 4.0;
};

inline SpeakerProfile speaker_profile(std::uint64_t speaker_id, std::uint64_t seed = 0) {
  CounterRng rng(derive_seed(derive_seed(seed, "speaker-profile"), speaker_id));
  SpeakerProfile p;
  p.id = speaker_id;
  p.f0_mean = rng.uniform(90.0, 240.0);
  p.f0_spread = rng.uniform(0.05, 0.2);
  p.formant_scale = rng.uniform(0.85, 1.2);
  p.breathiness = rng.uniform(0.02, 0.15);
  p.tilt = rng.uniform(0.85, 0.97);
  p.syllable_rate = rng.uniform(3.0, 5.5);
  return p;
}

namespace synth_detail {

struct Resonator {
  double a1 = 0, a2 = 0, gain = 0, y1 = 0, y2 = 0;

  void tune(double freq, double bandwidth, double fs) {
    const double r = std::exp(-kPi * bandwidth / fs);
    a1 = 2.0 * r * std::cos(2.0 * kPi * freq / fs);
    a2 = -r * r;
    gain = 1.0 - r;
  }
  double step(double x) {
    const double y = gain * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

inline constexpr std::array<std::array<double, 3>, 7> kVowels{{
    {730, 1090, 2440},
    {270, 2290, 3010},
    {300, 870, 2240},
    {530, 1840, 2480},
    {570, 840, 2410},
    {660, 1720, 2410},
    {490, 1350, 1690},
}};

}  // namespace synth_detail

/// Renders a speech-like utterance: voiced syllables (glottal pulse train
/// through four formant resonators) separated by pauses, RMS-normalized.
inline std::vector<double> synthesize_utterance(const SpeakerProfile& speaker, double duration_s,
                                                std::uint64_t seed, double fs = 16000.0) {
  using synth_detail::Resonator;
  const auto total = static_cast<std::size_t>(std::round(duration_s * fs));
  std::vector<double> out(total, 0.0);
  CounterRng rng(derive_seed(derive_seed(seed, "utterance"), speaker.id));

  std::array<Resonator, 4> formants;
  const std::array<double, 4> bandwidths{70.0, 100.0, 140.0, 180.0};
  double glottal = 0.0, phase = 0.0;
  std::size_t pos = static_cast<std::size_t>(rng.uniform(0.02, 0.1) * fs);
  const double mean_syllable = 1.0 / speaker.syllable_rate;

  while (pos < total) {
    const auto syl_len = static_cast<std::size_t>(rng.uniform(0.6, 1.4) * mean_syllable * 0.75 * fs);
    const auto& vowel = synth_detail::kVowels[static_cast<std::size_t>(rng.uniform_int(0, 6))];
    for (int k = 0; k < 3; ++k) {
      const double jitter = rng.uniform(0.93, 1.07);
      formants[k].tune(std::min(vowel[k] * speaker.formant_scale * jitter, 0.45 * fs), bandwidths[k], fs);
    }
    formants[3].tune(std::min(3300.0 * speaker.formant_scale, 0.45 * fs), bandwidths[3], fs);
    const double f_start = speaker.f0_mean * (1.0 + speaker.f0_spread * rng.uniform(-1.0, 1.0));
    const double f_end = speaker.f0_mean * (1.0 + speaker.f0_spread * rng.uniform(-1.0, 1.0));
    const double level = rng.uniform(0.5, 1.0);

    for (std::size_t i = 0; i < syl_len && pos + i < total; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(syl_len);
      const double f0 = f_start + (f_end - f_start) * u;
      phase += f0 / fs;
      double excitation = 0.0;
      if (phase >= 1.0) {
        phase -= 1.0;
        excitation = 1.0;
      }
      excitation += speaker.breathiness * rng.normal() * 0.3;
      glottal = speaker.tilt * glottal + excitation;
      double s = glottal;
      double voiced = 0.0;
      for (auto& r : formants) voiced += r.step(s);
      const double env = std::sin(kPi * u);
      out[pos + i] += level * env * voiced;
    }
    pos += syl_len;
    const double gap = rng.uniform() < 0.15 ? rng.uniform(0.2, 0.5) : rng.uniform(0.03, 0.15);
    pos += static_cast<std::size_t>(gap * fs);
  }

  double rms = std::sqrt(mean_power(out));
  if (rms > 0.0)
    for (double& v : out) v *= 0.05 / rms;
  CounterRng floor_rng(derive_seed(seed, "noise-floor"));
  for (double& v : out) v += 5e-5 * floor_rng.normal();
  return out;
}

}  // namespace tsx
