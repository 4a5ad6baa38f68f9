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

#include <cmath>
#include <cstddef>
#include <vector>

#include "tsx/common.hpp"

namespace tsx {

/// Multichannel real waveform. Channel-major storage.
struct TimeSignal {
  std::vector<std::vector<double>> channels;
  double sample_rate = 16000.0;

  TimeSignal() = default;
  TimeSignal(std::size_t num_channels, std::size_t length, double rate)
      : channels(num_channels, std::vector<double>(length, 0.0)), sample_rate(rate) {}

  static TimeSignal mono(std::vector<double> samples, double rate) {
    TimeSignal s;
    s.channels.push_back(std::move(samples));
    s.sample_rate = rate;
    return s;
  }

  std::size_t num_channels() const { return channels.size(); }
  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
  bool empty() const { return length() == 0; }

  const std::vector<double>& channel(std::size_t c) const { return channels.at(c); }
  std::vector<double>& channel(std::size_t c) { return channels.at(c); }

  void validate() const {
    require(sample_rate > 0.0, "sample rate must be positive");
    require(!channels.empty(), "signal has no channels");
    for (const auto& ch : channels) {
      require(ch.size() == channels.front().size(), "channels differ in length");
      for (double v : ch) require(std::isfinite(v), "signal contains non-finite samples");
    }
  }
};

inline double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

inline double mean_power(const std::vector<double>& x) {
  return x.empty() ? 0.0 : energy(x) / static_cast<double>(x.size());
}

}  // namespace tsx
