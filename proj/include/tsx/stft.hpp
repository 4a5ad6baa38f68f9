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
#include "tsx/fft.hpp"
#include "tsx/signal.hpp"

namespace tsx {

/// Complex multichannel spectrogram. `bins[f]` is the M x T matrix holding
/// x_{ft} for every frame t at frequency f, which is the layout the
/// separation updates consume.
struct SpectrogramTensor {
  std::vector<Eigen::MatrixXcd> bins;
  std::size_t window_length = 0;
  std::size_t hop = 0;
  double sample_rate = 16000.0;
  std::size_t signal_length = 0;  // unpadded length of the analyzed signal

  std::size_t num_channels() const { return bins.empty() ? 0 : static_cast<std::size_t>(bins[0].rows()); }
  std::size_t num_bins() const { return bins.size(); }
  std::size_t num_frames() const { return bins.empty() ? 0 : static_cast<std::size_t>(bins[0].cols()); }

  Complex& at(std::size_t m, std::size_t f, std::size_t t) { return bins[f](m, t); }
  const Complex& at(std::size_t m, std::size_t f, std::size_t t) const { return bins[f](m, t); }

  /// Zero tensor with the same shape and metadata.
  SpectrogramTensor zeros_like(std::size_t channels) const {
    SpectrogramTensor out = *this;
    for (auto& b : out.bins) b = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(channels), b.cols());
    return out;
  }

  /// |x|^2 as an F x T real matrix for one channel.
  Eigen::MatrixXd power(std::size_t m) const {
    Eigen::MatrixXd p(num_bins(), num_frames());
    for (std::size_t f = 0; f < num_bins(); ++f) p.row(f) = bins[f].row(m).cwiseAbs2();
    return p;
  }
};

/// Front padding applied before the first frame so that every signal
/// sample is covered by the full set of overlapping frames.
inline std::size_t stft_edge_padding(std::size_t window_length, std::size_t hop) {
  return window_length - hop;
}

inline std::size_t stft_frame_count(std::size_t length, std::size_t window_length, std::size_t hop) {
  const std::size_t edge = stft_edge_padding(window_length, hop);
  const std::size_t padded = edge + length + edge;
  return (padded - window_length + hop - 1) / hop + 1;
}

/// Periodic square-root Hann window.
inline std::vector<double> sqrt_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n)));
  return w;
}

namespace stft_detail {

inline void check_framing(std::size_t window_length, std::size_t hop) {
  require(is_power_of_two(window_length), "window length must be a power of two, got ", window_length);
  require(hop > 0 && window_length % hop == 0, "hop ", hop, " does not divide window length ", window_length);
  require(hop <= window_length / 2, "hop must be at most half the window length");
}

}  // namespace stft_detail

/// One-sided STFT with a square-root Hann analysis window.
inline SpectrogramTensor analyze(const TimeSignal& signal, std::size_t window_length = 1024,
                                 std::size_t hop = 0) {
  if (hop == 0) hop = window_length / 4;
  require(!signal.empty(), "cannot analyze an empty signal");
  stft_detail::check_framing(window_length, hop);
  signal.validate();
  require(signal.length() >= window_length, "signal shorter than one window (", signal.length(), " < ",
          window_length, ")");

  const std::size_t len = signal.length();
  const std::size_t edge = stft_edge_padding(window_length, hop);
  const std::size_t frames = stft_frame_count(len, window_length, hop);
  const std::size_t bins = window_length / 2 + 1;
  const auto channels = static_cast<Eigen::Index>(signal.num_channels());

  SpectrogramTensor out;
  out.window_length = window_length;
  out.hop = hop;
  out.sample_rate = signal.sample_rate;
  out.signal_length = len;
  out.bins.assign(bins, Eigen::MatrixXcd::Zero(channels, static_cast<Eigen::Index>(frames)));

  const auto window = sqrt_hann(window_length);
  const Fft fft(window_length);
  std::vector<Complex> buf(window_length);
  for (Eigen::Index m = 0; m < channels; ++m) {
    const auto& x = signal.channels[static_cast<std::size_t>(m)];
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t n = 0; n < window_length; ++n) {
        const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t * hop + n) - static_cast<std::ptrdiff_t>(edge);
        const double v = (idx >= 0 && static_cast<std::size_t>(idx) < len) ? x[static_cast<std::size_t>(idx)] : 0.0;
        buf[n] = window[n] * v;
      }
      fft.forward(buf);
      for (std::size_t f = 0; f < bins; ++f) out.bins[f](m, static_cast<Eigen::Index>(t)) = buf[f];
    }
  }
  return out;
}

/// Weighted overlap-add inverse of `analyze`. Returns `signal_length`
/// samples per channel.
inline TimeSignal synthesize(const SpectrogramTensor& spec) {
  const std::size_t n = spec.window_length;
  const std::size_t hop = spec.hop;
  stft_detail::check_framing(n, hop);
  require(spec.num_bins() == n / 2 + 1, "spectrogram has ", spec.num_bins(), " bins but window ", n,
          " implies ", n / 2 + 1);
  const std::size_t frames = spec.num_frames();
  const std::size_t edge = stft_edge_padding(n, hop);
  require(frames == stft_frame_count(spec.signal_length, n, hop),
          "frame count inconsistent with recorded signal length");

  const auto window = sqrt_hann(n);
  // Sum over overlapping frames of analysis*synthesis window (periodic Hann).
  const double cola = static_cast<double>(n) / (2.0 * static_cast<double>(hop));
  const Fft fft(n);
  TimeSignal out(spec.num_channels(), spec.signal_length, spec.sample_rate);
  std::vector<double> acc((frames - 1) * hop + n);
  std::vector<Complex> buf(n);
  for (std::size_t m = 0; m < spec.num_channels(); ++m) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t f = 0; f <= n / 2; ++f) buf[f] = spec.at(m, f, t);
      for (std::size_t f = n / 2 + 1; f < n; ++f) buf[f] = std::conj(buf[n - f]);
      buf[0] = buf[0].real();
      buf[n / 2] = buf[n / 2].real();
      fft.inverse(buf);
      for (std::size_t i = 0; i < n; ++i) acc[t * hop + i] += window[i] * buf[i].real() / static_cast<double>(n);
    }
    for (std::size_t i = 0; i < spec.signal_length; ++i) out.channels[m][i] = acc[edge + i] / cola;
  }
  return out;
}

}  // namespace tsx
