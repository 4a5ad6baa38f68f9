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
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tsx/common.hpp"
#include "tsx/fft.hpp"
#include "tsx/rng.hpp"
#include "tsx/signal.hpp"

namespace tsx {

inline constexpr double kSpeedOfSound = 343.0;
inline constexpr int kFractionalDelayTaps = 81;

using Point3 = Eigen::Vector3d;

struct RoomSpec {
  double length = 6.0;
  double width = 6.0;
  double height = 2.4;
  double rt60 = 0.3;
  double sample_rate = 16000.0;

  double volume() const { return length * width * height; }
  double surface() const { return 2.0 * (length * width + length * height + width * height); }

  bool contains(const Point3& p, double margin = 0.0) const {
    return p.x() > margin && p.x() < length - margin && p.y() > margin && p.y() < width - margin &&
           p.z() > margin && p.z() < height - margin;
  }
};

struct ScenarioSpec {
  RoomSpec room;
  std::vector<Point3> mic_positions;
  std::vector<Point3> source_positions;
  std::uint64_t seed = 0;
};

/// taps[source][mic].
struct RoomImpulseResponse {
  std::vector<std::vector<std::vector<double>>> taps;
  double sample_rate = 16000.0;

  std::size_t num_sources() const { return taps.size(); }
  std::size_t num_mics() const { return taps.empty() ? 0 : taps[0].size(); }
};

/// Uniform wall reflection coefficient from Sabine's formula.
inline double sabine_reflection(const RoomSpec& room) {
  if (room.rt60 <= 0.0) return 0.0;
  const double alpha = 24.0 * std::log(10.0) * room.volume() / (kSpeedOfSound * room.surface() * room.rt60);
  return alpha >= 1.0 ? 0.0 : std::sqrt(1.0 - alpha);
}

/// Distance at which direct and reverberant energy are equal.
inline double critical_distance(const RoomSpec& room) {
  require(room.rt60 > 0.0, "critical distance needs rt60 > 0");
  return 0.057 * std::sqrt(room.volume() / room.rt60);
}

enum class ReflectionModel {
  /// beta = sqrt(1 - alpha) with alpha from Sabine's formula.
  kSabine,
  /// beta chosen so the Schroeder decay (-5..-25 dB fit) of the image set
  /// for source 0 / mic 0 matches rt60.
  kCalibrated,
};

struct RirOptions {
  /// Output length in samples; 0 selects max(ceil(rt60 * fs), last direct arrival + filter).
  std::size_t length = 0;
  /// Maximum total reflection order; negative means unbounded.
  int max_order = -1;
  ReflectionModel reflection = ReflectionModel::kCalibrated;
  /// Images weaker than this fraction of the direct-path amplitude are skipped.
  double amplitude_floor = 1e-6;
  /// Allen-Berkley 100 Hz high-pass, removing the DC build-up of the
  /// all-positive image sum.
  bool high_pass = true;
};

/// Least-squares decay time from a Schroeder curve: fits the -5..-25 dB
/// range of the backward-integrated energy and extrapolates to -60 dB.
/// `energy[i]` is the energy in time slot i of width `slot_seconds`.
inline double schroeder_t60(const std::vector<double>& energy, double slot_seconds) {
  std::vector<double> edc(energy.size());
  double acc = 0.0;
  for (std::size_t i = energy.size(); i-- > 0;) {
    acc += energy[i];
    edc[i] = acc;
  }
  if (edc.empty() || edc[0] <= 0.0) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < edc.size(); ++i) {
    if (edc[i] <= 0.0) break;
    const double db = 10.0 * std::log10(edc[i] / edc[0]);
    if (db > -5.0) continue;
    if (db < -25.0) break;
    const double t = static_cast<double>(i) * slot_seconds;
    sx += t;
    sy += db;
    sxx += t * t;
    sxy += t * db;
    ++n;
  }
  if (n < 2) return 0.0;
  const double slope = (static_cast<double>(n) * sxy - sx * sy) / (static_cast<double>(n) * sxx - sx * sx);
  return slope < 0.0 ? -60.0 / slope : std::numeric_limits<double>::infinity();
}

inline double schroeder_t60(const std::vector<double>& rir, double sample_rate, bool squared_input) {
  if (squared_input) return schroeder_t60(rir, 1.0 / sample_rate);
  std::vector<double> e(rir.size());
  for (std::size_t i = 0; i < rir.size(); ++i) e[i] = rir[i] * rir[i];
  return schroeder_t60(e, 1.0 / sample_rate);
}

namespace sim_detail {

inline void add_fractional_impulse(std::vector<double>& h, double delay, double amplitude) {
  const int half = kFractionalDelayTaps / 2;
  const double base = std::floor(delay);
  const double frac = delay - base;
  const auto start = static_cast<long>(base);
  for (int n = -half; n <= half; ++n) {
    const long idx = start + n;
    if (idx < 0 || idx >= static_cast<long>(h.size())) continue;
    const double t = static_cast<double>(n) - frac;
    if (std::abs(t) >= 0.5 * kFractionalDelayTaps) continue;
    const double window = 0.5 * (1.0 + std::cos(2.0 * kPi * t / kFractionalDelayTaps));
    const double sinc = t == 0.0 ? 1.0 : std::sin(kPi * t) / (kPi * t);
    h[static_cast<std::size_t>(idx)] += amplitude * window * sinc;
  }
}

/// Second-order 100 Hz high-pass of Allen and Berkley, in place.
inline void allen_berkley_high_pass(std::vector<double>& h, double fs) {
  const double w = 2.0 * kPi * 100.0 / fs;
  const double r1 = std::exp(-w);
  const double b1 = 2.0 * r1 * std::cos(w);
  const double b2 = -r1 * r1;
  const double a1 = -(1.0 + r1);
  double y0 = 0.0, y1 = 0.0, y2 = 0.0;
  for (double& x : h) {
    y2 = y1;
    y1 = y0;
    y0 = b1 * y1 + b2 * y2 + x;
    x = y0 + a1 * y1 + r1 * y2;
  }
}

/// Calls visit(distance, order) for every image within `max_dist`.
template <class Visit>
void for_each_image(const RoomSpec& room, const Point3& src, const Point3& mic, double max_dist, int max_order,
                    Visit&& visit) {
  const Eigen::Vector3d dims(room.length, room.width, room.height);
  Eigen::Vector3i reach;
  for (int k = 0; k < 3; ++k) reach[k] = static_cast<int>(std::ceil(max_dist / (2.0 * dims[k]))) + 1;
  const double max_d2 = max_dist * max_dist;
  for (int l = -reach[0]; l <= reach[0]; ++l) {
    for (int u = 0; u <= 1; ++u) {
      const double dx = (1 - 2 * u) * src.x() + 2.0 * l * dims[0] - mic.x();
      const int rx = std::abs(l - u) + std::abs(l);
      if (dx * dx > max_d2) continue;
      for (int m = -reach[1]; m <= reach[1]; ++m) {
        for (int v = 0; v <= 1; ++v) {
          const double dy = (1 - 2 * v) * src.y() + 2.0 * m * dims[1] - mic.y();
          const int ry = std::abs(m - v) + std::abs(m);
          if (dx * dx + dy * dy > max_d2) continue;
          for (int n = -reach[2]; n <= reach[2]; ++n) {
            for (int w = 0; w <= 1; ++w) {
              const double dz = (1 - 2 * w) * src.z() + 2.0 * n * dims[2] - mic.z();
              const int order = rx + ry + std::abs(n - w) + std::abs(n);
              if (max_order >= 0 && order > max_order) continue;
              const double d2 = dx * dx + dy * dy + dz * dz;
              if (d2 > max_d2) continue;
              visit(std::sqrt(d2), order);
            }
          }
        }
      }
    }
  }
}

inline std::vector<double> single_rir(const RoomSpec& room, const Point3& src, const Point3& mic, double beta,
                                      std::size_t length, int max_order, double amplitude_floor,
                                      bool high_pass) {
  std::vector<double> h(length, 0.0);
  const double fs = room.sample_rate;
  const double max_dist = static_cast<double>(length + kFractionalDelayTaps) * kSpeedOfSound / fs;
  const double min_amplitude = amplitude_floor / (4.0 * kPi * (src - mic).norm());
  const double log_beta = beta > 0.0 ? std::log(beta) : -std::numeric_limits<double>::infinity();
  for_each_image(room, src, mic, max_dist, max_order, [&](double dist, int order) {
    if (order > 0 && beta == 0.0) return;
    const double amplitude = (order == 0 ? 1.0 : std::exp(order * log_beta)) / (4.0 * kPi * dist);
    if (amplitude < min_amplitude) return;
    add_fractional_impulse(h, dist * fs / kSpeedOfSound, amplitude);
  });
  if (high_pass) allen_berkley_high_pass(h, fs);
  return h;
}

/// Energy of the image set binned by (reflection order, 1 ms slot), so the
/// decay for any beta is sum_n beta^(2n) * bins[n].
struct ImageEnergyHistogram {
  std::vector<std::vector<double>> by_order;
  double slot_seconds = 1e-3;

  std::vector<double> energy(double beta) const {
    const std::size_t slots = by_order.empty() ? 0 : by_order[0].size();
    std::vector<double> e(slots, 0.0);
    double gain = 1.0;
    for (const auto& row : by_order) {
      for (std::size_t i = 0; i < slots; ++i) e[i] += gain * row[i];
      gain *= beta * beta;
    }
    return e;
  }
};

inline ImageEnergyHistogram image_energy_histogram(const RoomSpec& room, const Point3& src, const Point3& mic,
                                                   double duration) {
  ImageEnergyHistogram hist;
  const auto slots = static_cast<std::size_t>(std::ceil(duration / hist.slot_seconds)) + 1;
  const double max_dist = duration * kSpeedOfSound;
  for_each_image(room, src, mic, max_dist, -1, [&](double dist, int order) {
    if (static_cast<std::size_t>(order) >= hist.by_order.size())
      hist.by_order.resize(static_cast<std::size_t>(order) + 1, std::vector<double>(slots, 0.0));
    const auto slot = static_cast<std::size_t>(dist / kSpeedOfSound / hist.slot_seconds);
    if (slot < slots) hist.by_order[static_cast<std::size_t>(order)][slot] += 1.0 / std::pow(4.0 * kPi * dist, 2);
  });
  return hist;
}

}  // namespace sim_detail

/// Uniform reflection coefficient whose image-set Schroeder decay between
/// `src` and `mic` matches room.rt60 (bisection on beta).
inline double calibrated_reflection(const RoomSpec& room, const Point3& src, const Point3& mic) {
  if (room.rt60 <= 0.0) return 0.0;
  const auto hist = sim_detail::image_energy_histogram(room, src, mic, 1.2 * room.rt60);
  auto decay = [&](double beta) { return schroeder_t60(hist.energy(beta), hist.slot_seconds); };
  double lo = 0.0, hi = 0.9999;
  if (decay(hi) < room.rt60) return hi;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (decay(mid) < room.rt60 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Shoebox image-source RIRs for every (source, mic) pair: uniform wall
/// reflection coefficient (see RirOptions) and windowed-sinc fractional delays.
inline RoomImpulseResponse image_method_rir(const ScenarioSpec& scenario, const RirOptions& opt = {}) {
  const RoomSpec& room = scenario.room;
  require(room.rt60 >= 0.0, "rt60 must be nonnegative");
  require(room.sample_rate > 0.0, "sample rate must be positive");
  require(!scenario.mic_positions.empty() && !scenario.source_positions.empty(),
          "scenario needs at least one source and one mic");
  double max_direct = 0.0;
  for (const auto& s : scenario.source_positions) {
    for (const auto& m : scenario.mic_positions) {
      const double d = (s - m).norm();
      require(d > 1e-6, "source coincides with a microphone");
      max_direct = std::max(max_direct, d);
    }
  }
  std::size_t length = opt.length;
  if (length == 0) {
    const auto direct = static_cast<std::size_t>(std::ceil(max_direct * room.sample_rate / kSpeedOfSound));
    length = std::max(static_cast<std::size_t>(std::ceil(room.rt60 * room.sample_rate)),
                      direct + kFractionalDelayTaps / 2 + 1);
  }
  const double beta = opt.reflection == ReflectionModel::kSabine
                          ? sabine_reflection(room)
                          : calibrated_reflection(room, scenario.source_positions[0], scenario.mic_positions[0]);
  RoomImpulseResponse out;
  out.sample_rate = room.sample_rate;
  for (const auto& s : scenario.source_positions) {
    std::vector<std::vector<double>> per_mic;
    for (const auto& m : scenario.mic_positions)
      per_mic.push_back(sim_detail::single_rir(room, s, m, beta, length, opt.max_order,
                                                  opt.amplitude_floor, opt.high_pass));
    out.taps.push_back(std::move(per_mic));
  }
  return out;
}

struct ScenarioSamplerOptions {
  double mic_spacing = 0.2;
  double array_height = 1.2;
  double source_height = 1.2;
  double min_doa_interval_deg = 20.0;
  double max_doa_interval_deg = 160.0;
  double sample_rate = 16000.0;
  int max_attempts = 10000;
};

namespace sim_detail {

/// One placement attempt of array and sources inside `room`.
inline std::optional<ScenarioSpec> try_placement(const RoomSpec& room, CounterRng& rng,
                                                 const ScenarioSamplerOptions& opt) {
  const double wall_gap = rng.uniform(1.0, 1.5);
  const double phi = rng.uniform(0.0, kPi);
  const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
  const double theta1 = rng.uniform(0.0, 180.0);
  const double interval = rng.uniform(opt.min_doa_interval_deg, opt.max_doa_interval_deg);
  const double theta2 = theta1 + (rng.uniform() < 0.5 ? interval : -interval);
  const double rc = critical_distance(room);
  const double d1 = rng.uniform(0.5, rc + 0.5);
  const double d2 = rng.uniform(0.5, rc + 0.5);
  if (room.length <= 2.0 * wall_gap || room.width <= 2.0 * wall_gap) return std::nullopt;
  if (theta2 < 0.0 || theta2 > 180.0) return std::nullopt;
  const double cx = rng.uniform(wall_gap, room.length - wall_gap);
  const double cy = rng.uniform(wall_gap, room.width - wall_gap);

  const Point3 center(cx, cy, opt.array_height);
  const Point3 axis(std::cos(phi), std::sin(phi), 0.0);
  const Point3 normal = side * Point3(-std::sin(phi), std::cos(phi), 0.0);
  ScenarioSpec sc;
  sc.room = room;
  sc.mic_positions = {center - 0.5 * opt.mic_spacing * axis, center + 0.5 * opt.mic_spacing * axis};
  for (auto [theta, dist] : {std::pair{theta1, d1}, std::pair{theta2, d2}}) {
    const double t = theta * kPi / 180.0;
    Point3 p = center + dist * (std::cos(t) * axis + std::sin(t) * normal);
    p.z() = opt.source_height;
    if (!room.contains(p, 0.01)) return std::nullopt;
    sc.source_positions.push_back(p);
  }
  for (const auto& m : sc.mic_positions)
    if (!room.contains(m, 0.01)) return std::nullopt;
  return sc;
}

}  // namespace sim_detail

/// Draws a two-source, two-mic training scene: room dims in [3,15]x[3,15]x[2,4] m,
/// array at least U[1,1.5] m from the walls, both sources on one side of the
/// array with DOA interval in [20, 160] deg and distance in [0.5, r_c + 0.5] m.
inline ScenarioSpec sample_scenario(double rt60, std::uint64_t seed, const ScenarioSamplerOptions& opt = {}) {
  require(rt60 >= 0.1 - 1e-12 && rt60 <= 0.7 + 1e-12, "rt60 must lie in [0.1, 0.7], got ", rt60);
  CounterRng rng(derive_seed(seed, "scenario"));
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    RoomSpec room;
    room.length = rng.uniform(3.0, 15.0);
    room.width = rng.uniform(3.0, 15.0);
    room.height = rng.uniform(2.0, 4.0);
    room.rt60 = rt60;
    room.sample_rate = opt.sample_rate;
    if (auto sc = sim_detail::try_placement(room, rng, opt)) {
      sc->seed = seed;
      return *sc;
    }
  }
  fail("sample_scenario: no valid scene after ", opt.max_attempts, " attempts (rt60 ", rt60, ")");
}

/// New array/source placement inside a fixed room, same distributions as
/// sample_scenario.
inline ScenarioSpec sample_placement(const RoomSpec& room, std::uint64_t seed, const ScenarioSamplerOptions& opt = {}) {
  CounterRng rng(derive_seed(seed, "placement"));
  for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
    if (auto sc = sim_detail::try_placement(room, rng, opt)) {
      sc->seed = seed;
      return *sc;
    }
  }
  fail("sample_placement: no valid placement after ", opt.max_attempts, " attempts");
}

/// Angle of a source relative to the array axis, in degrees on [0, 180].
inline double doa_degrees(const ScenarioSpec& sc, std::size_t source) {
  const Point3 center = 0.5 * (sc.mic_positions[0] + sc.mic_positions[1]);
  Point3 axis = sc.mic_positions[1] - sc.mic_positions[0];
  Point3 dir = sc.source_positions[source] - center;
  axis.z() = 0.0;
  dir.z() = 0.0;
  const double c = axis.normalized().dot(dir.normalized());
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / kPi;
}

/// Fixed evaluation geometry: 6 x 6 x 2.4 m room, two mics 8 cm apart, both
/// sources 1 m from the array center at the given angles (deg, 0 = broadside).
inline ScenarioSpec evaluation_scenario(double rt60, double angle1_deg, double angle2_deg,
                                        double sample_rate = 16000.0) {
  ScenarioSpec sc;
  sc.room = RoomSpec{6.0, 6.0, 2.4, rt60, sample_rate};
  const Point3 center(3.0, 2.0, 1.2);
  sc.mic_positions = {center - Point3(0.04, 0.0, 0.0), center + Point3(0.04, 0.0, 0.0)};
  for (double a : {angle1_deg, angle2_deg}) {
    const double t = a * kPi / 180.0;
    sc.source_positions.push_back(center + Point3(std::sin(t), std::cos(t), 0.0));
  }
  return sc;
}

/// Angle pairs on the 15 deg grid over [-90, 90] whose separation lies in [15, 120] deg.
inline std::vector<std::pair<double, double>> evaluation_angle_pairs() {
  std::vector<std::pair<double, double>> out;
  for (int a = -90; a <= 90; a += 15)
    for (int b = -90; b <= 90; b += 15)
      if (a != b && std::abs(a - b) >= 15 && std::abs(a - b) <= 120) out.emplace_back(a, b);
  return out;
}

struct MixResult {
  TimeSignal mixture;
  /// images[s] is source s as observed at every mic, after SIR scaling.
  std::vector<TimeSignal> images;
  double interferer_gain = 1.0;
};

/// Convolves each source with its RIRs, scales the interferers (sources 1..)
/// jointly so the target/interferer power ratio at `reference_channel`
/// equals `target_sir_db`, and sums. Output length equals the source length.
inline MixResult mix(const std::vector<std::vector<double>>& sources, const RoomImpulseResponse& rirs,
                     double target_sir_db, std::size_t reference_channel = 0) {
  require(sources.size() >= 2, "mix needs at least two sources");
  require(rirs.num_sources() == sources.size(), "RIR set covers ", rirs.num_sources(), " sources, got ",
          sources.size());
  const std::size_t mics = rirs.num_mics();
  require(reference_channel < mics, "reference channel out of range");
  const std::size_t len = sources[0].size();
  for (const auto& s : sources) require(s.size() == len && len > 0, "sources must be nonempty and equal length");

  MixResult out;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    TimeSignal img(mics, len, rirs.sample_rate);
    for (std::size_t m = 0; m < mics; ++m) {
      auto conv = fft_convolve(sources[s], rirs.taps[s][m]);
      std::copy_n(conv.begin(), len, img.channels[m].begin());
    }
    out.images.push_back(std::move(img));
  }

  const double target_power = energy(out.images[0].channels[reference_channel]);
  std::vector<double> interference(len, 0.0);
  for (std::size_t s = 1; s < sources.size(); ++s)
    for (std::size_t i = 0; i < len; ++i) interference[i] += out.images[s].channels[reference_channel][i];
  const double interferer_power = energy(interference);
  require(target_power > 0.0, "target source is silent; cannot set SIR");
  require(interferer_power > 0.0, "interfering sources are silent; cannot set SIR");

  out.interferer_gain = std::sqrt(target_power / (interferer_power * std::pow(10.0, target_sir_db / 10.0)));
  for (std::size_t s = 1; s < sources.size(); ++s)
    for (auto& ch : out.images[s].channels)
      for (double& v : ch) v *= out.interferer_gain;

  out.mixture = TimeSignal(mics, len, rirs.sample_rate);
  for (const auto& img : out.images)
    for (std::size_t m = 0; m < mics; ++m)
      for (std::size_t i = 0; i < len; ++i) out.mixture.channels[m][i] += img.channels[m][i];
  return out;
}

inline nlohmann::json to_json(const ScenarioSpec& sc) {
  auto points = [](const std::vector<Point3>& ps) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : ps) arr.push_back({p.x(), p.y(), p.z()});
    return arr;
  };
  return {{"room",
           {{"length", sc.room.length},
            {"width", sc.room.width},
            {"height", sc.room.height},
            {"rt60", sc.room.rt60},
            {"sample_rate", sc.room.sample_rate}}},
          {"mic_positions", points(sc.mic_positions)},
          {"source_positions", points(sc.source_positions)},
          {"seed", sc.seed}};
}

inline ScenarioSpec scenario_from_json(const nlohmann::json& j) {
  auto points = [](const nlohmann::json& arr) {
    std::vector<Point3> ps;
    for (const auto& p : arr) {
      require(p.is_array() && p.size() == 3, "scenario point must have three coordinates");
      ps.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
    }
    return ps;
  };
  ScenarioSpec sc;
  const auto& r = j.at("room");
  sc.room = RoomSpec{r.at("length").get<double>(), r.at("width").get<double>(), r.at("height").get<double>(),
                     r.at("rt60").get<double>(), r.at("sample_rate").get<double>()};
  sc.mic_positions = points(j.at("mic_positions"));
  sc.source_positions = points(j.at("source_positions"));
  sc.seed = j.value("seed", std::uint64_t{0});
  for (const auto& p : sc.mic_positions) require(sc.room.contains(p), "microphone outside the room");
  for (const auto& p : sc.source_positions) require(sc.room.contains(p), "source outside the room");
  return sc;
}

}  // namespace tsx
