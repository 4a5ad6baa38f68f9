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
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsx/common.hpp"
#include "tsx/ilrma.hpp"
#include "tsx/metrics.hpp"
#include "tsx/rng.hpp"
#include "tsx/signal.hpp"
#include "tsx/simulator.hpp"
#include "tsx/stft.hpp"
#include "tsx/synth.hpp"
#include "tsx/wav.hpp"

namespace tsx {

enum class AugKind { kClean, kBssSeparated, kReverb, kBabble };

inline std::string to_string(AugKind k) {
  switch (k) {
    case AugKind::kClean: return "clean";
    case AugKind::kBssSeparated: return "bss-separated";
    case AugKind::kReverb: return "reverb";
    case AugKind::kBabble: return "babble";
  }
  return "";
}

inline AugKind parse_aug_kind(const std::string& s) {
  if (s == "clean") return AugKind::kClean;
  if (s == "bss-separated") return AugKind::kBssSeparated;
  if (s == "reverb") return AugKind::kReverb;
  if (s == "babble") return AugKind::kBabble;
  fail("unknown augmentation kind '", s, "'");
}

struct PoolUtterance {
  std::string id;
  std::string speaker;
  std::filesystem::path path;
};

/// Clean single-speaker utterances grouped by speaker.
struct CleanPool {
  std::vector<PoolUtterance> utterances;

  std::vector<std::string> speakers() const {
    std::set<std::string> s;
    for (const auto& u : utterances) s.insert(u.speaker);
    return {s.begin(), s.end()};
  }

  std::map<std::string, std::vector<std::size_t>> by_speaker() const {
    std::map<std::string, std::vector<std::size_t>> m;
    for (std::size_t i = 0; i < utterances.size(); ++i) m[utterances[i].speaker].push_back(i);
    return m;
  }

  void validate() const {
    std::set<std::string> ids;
    for (const auto& u : utterances) {
      require(ids.insert(u.id).second, "duplicate utterance id '", u.id, "' in pool");
      require(std::filesystem::exists(u.path), "pool utterance '", u.id, "' not found at ", u.path.string());
    }
  }

  /// Reads `root/<speaker>/<utterance>.wav`, sorted by path.
  static CleanPool from_directory(const std::filesystem::path& root) {
    require(std::filesystem::is_directory(root), "pool directory ", root.string(), " does not exist");
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root))
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    CleanPool pool;
    for (const auto& f : files) {
      const auto rel = std::filesystem::relative(f, root);
      require(std::distance(rel.begin(), rel.end()) == 2, "expected <speaker>/<utterance>.wav, got ", rel.string());
      const std::string speaker = rel.begin()->string();
      pool.utterances.push_back({speaker + "/" + f.stem().string(), speaker, f});
    }
    require(!pool.utterances.empty(), "no WAV files under ", root.string());
    return pool;
  }
};

inline std::vector<double> load_mono(const std::filesystem::path& path, double expected_rate) {
  TimeSignal s = read_wav(path);
  require(s.num_channels() == 1, path.string(), ": expected mono audio, got ", s.num_channels(), " channels");
  require(s.sample_rate == expected_rate, path.string(), ": sample rate ", s.sample_rate, ", expected ", expected_rate);
  return std::move(s.channels[0]);
}

struct ManifestEntry {
  std::string id;
  std::string speaker;
  std::string path;  // relative to the corpus root, or absolute
  AugKind kind = AugKind::kClean;
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"id", id}, {"speaker", speaker}, {"path", path}, {"kind", to_string(kind)}, {"params", params},
            {"seed", seed}};
  }
  static ManifestEntry from_json(const nlohmann::json& j) {
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.speaker = j.at("speaker").get<std::string>();
    e.path = j.at("path").get<std::string>();
    e.kind = parse_aug_kind(j.at("kind").get<std::string>());
    e.params = j.value("params", nlohmann::json::object());
    e.seed = j.value("seed", std::uint64_t{0});
    return e;
  }
};

/// Line-delimited JSON, one entry per line.
struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings;  // skipped scenarios; not serialized

  std::size_t count(AugKind k) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [k](const ManifestEntry& e) { return e.kind == k; }));
  }

  std::string to_jsonl() const {
    std::string out;
    for (const auto& e : entries) out += e.to_json().dump() + "\n";
    return out;
  }

  static CorpusManifest from_jsonl(const std::string& text) {
    CorpusManifest m;
    std::istringstream is(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        m.entries.push_back(ManifestEntry::from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        fail("manifest line ", n, ": ", e.what());
      }
    }
    return m;
  }

  /// Unique ids and every path resolvable against `root`.
  void validate(const std::filesystem::path& root) const {
    std::set<std::string> ids;
    for (const auto& e : entries) {
      require(ids.insert(e.id).second, "duplicate manifest id '", e.id, "'");
      const std::filesystem::path p(e.path);
      require(std::filesystem::exists(p.is_absolute() ? p : root / p), "manifest entry '", e.id, "' path ", e.path,
              " does not resolve");
    }
  }
};

namespace aug_detail {

/// Utterances of one speaker concatenated (cycling from `first`) and cut
/// to `length` samples. Returns the ids used.
inline std::vector<std::string> speaker_track(const CleanPool& pool, const std::vector<std::size_t>& utts,
                                              std::size_t first, std::size_t length, double fs,
                                              std::vector<double>& out) {
  out.clear();
  std::vector<std::string> used;
  for (std::size_t k = 0; out.size() < length; ++k) {
    require(k < 10000, "speaker track cannot reach ", length, " samples");
    const auto& u = pool.utterances[utts[(first + k) % utts.size()]];
    auto x = load_mono(u.path, fs);
    require(!x.empty(), "utterance '", u.id, "' is empty");
    out.insert(out.end(), x.begin(), x.end());
    used.push_back(u.id);
  }
  out.resize(length);
  return used;
}

inline std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == '/' || c == '\\') c = '_';
  return s;
}

inline std::string entry_path(AugKind kind, const std::string& speaker, const std::string& id) {
  return "corpus/" + to_string(kind) + "/" + sanitize(speaker) + "/" + sanitize(id) + ".wav";
}

/// Pool indices in a seeded order, cycled to `count`.
inline std::vector<std::size_t> clean_draw(std::size_t pool_size, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) order[i] = i;
  CounterRng rng(seed);
  for (std::size_t i = pool_size; i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = order[i % pool_size];
  return out;
}

inline void add_clean_entries(CorpusManifest& m, const CleanPool& pool, std::size_t count, std::uint64_t seed) {
  const auto picks = clean_draw(pool.utterances.size(), count, derive_seed(seed, "clean"));
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const auto& u = pool.utterances[picks[i]];
    ManifestEntry e;
    e.id = "clean-" + std::to_string(i);
    e.speaker = u.speaker;
    e.path = std::filesystem::absolute(u.path).lexically_normal().string();
    e.kind = AugKind::kClean;
    e.params = {{"source_utterance", u.id}};
    e.seed = seed;
    m.entries.push_back(std::move(e));
  }
}

}  // namespace aug_detail

struct AugAOptions {
  std::vector<double> rt60s{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  std::size_t rooms_per_rt60 = 1;
  std::size_t rirs_per_room = 1;
  double min_duration_s = 5.0;
  double max_duration_s = 30.0;
  std::vector<double> sir_db{-5.0, 0.0, 5.0};
  std::size_t ilrma_iterations = 100;
  std::size_t bases = 2;
  double sample_rate = 16000.0;
  std::size_t jobs = 1;

  /// 7 RT60 values x 21 rooms x 30 RIRs.
  static AugAOptions full_scale() {
    AugAOptions o;
    o.rooms_per_rt60 = 21;
    o.rirs_per_room = 30;
    return o;
  }
  std::size_t scenario_count() const { return rt60s.size() * rooms_per_rt60 * rirs_per_room; }
};

/// Per scenario: sample a two-source scene, mix two speakers at a drawn SIR,
/// separate with ILRMA and store both outputs labeled by oracle permutation.
/// Clean entries are then added in equal number. Audio goes under
/// `root/corpus/<kind>/<speaker>/`.
inline CorpusManifest build_aug_a(const CleanPool& pool, const AugAOptions& opt, std::uint64_t seed,
                                  const std::filesystem::path& root) {
  const auto groups = pool.by_speaker();
  require(groups.size() >= 2, "Aug.a needs at least 2 speakers in the pool, got ", groups.size());
  require(opt.min_duration_s > 0.0 && opt.max_duration_s >= opt.min_duration_s, "invalid Aug.a duration range");
  require(!opt.rt60s.empty() && !opt.sir_db.empty(), "Aug.a needs rt60 and SIR values");
  const std::vector<std::string> speakers = pool.speakers();
  const std::uint64_t base = derive_seed(seed, "aug-a");
  const std::size_t per_rt = opt.rooms_per_rt60 * opt.rirs_per_room;
  const std::size_t n = opt.scenario_count();

  std::vector<std::vector<ManifestEntry>> produced(n);
  std::vector<std::string> skipped(n);
  parallel_for(n, opt.jobs, [&](std::size_t k) {
    const std::size_t r = k / per_rt;
    const std::size_t room_index = (k % per_rt) / opt.rirs_per_room;
    const std::uint64_t sk = derive_seed(base, k);
    CounterRng rng(sk);
    ScenarioSamplerOptions so;
    so.sample_rate = opt.sample_rate;
    const RoomSpec room =
        sample_scenario(opt.rt60s[r], derive_seed(derive_seed(base, "room"), r * opt.rooms_per_rt60 + room_index), so)
            .room;
    const ScenarioSpec sc = sample_placement(room, sk, so);

    const auto len = static_cast<std::size_t>(std::lround(rng.uniform(opt.min_duration_s, opt.max_duration_s) *
                                                          opt.sample_rate));
    const auto s0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(speakers.size()) - 1));
    auto s1 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(speakers.size()) - 2));
    if (s1 >= s0) ++s1;
    const double sir = opt.sir_db[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(opt.sir_db.size()) - 1))];
    const std::array<std::string, 2> spk{speakers[s0], speakers[s1]};
    std::vector<std::vector<double>> sources(2);
    std::array<std::vector<std::string>, 2> used;
    for (int i = 0; i < 2; ++i) {
      const auto& utts = groups.at(spk[i]);
      const auto first = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(utts.size()) - 1));
      used[i] = aug_detail::speaker_track(pool, utts, first, len, opt.sample_rate, sources[i]);
    }

    const auto rir = image_method_rir(sc);
    const MixResult mixed = mix(sources, rir, sir, 0);
    std::vector<std::vector<double>> estimates;
    try {
      IlrmaOptions io;
      io.iterations = opt.ilrma_iterations;
      io.bases = opt.bases;
      io.seed = sk;
      const TimeSignal sep = synthesize(run_ilrma(analyze(mixed.mixture), io).separated);
      for (const auto& ch : sep.channels) estimates.emplace_back(ch.begin(), ch.begin() + static_cast<std::ptrdiff_t>(len));
    } catch (const Error& e) {
      skipped[k] = "scenario " + std::to_string(k) + " skipped: " + e.what();
      return;
    }
    const std::vector<std::vector<double>> refs{mixed.images[0].channels[0], mixed.images[1].channels[0]};
    const PermutationResult perm = oracle_permutation(estimates, refs);

    for (std::size_t i = 0; i < 2; ++i) {
      ManifestEntry e;
      e.id = "aug-a-" + std::to_string(k) + "-" + std::to_string(i);
      e.speaker = spk[i];
      e.kind = AugKind::kBssSeparated;
      e.path = aug_detail::entry_path(e.kind, e.speaker, e.id);
      e.seed = sk;
      e.params = {{"rt60", opt.rt60s[r]},
                  {"room", room_index},
                  {"sir_db", sir},
                  {"duration_s", static_cast<double>(len) / opt.sample_rate},
                  {"output_channel", perm.permutation[i]},
                  {"si_sdr", perm.sdr[i]},
                  {"source_utterances", used[i]},
                  {"scenario", to_json(sc)}};
      write_wav(root / e.path, TimeSignal::mono(estimates[perm.permutation[i]], opt.sample_rate));
      produced[k].push_back(std::move(e));
    }
  });

  CorpusManifest m;
  for (std::size_t k = 0; k < n; ++k) {
    for (auto& e : produced[k]) m.entries.push_back(std::move(e));
    if (!skipped[k].empty()) m.warnings.push_back(skipped[k]);
  }
  aug_detail::add_clean_entries(m, pool, m.count(AugKind::kBssSeparated), base);
  return m;
}

struct AugBOptions {
  std::size_t per_stratum = 10;
  std::size_t min_babble_speakers = 3;
  std::size_t max_babble_speakers = 7;
  double min_snr_db = 13.0;
  double max_snr_db = 20.0;
  double sample_rate = 16000.0;
  std::size_t jobs = 1;
};

/// Simulated single-channel RIRs with RT60 drawn from {0.1, ..., 0.7} s.
inline std::vector<std::vector<double>> simulate_rir_pool(std::size_t count, std::uint64_t seed,
                                                          double sample_rate = 16000.0) {
  std::vector<std::vector<double>> pool(count);
  const std::uint64_t base = derive_seed(seed, "rir-pool");
  ScenarioSamplerOptions so;
  so.sample_rate = sample_rate;
  for (std::size_t i = 0; i < count; ++i) {
    CounterRng rng(derive_seed(base, i));
    const double rt60 = 0.1 * static_cast<double>(rng.uniform_int(1, 7));
    pool[i] = image_method_rir(sample_scenario(rt60, derive_seed(base, i), so)).taps[0][0];
  }
  return pool;
}

/// Three strata of `per_stratum` entries each: clean, reverberated with a
/// pool RIR, and babble from 3-7 other speakers at a uniform SNR.
inline CorpusManifest build_aug_b(const CleanPool& pool, const std::vector<std::vector<double>>& rirs,
                                  const AugBOptions& opt, std::uint64_t seed, const std::filesystem::path& root) {
  const auto groups = pool.by_speaker();
  require(groups.size() >= 8, "Aug.b babble needs at least 8 speakers, got ", groups.size());
  require(!rirs.empty(), "Aug.b needs a nonempty RIR pool");
  require(opt.min_babble_speakers >= 1 && opt.min_babble_speakers <= opt.max_babble_speakers,
          "invalid babble speaker range");
  require(opt.max_babble_speakers + 1 <= groups.size(), "babble draws of ", opt.max_babble_speakers,
          " speakers need more distinct speakers than ", groups.size());
  const std::vector<std::string> speakers = pool.speakers();
  const std::uint64_t base = derive_seed(seed, "aug-b");
  const auto reverb_targets = aug_detail::clean_draw(pool.utterances.size(), opt.per_stratum, derive_seed(base, "reverb"));
  const auto babble_targets = aug_detail::clean_draw(pool.utterances.size(), opt.per_stratum, derive_seed(base, "babble"));

  std::vector<ManifestEntry> produced(2 * opt.per_stratum);
  parallel_for(2 * opt.per_stratum, opt.jobs, [&](std::size_t k) {
    const bool reverb = k < opt.per_stratum;
    const std::size_t idx = reverb ? k : k - opt.per_stratum;
    const std::uint64_t sk = derive_seed(derive_seed(base, reverb ? "reverb-entry" : "babble-entry"), idx);
    CounterRng rng(sk);
    const auto& target = pool.utterances[reverb ? reverb_targets[idx] : babble_targets[idx]];
    const auto x = load_mono(target.path, opt.sample_rate);
    require(energy(x) > 0.0, "utterance '", target.id, "' is silent");

    ManifestEntry e;
    e.speaker = target.speaker;
    e.seed = sk;
    std::vector<double> y;
    if (reverb) {
      const auto r = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(rirs.size()) - 1));
      y = fft_convolve(x, rirs[r]);
      y.resize(x.size());
      e.kind = AugKind::kReverb;
      e.id = "aug-b-reverb-" + std::to_string(idx);
      e.params = {{"source_utterance", target.id}, {"rir_index", r}};
    } else {
      const auto count = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(opt.min_babble_speakers),
                                                                   static_cast<std::int64_t>(opt.max_babble_speakers)));
      std::vector<std::string> others;
      for (const auto& s : speakers)
        if (s != target.speaker) others.push_back(s);
      for (std::size_t i = 0; i < count; ++i)
        std::swap(others[i], others[i + static_cast<std::size_t>(rng.uniform_int(
                                              0, static_cast<std::int64_t>(others.size() - i) - 1))]);
      others.resize(count);
      std::vector<double> babble(x.size(), 0.0), track;
      nlohmann::json used = nlohmann::json::array();
      for (const auto& s : others) {
        const auto& utts = groups.at(s);
        const auto first = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(utts.size()) - 1));
        used.push_back(aug_detail::speaker_track(pool, utts, first, x.size(), opt.sample_rate, track));
        for (std::size_t i = 0; i < x.size(); ++i) babble[i] += track[i];
      }
      require(energy(babble) > 0.0, "babble for '", target.id, "' is silent");
      const double snr = rng.uniform(opt.min_snr_db, opt.max_snr_db);
      const double gain = std::sqrt(energy(x) / (energy(babble) * std::pow(10.0, snr / 10.0)));
      y.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + gain * babble[i];
      e.kind = AugKind::kBabble;
      e.id = "aug-b-babble-" + std::to_string(idx);
      e.params = {{"source_utterance", target.id},
                  {"snr_db", snr},
                  {"babble_speakers", others},
                  {"babble_utterances", used},
                  {"babble_gain", gain}};
    }
    e.path = aug_detail::entry_path(e.kind, e.speaker, e.id);
    write_wav(root / e.path, TimeSignal::mono(y, opt.sample_rate));
    produced[k] = std::move(e);
  });

  CorpusManifest m;
  aug_detail::add_clean_entries(m, pool, opt.per_stratum, base);
  for (auto& e : produced) m.entries.push_back(std::move(e));
  return m;
}

/// Writes a synthetic clean pool (`root/<speaker>/<utt>.wav`) and returns it.
inline CleanPool write_synthetic_pool(const std::filesystem::path& root, std::size_t speakers,
                                      std::size_t utterances_per_speaker, double duration_s, std::uint64_t seed,
                                      double sample_rate = 16000.0) {
  CleanPool pool;
  for (std::size_t s = 0; s < speakers; ++s) {
    const SpeakerProfile profile = speaker_profile(s, seed);
    const std::string spk = "spk" + std::to_string(s);
    for (std::size_t u = 0; u < utterances_per_speaker; ++u) {
      const std::string name = "utt" + std::to_string(u);
      const auto path = root / spk / (name + ".wav");
      const auto x = synthesize_utterance(profile, duration_s, derive_seed(seed, s * 100003 + u), sample_rate);
      write_wav(path, TimeSignal::mono(x, sample_rate));
      pool.utterances.push_back({spk + "/" + name, spk, path});
    }
  }
  return pool;
}

}  // namespace tsx
