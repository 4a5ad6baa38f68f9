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

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsx/augment.hpp"
#include "tsx/ilrma.hpp"
#include "tsx/metrics.hpp"
#include "tsx/mvae.hpp"
#include "tsx/simulator.hpp"
#include "tsx/speaker_select.hpp"
#include "tsx/stft.hpp"
#include "tsx/synth.hpp"
#include "tsx/wav.hpp"

namespace tsx {

// ---------------------------------------------------------------------------
// Evaluation mixtures

/// One evaluation mixture as recorded in the simulation manifest. Paths are
/// relative to the manifest directory.
struct TrialSpec {
  std::string trial;
  double rt60 = 0.0;
  double sir_db = 0.0;
  double angle_target = 0.0;
  double angle_interferer = 0.0;
  std::string target_speaker;
  std::string interferer_speaker;
  std::string mixture;
  std::string target_reference;
  std::string interferer_reference;
  std::string enrollment;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"trial", trial},
            {"rt60", rt60},
            {"sir_db", sir_db},
            {"angles", {angle_target, angle_interferer}},
            {"target_speaker", target_speaker},
            {"interferer_speaker", interferer_speaker},
            {"mixture", mixture},
            {"references", {target_reference, interferer_reference}},
            {"enrollment", enrollment},
            {"seed", seed}};
  }

  static TrialSpec from_json(const nlohmann::json& j) {
    TrialSpec t;
    t.trial = j.at("trial").get<std::string>();
    t.rt60 = j.at("rt60").get<double>();
    t.sir_db = j.at("sir_db").get<double>();
    t.angle_target = j.at("angles").at(0).get<double>();
    t.angle_interferer = j.at("angles").at(1).get<double>();
    t.target_speaker = j.at("target_speaker").get<std::string>();
    t.interferer_speaker = j.at("interferer_speaker").get<std::string>();
    t.mixture = j.at("mixture").get<std::string>();
    t.target_reference = j.at("references").at(0).get<std::string>();
    t.interferer_reference = j.at("references").at(1).get<std::string>();
    t.enrollment = j.at("enrollment").get<std::string>();
    t.seed = j.value("seed", std::uint64_t{0});
    return t;
  }
};

inline std::string trials_to_jsonl(const std::vector<TrialSpec>& trials) {
  std::string out;
  for (const auto& t : trials) out += t.to_json().dump() + "\n";
  return out;
}

inline std::vector<TrialSpec> trials_from_jsonl(const std::string& text) {
  std::vector<TrialSpec> out;
  std::istringstream is(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(TrialSpec::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail("simulation manifest line ", n, ": ", e.what());
    }
  }
  return out;
}

inline constexpr const char* kSimulationManifest = "manifest.jsonl";

struct SimulateOptions {
  std::vector<double> rt60s{0.16, 0.36, 0.61};
  std::vector<double> sir_db{-5.0, 0.0, 5.0};
  std::size_t mixtures_per_rt60 = 2;
  double duration_s = 6.0;
  std::size_t speakers = 10;  // synthetic evaluation speakers
  double sample_rate = 16000.0;
  std::size_t jobs = 1;
};

/// Synthetic evaluation speakers use profile ids from here on, disjoint
/// from the ids used to fit the toy speaker backend.
inline constexpr std::uint64_t kEvaluationSpeakerBase = 100000;

/// Evaluation-geometry mixtures of two synthetic speakers, with target and
/// interferer images at mic 0 and a clean enrollment utterance of the
/// target. SIR values cycle through `sir_db` within each RT60.
inline std::vector<TrialSpec> simulate_trials(const SimulateOptions& opt, std::uint64_t seed,
                                              const std::filesystem::path& out) {
  require(!opt.rt60s.empty(), "rt60 list is empty");
  require(!opt.sir_db.empty(), "sir list is empty");
  require(opt.mixtures_per_rt60 >= 1, "mixtures_per_rt60 must be at least 1");
  require(opt.speakers >= 2, "need at least two speakers");
  require(opt.duration_s > 0.0, "duration_s must be positive");
  for (double rt : opt.rt60s) require(rt > 0.0 && rt <= 2.0, "rt60 value ", rt, " outside (0, 2] s");
  const auto pairs = evaluation_angle_pairs();
  const std::uint64_t base = derive_seed(seed, "simulate");
  const std::size_t n = opt.rt60s.size() * opt.mixtures_per_rt60;
  const auto len = static_cast<std::size_t>(std::lround(opt.duration_s * opt.sample_rate));

  std::vector<TrialSpec> trials(n);
  parallel_for(n, opt.jobs, [&](std::size_t k) {
    const std::size_t r = k / opt.mixtures_per_rt60;
    const std::size_t j = k % opt.mixtures_per_rt60;
    TrialSpec& t = trials[k];
    t.seed = derive_seed(base, k);
    CounterRng rng(t.seed);
    std::ostringstream name;
    name << "trial" << (k < 10 ? "00" : k < 100 ? "0" : "") << k;
    t.trial = name.str();
    t.rt60 = opt.rt60s[r];
    t.sir_db = opt.sir_db[j % opt.sir_db.size()];
    const auto& pair = pairs[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(pairs.size()) - 1))];
    t.angle_target = pair.first;
    t.angle_interferer = pair.second;
    const auto a = static_cast<std::uint64_t>(rng.uniform_int(0, static_cast<std::int64_t>(opt.speakers) - 1));
    auto b = static_cast<std::uint64_t>(rng.uniform_int(0, static_cast<std::int64_t>(opt.speakers) - 2));
    if (b >= a) ++b;
    const auto pa = speaker_profile(kEvaluationSpeakerBase + a, seed);
    const auto pb = speaker_profile(kEvaluationSpeakerBase + b, seed);
    t.target_speaker = "spk" + std::to_string(a);
    t.interferer_speaker = "spk" + std::to_string(b);

    std::vector<std::vector<double>> sources{
        synthesize_utterance(pa, opt.duration_s, derive_seed(t.seed, "target"), opt.sample_rate),
        synthesize_utterance(pb, opt.duration_s, derive_seed(t.seed, "interferer"), opt.sample_rate)};
    for (auto& s : sources) s.resize(len, 0.0);
    const auto enrollment = synthesize_utterance(pa, opt.duration_s, derive_seed(t.seed, "enrollment"), opt.sample_rate);
    const auto sc = evaluation_scenario(t.rt60, t.angle_target, t.angle_interferer, opt.sample_rate);
    const MixResult mixed = mix(sources, image_method_rir(sc), t.sir_db, 0);

    t.mixture = "mixtures/" + t.trial + ".wav";
    t.target_reference = "references/" + t.trial + "_target.wav";
    t.interferer_reference = "references/" + t.trial + "_interferer.wav";
    t.enrollment = "enrollment/" + t.trial + ".wav";
    write_wav(out / t.mixture, mixed.mixture);
    write_wav(out / t.target_reference, TimeSignal::mono(mixed.images[0].channels[0], opt.sample_rate));
    write_wav(out / t.interferer_reference, TimeSignal::mono(mixed.images[1].channels[0], opt.sample_rate));
    write_wav(out / t.enrollment, TimeSignal::mono(enrollment, opt.sample_rate));
  });
  write_file_atomic(out / kSimulationManifest, trials_to_jsonl(trials));
  return trials;
}

// ---------------------------------------------------------------------------
// Models

inline constexpr const char* kDecoderFile = "decoder.nnw";
inline constexpr const char* kEmbedderFile = "embedder.nnw";
inline constexpr const char* kBackendFile = "backend.nnw";

struct InitNetworkOptions {
  std::size_t latent_dim = 16;
  std::size_t class_dim = 4;
  std::size_t decoder_hidden = 64;
  std::size_t frequency_bins = 513;
  std::size_t backend_speakers = 40;
  std::size_t backend_utterances = 6;
  double backend_duration_s = 3.0;
  double sample_rate = 16000.0;
};

/// Writes untrained toy networks (small random weights) and a speaker
/// backend fitted on synthetic speakers, so every command runs without
/// externally trained weights.
inline void init_networks(const std::filesystem::path& dir, std::uint64_t seed, const InitNetworkOptions& opt = {}) {
  WeightContainer dec;
  dec.kind = kDecoderKind;
  dec.architecture = toy_decoder_architecture(opt.latent_dim, opt.class_dim, opt.frequency_bins, opt.decoder_hidden);
  nn::add_random_parameters(dec, nn::parse_layers(dec.architecture), derive_seed(seed, "decoder"), 0.1);
  write_container(dir / kDecoderFile, dec);

  WeightContainer emb;
  emb.kind = kEmbedderKind;
  emb.architecture = toy_xvector_architecture();
  nn::add_random_parameters(emb, nn::parse_layers(emb.architecture), derive_seed(seed, "embedder"), 1.0);
  write_container(dir / kEmbedderFile, emb);

  const Embedder embedder(emb);
  std::vector<Eigen::VectorXd> raw;
  std::vector<int> labels;
  for (std::size_t s = 0; s < opt.backend_speakers; ++s) {
    const auto profile = speaker_profile(s, seed);
    for (std::size_t u = 0; u < opt.backend_utterances; ++u) {
      const auto x = synthesize_utterance(profile, opt.backend_duration_s, derive_seed(seed, s * 1009 + u),
                                          opt.sample_rate);
      raw.push_back(extract_embedding(TimeSignal::mono(x, opt.sample_rate), embedder).values);
      labels.push_back(static_cast<int>(s));
    }
  }
  write_container(dir / kBackendFile, backend_to_container(SpeakerBackend::fit(raw, labels)));
}

/// Fits LDA + PLDA on the embeddings of the manifest entries. Speakers with
/// a single entry carry no within-speaker information and are left out.
inline SpeakerBackend fit_backend(const CorpusManifest& manifest, const std::filesystem::path& root,
                                  const Embedder& embedder, std::size_t lda_dim = 128, std::size_t em_iterations = 10,
                                  std::size_t jobs = 1) {
  std::map<std::string, std::size_t> per_speaker;
  for (const auto& e : manifest.entries) ++per_speaker[e.speaker];
  std::vector<const ManifestEntry*> used;
  std::map<std::string, int> ids;
  std::vector<int> labels;
  for (const auto& e : manifest.entries) {
    if (per_speaker[e.speaker] < 2) continue;
    used.push_back(&e);
    labels.push_back(ids.emplace(e.speaker, static_cast<int>(ids.size())).first->second);
  }
  require(ids.size() >= 2, "manifest has fewer than two speakers with at least two entries");
  std::vector<Eigen::VectorXd> raw(used.size());
  parallel_for(used.size(), jobs, [&](std::size_t i) {
    const std::filesystem::path p(used[i]->path);
    const TimeSignal s = read_wav(p.is_absolute() ? p : root / p);
    require(s.num_channels() == 1, "entry '", used[i]->id, "' is not mono");
    raw[i] = extract_embedding(s, embedder).values;
  });
  return SpeakerBackend::fit(raw, labels, lda_dim, em_iterations);
}

struct ModelSet {
  std::optional<Decoder> decoder;
  std::optional<Embedder> embedder;
  std::optional<SpeakerBackend> backend;
};

/// Loads the model files from `dir`; the decoder only when MVAE is needed.
inline ModelSet load_models(const std::filesystem::path& dir, bool need_decoder) {
  auto path = [&](const char* name) {
    const auto p = dir / name;
    require(std::filesystem::exists(p), "missing model file ", p.string());
    return p;
  };
  ModelSet m;
  m.embedder.emplace(read_container(path(kEmbedderFile)));
  m.backend = backend_from_container(read_container(path(kBackendFile)));
  if (need_decoder) m.decoder.emplace(read_container(path(kDecoderFile)));
  return m;
}

// ---------------------------------------------------------------------------
// Extraction

enum class Algorithm { kIlrma, kMvae };

inline std::string to_string(Algorithm a) { return a == Algorithm::kIlrma ? "ilrma" : "mvae"; }

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "ilrma") return Algorithm::kIlrma;
  if (s == "mvae") return Algorithm::kMvae;
  fail("algorithm must be 'ilrma' or 'mvae', got '", s, "'");
}

struct ExtractOptions {
  Algorithm algorithm = Algorithm::kIlrma;
  std::size_t iterations = 100;
  std::size_t bases = 2;
  std::size_t warm_start_iterations = 30;
  LatentOptions latent;
  std::uint64_t seed = 0;
};

struct ExtractionOutput {
  TimeSignal extracted;
  EvalResult result;
  Selection selection;
};

/// Separates the mixture, selects the candidate closest to the enrollment
/// and scores it against the references.
inline ExtractionOutput extract_trial(const TrialSpec& trial, const std::filesystem::path& root, const ModelSet& models,
                                      const ExtractOptions& opt) {
  const TimeSignal mixture = read_wav(root / trial.mixture);
  require(mixture.num_channels() >= 2, "mixture ", trial.mixture, " needs at least two channels");
  const std::size_t len = mixture.length();
  const SpectrogramTensor x = analyze(mixture);

  SpectrogramTensor separated;
  const std::uint64_t seed = derive_seed(opt.seed, trial.trial);
  if (opt.algorithm == Algorithm::kIlrma) {
    IlrmaOptions io;
    io.iterations = opt.iterations;
    io.bases = opt.bases;
    io.seed = seed;
    separated = run_ilrma(x, io).separated;
  } else {
    require(models.decoder.has_value(), "MVAE needs a decoder model");
    MvaeOptions mo;
    mo.iterations = opt.iterations;
    mo.warm_start_iterations = opt.warm_start_iterations;
    mo.bases = opt.bases;
    mo.seed = seed;
    mo.latent = opt.latent;
    separated = run_mvae(x, *models.decoder, mo).separated;
  }
  TimeSignal sep = synthesize(separated);
  for (auto& ch : sep.channels) ch.resize(len);

  const auto enroll = models.backend->prepare(extract_embedding(read_wav(root / trial.enrollment), *models.embedder));
  std::vector<Embedding> candidates;
  for (const auto& ch : sep.channels)
    candidates.push_back(models.backend->prepare(extract_embedding(TimeSignal::mono(ch, mixture.sample_rate), *models.embedder)));

  ExtractionOutput out;
  out.selection = select_target(candidates, enroll, models.backend->plda);
  const auto target = read_wav(root / trial.target_reference).channels.at(0);
  const auto interferer = read_wav(root / trial.interferer_reference).channels.at(0);
  require(target.size() == len && interferer.size() == len, "reference length differs from mixture");
  const PermutationResult perm = oracle_permutation(sep.channels, {target, interferer});

  EvalResult& r = out.result;
  r.trial = trial.trial;
  r.rt60 = trial.rt60;
  r.sir_init = trial.sir_db;
  r.algorithm = to_string(opt.algorithm);
  r.oracle_sdr = perm.sdr[0];
  r.sdri = sdr_improvement(sep.channels[out.selection.index], target, mixture.channels[0]);
  r.selected_index = out.selection.index;
  r.correct = out.selection.index == perm.permutation[0];
  r.per_source_sdr = perm.sdr;
  r.permutation = perm.permutation;
  out.extracted = TimeSignal::mono(sep.channels[out.selection.index], mixture.sample_rate);
  return out;
}

inline std::string trials_csv(const std::vector<EvalResult>& results) {
  std::string out = std::string(kTrialCsvHeader) + "\n";
  for (const auto& r : results) out += to_csv_row(r) + "\n";
  return out;
}

}  // namespace tsx
