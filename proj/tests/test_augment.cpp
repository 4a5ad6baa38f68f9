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
#include <set>

#include "tsx/augment.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tsx_test_augment_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const tsx::CleanPool& shared_pool() {
  static const tsx::CleanPool pool = tsx::write_synthetic_pool(scratch("pool"), 9, 3, 1.0, 11);
  return pool;
}

std::vector<double> read_mono(const fs::path& p) { return tsx::read_wav(p).channels[0]; }

tsx::AugAOptions small_aug_a() {
  tsx::AugAOptions o;
  o.rt60s = {0.2, 0.4};
  o.rooms_per_rt60 = 1;
  o.rirs_per_room = 2;
  o.min_duration_s = 1.0;
  o.max_duration_s = 1.5;
  o.ilrma_iterations = 10;
  return o;
}

}  // namespace

TEST(Augment, KindNamesRoundTrip) {
  for (auto k : {tsx::AugKind::kClean, tsx::AugKind::kBssSeparated, tsx::AugKind::kReverb, tsx::AugKind::kBabble})
    EXPECT_EQ(tsx::parse_aug_kind(tsx::to_string(k)), k);
  EXPECT_THROW(tsx::parse_aug_kind("noise"), tsx::Error);
}

TEST(Augment, PoolFromDirectory) {
  const auto& pool = shared_pool();
  const auto root = pool.utterances[0].path.parent_path().parent_path();
  const auto read = tsx::CleanPool::from_directory(root);
  ASSERT_EQ(read.utterances.size(), 27u);
  EXPECT_EQ(read.speakers().size(), 9u);
  EXPECT_EQ(read.utterances[0].id, "spk0/utt0");
  read.validate();
  EXPECT_THROW(tsx::CleanPool::from_directory(root / "missing"), tsx::Error);
  const auto empty = scratch("empty");
  EXPECT_THROW(tsx::CleanPool::from_directory(empty), tsx::Error);
}

TEST(Augment, FullScaleBookkeeping) {
  const auto o = tsx::AugAOptions::full_scale();
  EXPECT_EQ(o.scenario_count(), 4410u);
  EXPECT_EQ(o.rt60s.size(), 7u);
  EXPECT_DOUBLE_EQ(o.rt60s.front(), 0.1);
  EXPECT_DOUBLE_EQ(o.rt60s.back(), 0.7);
}

TEST(Augment, AugALabelsMatchRecomputedPermutation) {
  const auto& pool = shared_pool();
  const auto root = scratch("aug_a");
  const auto opt = small_aug_a();
  const auto m = tsx::build_aug_a(pool, opt, 5, root);
  ASSERT_TRUE(m.warnings.empty());
  ASSERT_EQ(m.count(tsx::AugKind::kBssSeparated), 2 * opt.scenario_count());
  EXPECT_EQ(m.count(tsx::AugKind::kClean), m.count(tsx::AugKind::kBssSeparated));
  m.validate(root);

  std::map<std::uint64_t, std::size_t> per_rt60_count;
  for (std::size_t k = 0; k < opt.scenario_count(); ++k) {
    const auto& e0 = m.entries[2 * k];
    const auto& e1 = m.entries[2 * k + 1];
    ASSERT_EQ(e0.kind, tsx::AugKind::kBssSeparated);
    EXPECT_NE(e0.speaker, e1.speaker);
    EXPECT_NE(e0.params["output_channel"], e1.params["output_channel"]);
    ++per_rt60_count[static_cast<std::uint64_t>(std::lround(e0.params["rt60"].get<double>() * 10))];
    const double sir = e0.params["sir_db"].get<double>();
    EXPECT_TRUE(sir == -5.0 || sir == 0.0 || sir == 5.0);

    // Rebuild the reference images from the recorded scene and utterances.
    const auto sc = tsx::scenario_from_json(e0.params["scenario"]);
    const auto len = static_cast<std::size_t>(std::lround(e0.params["duration_s"].get<double>() * 16000.0));
    std::vector<std::vector<double>> sources;
    for (const auto* e : {&e0, &e1}) {
      std::vector<double> track;
      for (const auto& id : e->params["source_utterances"]) {
        const auto x = read_mono(pool.utterances[0].path.parent_path().parent_path() / (id.get<std::string>() + ".wav"));
        track.insert(track.end(), x.begin(), x.end());
      }
      ASSERT_GE(track.size(), len);
      track.resize(len);
      sources.push_back(std::move(track));
    }
    const auto mixed = tsx::mix(sources, tsx::image_method_rir(sc), sir, 0);
    const std::vector<std::vector<double>> refs{mixed.images[0].channels[0], mixed.images[1].channels[0]};
    const std::vector<std::vector<double>> written{read_mono(root / e0.path), read_mono(root / e1.path)};
    const auto perm = tsx::oracle_permutation(written, refs);
    EXPECT_EQ(perm.permutation, (std::vector<std::size_t>{0, 1}));
    EXPECT_NEAR(perm.sdr[0], e0.params["si_sdr"].get<double>(), 1e-3);
    EXPECT_NEAR(perm.sdr[1], e1.params["si_sdr"].get<double>(), 1e-3);
  }
  EXPECT_EQ(per_rt60_count[2], 2u);
  EXPECT_EQ(per_rt60_count[4], 2u);

  for (const auto& e : m.entries) {
    if (e.kind != tsx::AugKind::kClean) continue;
    EXPECT_TRUE(fs::path(e.path).is_absolute());
    EXPECT_TRUE(fs::exists(e.path));
  }
}

TEST(Augment, AugAIsDeterministicAcrossJobCounts) {
  const auto& pool = shared_pool();
  auto opt = small_aug_a();
  opt.rt60s = {0.3};
  const auto dir_a = scratch("det_a"), dir_b = scratch("det_b");
  const auto a = tsx::build_aug_a(pool, opt, 8, dir_a);
  opt.jobs = 3;
  const auto b = tsx::build_aug_a(pool, opt, 8, dir_b);
  EXPECT_EQ(a.to_jsonl(), b.to_jsonl());
  for (const auto& e : a.entries)
    if (e.kind == tsx::AugKind::kBssSeparated) EXPECT_EQ(tsx::read_file(dir_a / e.path), tsx::read_file(dir_b / e.path));
}

TEST(Augment, AugBStrataSnrAndBabbleSpeakers) {
  const auto& pool = shared_pool();
  const auto root = scratch("aug_b");
  const auto rirs = tsx::simulate_rir_pool(3, 4);
  tsx::AugBOptions opt;
  opt.per_stratum = 6;
  const auto m = tsx::build_aug_b(pool, rirs, opt, 2, root);
  EXPECT_EQ(m.count(tsx::AugKind::kClean), 6u);
  EXPECT_EQ(m.count(tsx::AugKind::kReverb), 6u);
  EXPECT_EQ(m.count(tsx::AugKind::kBabble), 6u);
  m.validate(root);

  const fs::path pool_root = pool.utterances[0].path.parent_path().parent_path();
  for (const auto& e : m.entries) {
    if (e.kind != tsx::AugKind::kBabble) continue;
    const auto speakers = e.params["babble_speakers"].get<std::vector<std::string>>();
    EXPECT_GE(speakers.size(), 3u);
    EXPECT_LE(speakers.size(), 7u);
    EXPECT_EQ(std::set<std::string>(speakers.begin(), speakers.end()).size(), speakers.size());
    for (const auto& s : speakers) EXPECT_NE(s, e.speaker);

    const auto x = read_mono(pool_root / (e.params["source_utterance"].get<std::string>() + ".wav"));
    const auto y = read_mono(root / e.path);
    ASSERT_EQ(x.size(), y.size());
    std::vector<double> babble(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) babble[i] = y[i] - x[i];
    const double snr = 10.0 * std::log10(tsx::energy(x) / tsx::energy(babble));
    const double wanted = e.params["snr_db"].get<double>();
    EXPECT_GE(wanted, 13.0);
    EXPECT_LE(wanted, 20.0);
    EXPECT_NEAR(snr, wanted, 0.1);
  }
  for (const auto& e : m.entries) {
    if (e.kind != tsx::AugKind::kReverb) continue;
    EXPECT_LT(e.params["rir_index"].get<std::size_t>(), rirs.size());
    EXPECT_EQ(read_mono(root / e.path).size(),
              read_mono(pool_root / (e.params["source_utterance"].get<std::string>() + ".wav")).size());
  }

  const auto again = tsx::build_aug_b(pool, rirs, opt, 2, scratch("aug_b2"));
  EXPECT_EQ(again.to_jsonl(), m.to_jsonl());
}

TEST(Augment, Errors) {
  const auto root = scratch("errors");
  const auto few = tsx::write_synthetic_pool(root / "pool", 5, 1, 0.5, 3);
  EXPECT_THROW(tsx::build_aug_b(few, tsx::simulate_rir_pool(1, 1), {}, 1, root), tsx::Error);
  EXPECT_THROW(tsx::build_aug_b(shared_pool(), {}, {}, 1, root), tsx::Error);
  tsx::CleanPool one;
  one.utterances.push_back(few.utterances[0]);
  EXPECT_THROW(tsx::build_aug_a(one, small_aug_a(), 1, root), tsx::Error);
  auto bad = small_aug_a();
  bad.min_duration_s = 3.0;
  bad.max_duration_s = 2.0;
  EXPECT_THROW(tsx::build_aug_a(few, bad, 1, root), tsx::Error);
}

TEST(Augment, ManifestRoundTripAndValidation) {
  tsx::CorpusManifest m;
  tsx::ManifestEntry e;
  e.id = "x";
  e.speaker = "s";
  e.path = "missing.wav";
  e.kind = tsx::AugKind::kReverb;
  e.params = {{"rir_index", 2}};
  e.seed = 77;
  m.entries.push_back(e);
  const auto back = tsx::CorpusManifest::from_jsonl(m.to_jsonl());
  ASSERT_EQ(back.entries.size(), 1u);
  EXPECT_EQ(back.entries[0].to_json(), e.to_json());
  EXPECT_THROW(back.validate(fs::temp_directory_path()), tsx::Error);
  m.entries.push_back(e);
  EXPECT_THROW(m.validate(fs::temp_directory_path()), tsx::Error);
  EXPECT_THROW(tsx::CorpusManifest::from_jsonl("{\"id\": 1}\n"), tsx::Error);
}
