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


// Batch command-line front end: simulate, augment, extract, evaluate,
// plus backend fitting and toy network initialization.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsx/augment.hpp"
#include "tsx/metrics.hpp"
#include "tsx/pipeline.hpp"
#include "tsx/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Flags shared by the subcommands; unset flags fall back to the config.
struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::string> algorithm;
  std::optional<std::size_t> iterations;
  std::optional<std::string> rt60;
  std::optional<std::string> sir;
  std::optional<std::string> out;
  std::optional<std::string> weights;
  std::optional<std::string> input;
};

/// JSON config restricted to a fixed key set. Every accessor names the
/// offending field on error.
class Config {
 public:
  Config(const std::string& command, const std::string& path, std::set<std::string> keys)
      : command_(command), keys_(std::move(keys)) {
    if (path.empty()) return;
    try {
      values_ = json::parse(tsx::read_file(path));
    } catch (const json::parse_error& e) {
      tsx::fail("config ", path, ": ", e.what());
    }
    tsx::require(values_.is_object(), "config ", path, ": top level must be an object");
    for (const auto& [key, value] : values_.items())
      tsx::require(keys_.count(key) > 0, "config field '", key, "': unknown key for '", command_, "'");
  }

  void set(const std::string& key, json value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!values_.contains(key)) return fallback;
    try {
      return values_.at(key).get<T>();
    } catch (const json::exception&) {
      tsx::fail("config field '", key, "': expected ", type_name<T>(), ", got ", values_.at(key).dump());
    }
  }

  std::size_t count(const std::string& key, std::size_t fallback, std::size_t min = 0) const {
    if (has(key)) tsx::require(values_.at(key).is_number_integer() && values_.at(key).get<std::int64_t>() >= 0,
                              "config field '", key, "': expected a non-negative integer, got ", values_.at(key).dump());
    const auto v = get<std::size_t>(key, fallback);
    tsx::require(v >= min, "config field '", key, "': must be at least ", min, ", got ", v);
    return v;
  }

  double number(const std::string& key, double fallback) const {
    const double v = get<double>(key, fallback);
    tsx::require(std::isfinite(v), "config field '", key, "': must be finite");
    return v;
  }

  std::vector<double> list(const std::string& key, std::vector<double> fallback) const {
    const auto v = get<std::vector<double>>(key, std::move(fallback));
    tsx::require(!v.empty(), "config field '", key, "': list is empty");
    for (double x : v) tsx::require(std::isfinite(x), "config field '", key, "': non-finite value");
    return v;
  }

 private:
  template <class T>
  static const char* type_name() {
    if constexpr (std::is_same_v<T, std::string>) return "a string";
    else if constexpr (std::is_same_v<T, std::vector<double>>) return "a list of numbers";
    else if constexpr (std::is_same_v<T, std::vector<std::string>>) return "a list of strings";
    else if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else return "a number";
  }

  std::string command_;
  std::set<std::string> keys_;
  json values_ = json::object();
};

std::vector<double> parse_list(const std::string& field, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      tsx::require(used == item.size(), "");
    } catch (const std::exception&) {
      tsx::fail("field '", field, "': cannot parse '", item, "' as a number");
    }
  }
  tsx::require(!out.empty(), "field '", field, "': empty list");
  return out;
}

/// Loads the config and applies flag overrides.
Config load_config(const std::string& command, const Flags& f, std::set<std::string> keys) {
  Config c(command, f.config, keys);
  auto apply = [&](const char* key, const auto& flag) {
    if (flag && keys.count(key)) c.set(key, *flag);
  };
  apply("seed", f.seed);
  apply("jobs", f.jobs);
  apply("algorithm", f.algorithm);
  apply("iterations", f.iterations);
  apply("out", f.out);
  apply("weights", f.weights);
  apply("input", f.input);
  if (f.rt60 && keys.count("rt60")) c.set("rt60", parse_list("rt60", *f.rt60));
  if (f.sir && keys.count("sir")) c.set("sir", parse_list("sir", *f.sir));
  return c;
}

fs::path output_dir(const Config& c) {
  const fs::path out = c.get<std::string>("out", "");
  tsx::require(!out.empty(), "config field 'out': output directory is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  tsx::require(!ec && fs::is_directory(out), "config field 'out': cannot create ", out.string());
  const auto probe = out / ".tsx-write-probe";
  tsx::write_file_atomic(probe, "");
  fs::remove(probe);
  return out;
}

int cmd_simulate(const Flags& f) {
  const Config c = load_config("simulate", f,
                               {"seed", "jobs", "out", "rt60", "sir", "mixtures_per_rt60", "duration_s", "speakers"});
  tsx::SimulateOptions o;
  o.rt60s = c.list("rt60", o.rt60s);
  for (double rt : o.rt60s) tsx::require(rt > 0.0 && rt <= 2.0, "config field 'rt60': value ", rt, " outside (0, 2] s");
  o.sir_db = c.list("sir", o.sir_db);
  o.mixtures_per_rt60 = c.count("mixtures_per_rt60", o.mixtures_per_rt60, 1);
  o.duration_s = c.number("duration_s", o.duration_s);
  tsx::require(o.duration_s > 0.0, "config field 'duration_s': must be positive");
  o.speakers = c.count("speakers", o.speakers, 2);
  o.jobs = c.count("jobs", 1);
  const auto seed = c.get<std::uint64_t>("seed", 0);
  const fs::path out = output_dir(c);
  const auto trials = tsx::simulate_trials(o, seed, out);
  std::cout << "wrote " << trials.size() << " mixtures and " << (out / tsx::kSimulationManifest).string() << "\n";
  return 0;
}

int cmd_augment(const Flags& f) {
  const Config c = load_config(
      "augment", f,
      {"seed", "jobs", "out", "kind", "pool", "pool_speakers", "pool_utterances", "pool_duration_s", "rt60", "sir",
       "scale", "rooms_per_rt60", "rirs_per_room", "min_duration_s", "max_duration_s", "iterations", "per_stratum",
       "rir_pool_size"});
  const auto seed = c.get<std::uint64_t>("seed", 0);
  const std::string kind = c.get<std::string>("kind", "both");
  tsx::require(kind == "a" || kind == "b" || kind == "both", "config field 'kind': expected a, b or both, got '",
               kind, "'");
  const fs::path out = output_dir(c);

  tsx::CleanPool pool;
  if (c.has("pool")) {
    pool = tsx::CleanPool::from_directory(c.get<std::string>("pool", ""));
  } else {
    pool = tsx::write_synthetic_pool(out / "pool", c.count("pool_speakers", 10, 2), c.count("pool_utterances", 4, 1),
                                     c.number("pool_duration_s", 4.0), tsx::derive_seed(seed, "pool"));
  }
  pool.validate();

  // Full-scale counts: 21 rooms x 30 RIRs per RT60, one million entries per
  // Aug.b stratum; `scale` shrinks both.
  const double scale = c.number("scale", 1e-4);
  tsx::require(scale > 0.0 && scale <= 1.0, "config field 'scale': must lie in (0, 1]");
  const std::size_t jobs = c.count("jobs", 1);

  if (kind != "b") {
    tsx::AugAOptions a;
    a.rt60s = c.list("rt60", a.rt60s);
    for (double rt : a.rt60s)
      tsx::require(rt >= 0.1 && rt <= 0.7, "config field 'rt60': value ", rt, " outside [0.1, 0.7] s");
    a.sir_db = c.list("sir", a.sir_db);
    const auto per_rt = static_cast<std::size_t>(std::max(1.0, std::round(21.0 * 30.0 * scale)));
    a.rooms_per_rt60 = c.count("rooms_per_rt60", std::min<std::size_t>(21, per_rt), 1);
    a.rirs_per_room = c.count("rirs_per_room", (per_rt + a.rooms_per_rt60 - 1) / a.rooms_per_rt60, 1);
    a.min_duration_s = c.number("min_duration_s", a.min_duration_s);
    a.max_duration_s = c.number("max_duration_s", a.max_duration_s);
    tsx::require(a.min_duration_s > 0.0 && a.max_duration_s >= a.min_duration_s,
                 "config field 'min_duration_s'/'max_duration_s': invalid range");
    a.ilrma_iterations = c.count("iterations", a.ilrma_iterations);
    a.jobs = jobs;
    const auto m = tsx::build_aug_a(pool, a, seed, out);
    for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
    tsx::write_file_atomic(out / "manifest_aug_a.jsonl", m.to_jsonl());
    std::cout << "Aug.a: " << m.count(tsx::AugKind::kBssSeparated) << " separated, " << m.count(tsx::AugKind::kClean)
              << " clean\n";
  }
  if (kind != "a") {
    tsx::AugBOptions b;
    b.per_stratum = c.count("per_stratum", static_cast<std::size_t>(std::max(1.0, std::round(1e6 * scale))), 1);
    b.jobs = jobs;
    const auto rirs = tsx::simulate_rir_pool(c.count("rir_pool_size", 8, 1), seed);
    const auto m = tsx::build_aug_b(pool, rirs, b, seed, out);
    tsx::write_file_atomic(out / "manifest_aug_b.jsonl", m.to_jsonl());
    std::cout << "Aug.b: " << m.count(tsx::AugKind::kClean) << " clean, " << m.count(tsx::AugKind::kReverb)
              << " reverb, " << m.count(tsx::AugKind::kBabble) << " babble\n";
  }
  return 0;
}

int cmd_extract(const Flags& f) {
  const Config c = load_config("extract", f,
                               {"seed", "jobs", "out", "input", "algorithm", "iterations", "weights", "bases",
                                "warm_start_iterations", "latent_steps", "latent_step_size"});
  tsx::ExtractOptions o;
  o.algorithm = [&] {
    try {
      return tsx::parse_algorithm(c.get<std::string>("algorithm", "ilrma"));
    } catch (const tsx::Error& e) {
      tsx::fail("config field 'algorithm': ", e.what());
    }
  }();
  o.iterations = c.count("iterations", o.algorithm == tsx::Algorithm::kIlrma ? 100 : 50);
  o.bases = c.count("bases", o.bases, 1);
  o.warm_start_iterations = c.count("warm_start_iterations", o.warm_start_iterations);
  o.latent.steps = c.count("latent_steps", o.latent.steps);
  o.latent.step_size = c.number("latent_step_size", o.latent.step_size);
  tsx::require(o.latent.step_size > 0.0, "config field 'latent_step_size': must be positive");
  o.seed = c.get<std::uint64_t>("seed", 0);

  const fs::path input = c.get<std::string>("input", "");
  tsx::require(!input.empty(), "config field 'input': simulation directory is required");
  tsx::require(fs::exists(input / tsx::kSimulationManifest), "config field 'input': no ",
               tsx::kSimulationManifest, " in ", input.string());
  const fs::path weights = c.get<std::string>("weights", "");
  tsx::require(!weights.empty(), "config field 'weights': model directory is required");
  const auto models = tsx::load_models(weights, o.algorithm == tsx::Algorithm::kMvae);
  const auto trials = tsx::trials_from_jsonl(tsx::read_file(input / tsx::kSimulationManifest));
  tsx::require(!trials.empty(), "config field 'input': manifest lists no trials");
  const fs::path out = output_dir(c);

  std::vector<tsx::EvalResult> results(trials.size());
  tsx::parallel_for(trials.size(), c.count("jobs", 1), [&](std::size_t i) {
    auto r = tsx::extract_trial(trials[i], input, models, o);
    if (r.selection.tie) std::cerr << "warning: " << trials[i].trial << ": tied selection scores\n";
    tsx::write_wav(out / "extracted" / (trials[i].trial + ".wav"), r.extracted);
    results[i] = std::move(r.result);
  });
  tsx::write_file_atomic(out / "trials.csv", tsx::trials_csv(results));
  std::size_t correct = 0;
  for (const auto& r : results) correct += r.correct.value_or(false);
  std::cout << "extracted " << results.size() << " trials, " << correct << " correct selections\n";
  return 0;
}

int cmd_evaluate(const Flags& f) {
  Config c = load_config("evaluate", f, {"out", "input"});
  std::vector<std::string> inputs;
  if (c.has("input")) {
    try {
      inputs = c.get<std::vector<std::string>>("input", {});
    } catch (const tsx::Error&) {
      inputs = {c.get<std::string>("input", "")};
    }
  }
  tsx::require(!inputs.empty(), "config field 'input': at least one trial CSV or directory is required");
  std::vector<tsx::EvalResult> trials;
  for (const fs::path p : inputs) {
    const fs::path file = fs::is_directory(p) ? p / "trials.csv" : p;
    tsx::require(fs::exists(file), "config field 'input': ", file.string(), " does not exist");
    auto rows = tsx::parse_trial_csv(tsx::read_file(file));
    trials.insert(trials.end(), rows.begin(), rows.end());
  }
  tsx::require(!trials.empty(), "no trials found in the input CSVs");
  const fs::path out = output_dir(c);

  const auto table = tsx::aggregate_table(trials);
  tsx::write_file_atomic(out / "table.csv", tsx::table_to_csv(table));

  std::map<std::string, std::vector<tsx::EvalResult>> by_alg;
  for (const auto& t : trials) by_alg[t.algorithm].push_back(t);
  std::string hist = "algorithm,kind,bin_low,bin_high,count,correct,accuracy\n";
  for (const auto& [alg, rows] : by_alg) {
    std::istringstream is(tsx::accuracy(rows).to_csv());
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) hist += alg + "," + line + "\n";
  }
  tsx::write_file_atomic(out / "histogram.csv", hist);
  std::cout << tsx::table_to_csv(table);
  return 0;
}

int cmd_backend(const Flags& f) {
  const Config c = load_config("backend", f, {"seed", "jobs", "out", "input", "weights", "lda_dim", "em_iterations"});
  const fs::path input = c.get<std::string>("input", "");
  tsx::require(!input.empty() && fs::exists(input), "config field 'input': augmentation manifest not found");
  const fs::path weights = c.get<std::string>("weights", "");
  tsx::require(fs::exists(weights / tsx::kEmbedderFile), "config field 'weights': missing model file ",
               (weights / tsx::kEmbedderFile).string());
  const tsx::Embedder embedder(tsx::read_container(weights / tsx::kEmbedderFile));
  const auto manifest = tsx::CorpusManifest::from_jsonl(tsx::read_file(input));
  manifest.validate(input.parent_path());
  const fs::path out = output_dir(c);
  const auto backend = tsx::fit_backend(manifest, input.parent_path(), embedder, c.count("lda_dim", 128, 1),
                                        c.count("em_iterations", 10), c.count("jobs", 1));
  tsx::write_container(out / tsx::kBackendFile, tsx::backend_to_container(backend));
  std::cout << "wrote " << (out / tsx::kBackendFile).string() << " (LDA dim " << backend.lda.output_dim() << ")\n";
  return 0;
}

int cmd_init_network(const Flags& f) {
  const Config c = load_config("init-network", f, {"seed", "out", "latent_dim", "class_dim", "hidden"});
  tsx::InitNetworkOptions o;
  o.latent_dim = c.count("latent_dim", o.latent_dim, 1);
  o.class_dim = c.count("class_dim", o.class_dim, 1);
  o.decoder_hidden = c.count("hidden", o.decoder_hidden, 1);
  const fs::path out = output_dir(c);
  tsx::init_networks(out, c.get<std::uint64_t>("seed", 0), o);
  std::cout << "wrote toy models to " << out.string() << "\n";
  return 0;
}

void add_flags(CLI::App* sub, Flags& f, const std::set<std::string>& which) {
  sub->add_option("--config", f.config, "JSON config file; flags override its values");
  auto opt = [&](const char* name, auto& target, const char* help) {
    if (which.count(name)) sub->add_option(std::string("--") + name, target, help);
  };
  opt("seed", f.seed, "top-level random seed");
  opt("jobs", f.jobs, "worker threads");
  opt("algorithm", f.algorithm, "ilrma or mvae");
  opt("iterations", f.iterations, "separation iterations");
  opt("rt60", f.rt60, "comma-separated RT60 list in seconds");
  opt("sir", f.sir, "comma-separated SIR list in dB");
  opt("out", f.out, "output directory");
  opt("weights", f.weights, "model directory");
  opt("input", f.input, "input directory or file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Target speech extraction toolkit"};
  app.require_subcommand(1);
  Flags flags;
  struct Command {
    const char* name;
    const char* help;
    std::set<std::string> flags;
    int (*run)(const Flags&);
  };
  const std::vector<Command> commands{
      {"simulate", "write evaluation mixtures, references and a manifest",
       {"seed", "jobs", "rt60", "sir", "out"}, cmd_simulate},
      {"augment", "build Aug.a / Aug.b training corpora",
       {"seed", "jobs", "iterations", "rt60", "sir", "out"}, cmd_augment},
      {"extract", "separate, select the target and score each trial",
       {"seed", "jobs", "algorithm", "iterations", "out", "weights", "input"}, cmd_extract},
      {"evaluate", "aggregate trial CSVs into table and histogram CSVs", {"out", "input"}, cmd_evaluate},
      {"backend", "fit LDA/PLDA on an augmentation manifest", {"seed", "jobs", "out", "weights", "input"},
       cmd_backend},
      {"init-network", "write toy decoder, embedder and backend models", {"seed", "out"}, cmd_init_network},
  };
  std::map<CLI::App*, const Command*> subs;
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    add_flags(sub, flags, cmd.flags);
    subs[sub] = &cmd;
  }
  CLI11_PARSE(app, argc, argv);

  for (const auto& [sub, cmd] : subs) {
    if (!sub->parsed()) continue;
    try {
      return cmd->run(flags);
    } catch (const std::exception& e) {
      std::cerr << "tsx " << cmd->name << ": error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}
