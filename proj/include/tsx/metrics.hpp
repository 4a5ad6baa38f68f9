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
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tsx/common.hpp"

namespace tsx {

/// Upper bound reported for a perfect reconstruction.
inline constexpr double kSdrCap = 100.0;

/// Scale-invariant SDR in dB: 10 log10(|a s|^2 / |a s - e|^2), a = <e,s>/|s|^2.
inline double si_sdr(const std::vector<double>& estimate, const std::vector<double>& reference) {
  require(estimate.size() == reference.size(), "si_sdr: length mismatch (", estimate.size(), " vs ",
          reference.size(), ")");
  double ref_energy = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ref_energy += reference[i] * reference[i];
    dot += estimate[i] * reference[i];
  }
  require(ref_energy > 0.0, "si_sdr: zero reference");
  const double alpha = dot / ref_energy;
  double target = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference[i];
    target += s * s;
    noise += (s - estimate[i]) * (s - estimate[i]);
  }
  if (target <= 0.0) return -kSdrCap;
  if (noise <= target * 1e-10) return kSdrCap;
  return std::clamp(10.0 * std::log10(target / noise), -kSdrCap, kSdrCap);
}

struct PermutationResult {
  /// permutation[i] is the estimate index assigned to reference i.
  std::vector<std::size_t> permutation;
  std::vector<double> sdr;  // per reference, under the chosen permutation
  double mean_sdr = 0.0;
};

/// Exhaustive search over all assignments maximizing mean SI-SDR.
inline PermutationResult oracle_permutation(const std::vector<std::vector<double>>& estimates,
                                            const std::vector<std::vector<double>>& references) {
  require(estimates.size() == references.size(), "oracle_permutation: ", estimates.size(), " estimates vs ",
          references.size(), " references");
  const std::size_t n = references.size();
  require(n >= 1 && n <= 4, "oracle_permutation supports 1..4 sources, got ", n);
  std::vector<std::vector<double>> table(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) table[i][j] = si_sdr(estimates[j], references[i]);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  PermutationResult best;
  best.mean_sdr = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += table[i][perm[i]];
    const double mean = total / static_cast<double>(n);
    if (mean > best.mean_sdr) {
      best.mean_sdr = mean;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  for (std::size_t i = 0; i < n; ++i) best.sdr.push_back(table[i][best.permutation[i]]);
  return best;
}

inline double sdr_improvement(const std::vector<double>& extracted, const std::vector<double>& target_reference,
                              const std::vector<double>& mixture_at_reference) {
  require(extracted.size() == mixture_at_reference.size(), "sdr_improvement: length mismatch");
  return si_sdr(extracted, target_reference) - si_sdr(mixture_at_reference, target_reference);
}

/// One extraction trial, matching the trial CSV columns.
struct EvalResult {
  std::string trial;
  double rt60 = 0.0;
  double sir_init = 0.0;
  std::string algorithm;
  double oracle_sdr = 0.0;  // SI-SDR of the target under oracle permutation
  double sdri = 0.0;        // SI-SDR improvement of the selected output
  std::optional<std::size_t> selected_index;
  std::optional<bool> correct;
  std::vector<double> per_source_sdr;
  std::vector<std::size_t> permutation;
};

inline constexpr const char* kTrialCsvHeader = "trial,rt60,sir_init,algorithm,oracle_sdr,sdri,selected,correct";

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

inline std::string to_csv_row(const EvalResult& r) {
  std::ostringstream os;
  os << r.trial << ',' << format_number(r.rt60) << ',' << format_number(r.sir_init) << ',' << r.algorithm << ','
     << format_number(r.oracle_sdr) << ',' << format_number(r.sdri) << ','
     << (r.selected_index ? std::to_string(*r.selected_index) : std::string()) << ','
     << (r.correct ? (*r.correct ? "1" : "0") : "");
  return os.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

/// Parses trial rows written by `to_csv_row`; the header is required.
inline std::vector<EvalResult> parse_trial_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), "trial CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == kTrialCsvHeader, "unexpected trial CSV header: ", line);
  std::vector<EvalResult> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == 8, "trial CSV line ", lineno, " has ", cells.size(), " columns");
    EvalResult r;
    r.trial = cells[0];
    r.rt60 = std::stod(cells[1]);
    r.sir_init = std::stod(cells[2]);
    r.algorithm = cells[3];
    r.oracle_sdr = std::stod(cells[4]);
    r.sdri = std::stod(cells[5]);
    if (!cells[6].empty()) r.selected_index = std::stoul(cells[6]);
    if (!cells[7].empty()) r.correct = cells[7] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

struct HistogramBin {
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
  std::size_t correct = 0;
};

struct AccuracyReport {
  double rate = 0.0;
  std::size_t total = 0;
  std::size_t correct = 0;
  std::vector<HistogramBin> by_oracle_sdr;  // 1 dB bins
  std::vector<HistogramBin> by_sdri;        // 1 dB bins

  std::string to_csv() const {
    std::ostringstream os;
    os << "kind,bin_low,bin_high,count,correct,accuracy\n";
    auto emit = [&](const char* kind, const std::vector<HistogramBin>& bins) {
      for (const auto& b : bins)
        os << kind << ',' << format_number(b.low) << ',' << format_number(b.high) << ',' << b.count << ','
           << b.correct << ',' << format_number(b.count ? double(b.correct) / double(b.count) : 0.0) << '\n';
    };
    emit("oracle_sdr", by_oracle_sdr);
    emit("sdri", by_sdri);
    return os.str();
  }
};

namespace metrics_detail {

inline std::vector<HistogramBin> histogram(const std::vector<EvalResult>& trials, double EvalResult::*field) {
  std::map<long, HistogramBin> bins;
  for (const auto& t : trials) {
    const long key = static_cast<long>(std::floor(t.*field));
    auto& b = bins[key];
    b.low = static_cast<double>(key);
    b.high = static_cast<double>(key + 1);
    ++b.count;
    if (t.correct.value_or(false)) ++b.correct;
  }
  std::vector<HistogramBin> out;
  for (auto& [k, b] : bins) out.push_back(b);
  return out;
}

}  // namespace metrics_detail

inline AccuracyReport accuracy(const std::vector<EvalResult>& trials) {
  require(!trials.empty(), "accuracy: no trials");
  AccuracyReport r;
  for (const auto& t : trials) {
    require(t.correct.has_value(), "accuracy: trial ", t.trial, " has no correctness flag");
    ++r.total;
    if (*t.correct) ++r.correct;
  }
  r.rate = static_cast<double>(r.correct) / static_cast<double>(r.total);
  r.by_oracle_sdr = metrics_detail::histogram(trials, &EvalResult::oracle_sdr);
  r.by_sdri = metrics_detail::histogram(trials, &EvalResult::sdri);
  return r;
}

/// One row of the per-condition summary table.
struct TableRow {
  double rt60 = 0.0;
  std::string algorithm;
  std::size_t trials = 0;
  double accuracy = 0.0;
  double mean_sdri = 0.0;
  double mean_oracle_sdr = 0.0;
};

inline constexpr const char* kTableCsvHeader = "rt60,algorithm,trials,accuracy,mean_sdri,mean_oracle_sdr";

/// Groups trials by (rt60, algorithm), ordered by rt60 then algorithm.
inline std::vector<TableRow> aggregate_table(const std::vector<EvalResult>& trials) {
  require(!trials.empty(), "aggregate_table: no trials");
  std::map<std::pair<double, std::string>, std::vector<const EvalResult*>> groups;
  for (const auto& t : trials) groups[{t.rt60, t.algorithm}].push_back(&t);
  std::vector<TableRow> rows;
  for (const auto& [key, members] : groups) {
    TableRow row;
    row.rt60 = key.first;
    row.algorithm = key.second;
    row.trials = members.size();
    std::size_t correct = 0;
    for (const auto* t : members) {
      correct += t->correct.value_or(false);
      row.mean_sdri += t->sdri;
      row.mean_oracle_sdr += t->oracle_sdr;
    }
    const double n = static_cast<double>(members.size());
    row.accuracy = static_cast<double>(correct) / n;
    row.mean_sdri /= n;
    row.mean_oracle_sdr /= n;
    rows.push_back(row);
  }
  return rows;
}

inline std::string table_to_csv(const std::vector<TableRow>& rows) {
  std::ostringstream os;
  os << kTableCsvHeader << '\n';
  for (const auto& r : rows)
    os << format_number(r.rt60) << ',' << r.algorithm << ',' << r.trials << ',' << format_number(r.accuracy) << ','
       << format_number(r.mean_sdri) << ',' << format_number(r.mean_oracle_sdr) << '\n';
  return os.str();
}

}  // namespace tsx
