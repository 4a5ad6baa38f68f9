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
#include <cstdint>
#include <optional>
#include <vector>

#include "tsx/bss_core.hpp"
#include "tsx/rng.hpp"
#include "tsx/stft.hpp"

namespace tsx {

inline constexpr double kNmfFloor = 1e-10;

/// Rank-K NMF variance model per source: v_{ft,m} = sum_k basis[m](f,k) * activation[m](k,t).
struct NmfModel {
  std::vector<Eigen::MatrixXd> basis;       // F x K per source
  std::vector<Eigen::MatrixXd> activation;  // K x T per source

  std::size_t num_sources() const { return basis.size(); }
  std::size_t num_bases() const { return basis.empty() ? 0 : static_cast<std::size_t>(basis[0].cols()); }

  /// Uniform [0.1, 1] draws keyed by seed, in source/basis/activation order.
  static NmfModel random(std::size_t sources, std::size_t bins, std::size_t frames, std::size_t bases,
                         std::uint64_t seed) {
    require(bases >= 1, "NMF needs at least one basis");
    CounterRng rng(derive_seed(seed, "ilrma-nmf-init"));
    NmfModel model;
    for (std::size_t m = 0; m < sources; ++m) {
      Eigen::MatrixXd b(bins, bases), a(bases, frames);
      for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(0.1, 1.0);
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(0.1, 1.0);
      model.basis.push_back(std::move(b));
      model.activation.push_back(std::move(a));
    }
    return model;
  }
};

inline Eigen::MatrixXd nmf_source_variance(const NmfModel& model, std::size_t m) {
  return (model.basis[m] * model.activation[m]).cwiseMax(kVarianceFloor);
}

inline VarianceField nmf_variance(const NmfModel& model) {
  VarianceField v;
  for (std::size_t m = 0; m < model.num_sources(); ++m) v.sources.push_back(nmf_source_variance(model, m));
  return v;
}

/// Itakura-Saito divergence sum(p/v - log(p/v) - 1); zero-power bins use the
/// limit form p/v - log(...) with p floored.
inline double is_divergence(const Eigen::MatrixXd& power, const Eigen::MatrixXd& model) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < power.size(); ++i) {
    const double r = std::max(power.data()[i], kVarianceFloor) / std::max(model.data()[i], kVarianceFloor);
    d += r - std::log(r) - 1.0;
  }
  return d;
}

/// Square-root multiplicative IS-NMF updates of basis then activation for
/// one source, given its power spectrogram |y|^2 (F x T).
inline void nmf_update_source(Eigen::MatrixXd& basis, Eigen::MatrixXd& activation, const Eigen::MatrixXd& power) {
  require(power.rows() == basis.rows() && power.cols() == activation.cols(), "power shape mismatch");
  Eigen::MatrixXd model = (basis * activation).cwiseMax(kVarianceFloor);
  Eigen::MatrixXd inv = model.cwiseInverse();
  Eigen::MatrixXd weighted = power.cwiseProduct(inv.cwiseAbs2());
  {
    const Eigen::MatrixXd num = weighted * activation.transpose();
    const Eigen::MatrixXd den = inv * activation.transpose();
    basis = basis.cwiseProduct(num.cwiseQuotient(den).cwiseSqrt()).cwiseMax(kNmfFloor);
  }
  model = (basis * activation).cwiseMax(kVarianceFloor);
  inv = model.cwiseInverse();
  weighted = power.cwiseProduct(inv.cwiseAbs2());
  {
    const Eigen::MatrixXd num = basis.transpose() * weighted;
    const Eigen::MatrixXd den = basis.transpose() * inv;
    activation = activation.cwiseProduct(num.cwiseQuotient(den).cwiseSqrt()).cwiseMax(kNmfFloor);
  }
}

/// Updates every source model against the corresponding power spectrogram.
inline NmfModel nmf_update(NmfModel model, const std::vector<Eigen::MatrixXd>& power) {
  require(power.size() == model.num_sources(), "power/source count mismatch");
  for (std::size_t m = 0; m < model.num_sources(); ++m) {
    require((power[m].array() >= 0.0).all(), "power spectrogram must be nonnegative");
    nmf_update_source(model.basis[m], model.activation[m], power[m]);
  }
  return model;
}

struct IlrmaOptions {
  std::size_t iterations = 100;
  std::size_t bases = 2;
  std::uint64_t seed = 0;
  std::size_t reference_channel = 0;
  /// Rescale W rows and NMF bases each iteration (objective-preserving).
  bool normalize = true;
  std::optional<DemixingSet> initial_demixing;
};

struct IlrmaResult {
  SpectrogramTensor separated;  // projected back to the reference channel
  DemixingSet demixing;         // before projection back
  NmfModel model;
  std::vector<double> objective_trace;  // entry 0 is the initial objective
};

inline std::vector<Eigen::MatrixXd> source_powers(const SpectrogramTensor& y) {
  std::vector<Eigen::MatrixXd> p;
  for (std::size_t m = 0; m < y.num_channels(); ++m) p.push_back(y.power(m));
  return p;
}

inline IlrmaResult run_ilrma(const SpectrogramTensor& x, const IlrmaOptions& opt = {}) {
  const std::size_t sources = x.num_channels();
  require(sources >= 2, "ILRMA needs at least two channels, got ", sources);
  const std::size_t bins = x.num_bins(), frames = x.num_frames();

  IlrmaResult r;
  r.demixing = opt.initial_demixing.value_or(DemixingSet::identity(bins, sources));
  check_shapes(x, r.demixing);
  r.model = NmfModel::random(sources, bins, frames, opt.bases, opt.seed);

  SpectrogramTensor y = demix(x, r.demixing);
  r.objective_trace.push_back(objective_from_demixed(y, r.demixing, nmf_variance(r.model)));

  for (std::size_t it = 0; it < opt.iterations; ++it) {
    r.model = nmf_update(std::move(r.model), source_powers(y));
    const VarianceField v = nmf_variance(r.model);
    ip_sweep(x, r.demixing, v);
    y = demix(x, r.demixing);

    if (opt.normalize) {
      for (std::size_t m = 0; m < sources; ++m) {
        double p = 0.0;
        for (std::size_t f = 0; f < bins; ++f) p += y.bins[f].row(m).squaredNorm();
        const double lambda = std::sqrt(p / static_cast<double>(bins * frames));
        if (!(lambda > 0.0) || !std::isfinite(lambda)) continue;
        for (std::size_t f = 0; f < bins; ++f) {
          r.demixing.matrices[f].row(m) /= lambda;
          y.bins[f].row(m) /= lambda;
        }
        r.model.basis[m] = (r.model.basis[m] / (lambda * lambda)).cwiseMax(kNmfFloor);
      }
    }
    r.objective_trace.push_back(objective_from_demixed(y, r.demixing, nmf_variance(r.model)));
  }

  r.separated = projection_back(y, r.demixing, opt.reference_channel);
  return r;
}

}  // namespace tsx
