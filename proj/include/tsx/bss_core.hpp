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

#include <Eigen/LU>

#include "tsx/common.hpp"
#include "tsx/stft.hpp"

namespace tsx {

/// Floor applied to source variances wherever they enter a log or a
/// denominator.
inline constexpr double kVarianceFloor = 1e-10;

/// Per-frequency M x M demixing matrices W_f; y_ft = W_f x_ft.
struct DemixingSet {
  std::vector<Eigen::MatrixXcd> matrices;

  static DemixingSet identity(std::size_t bins, std::size_t m) {
    const auto n = static_cast<Eigen::Index>(m);
    return {std::vector<Eigen::MatrixXcd>(bins, Eigen::MatrixXcd::Identity(n, n))};
  }

  std::size_t num_bins() const { return matrices.size(); }
  std::size_t num_sources() const { return matrices.empty() ? 0 : static_cast<std::size_t>(matrices[0].rows()); }
};

/// Source variances v_{ft,m}; `sources[m]` is F x T.
struct VarianceField {
  std::vector<Eigen::MatrixXd> sources;

  std::size_t num_sources() const { return sources.size(); }

  void floor(double eps = kVarianceFloor) {
    for (auto& s : sources) s = s.cwiseMax(eps);
  }
};

inline void check_shapes(const SpectrogramTensor& x, const DemixingSet& w) {
  require(x.num_bins() == w.num_bins(), "demixing set has ", w.num_bins(), " bins, spectrogram has ",
          x.num_bins());
  for (const auto& m : w.matrices)
    require(m.rows() == m.cols() && static_cast<std::size_t>(m.rows()) == x.num_channels(),
            "demixing matrix must be ", x.num_channels(), "x", x.num_channels());
}

inline SpectrogramTensor demix(const SpectrogramTensor& x, const DemixingSet& w) {
  check_shapes(x, w);
  SpectrogramTensor y = x;
  for (std::size_t f = 0; f < x.num_bins(); ++f) y.bins[f] = w.matrices[f] * x.bins[f];
  return y;
}

inline double log_abs_det(const Eigen::MatrixXcd& m) {
  return std::log(std::abs(Eigen::PartialPivLU<Eigen::MatrixXcd>(m).determinant()));
}

/// Negative log-likelihood of the local Gaussian model with constants dropped,
/// evaluated on already-demixed signals y = W x:
///   J = sum_{m,f,t} (log v + |y|^2 / v) - 2 T sum_f log|det W_f|.
inline double objective_from_demixed(const SpectrogramTensor& y, const DemixingSet& w, const VarianceField& v) {
  require(v.num_sources() == y.num_channels(), "variance field has ", v.num_sources(), " sources, expected ",
          y.num_channels());
  const std::size_t frames = y.num_frames();
  double j = 0.0;
  for (std::size_t m = 0; m < y.num_channels(); ++m) {
    const auto& vm = v.sources[m];
    require(static_cast<std::size_t>(vm.rows()) == y.num_bins() && static_cast<std::size_t>(vm.cols()) == frames,
            "variance field shape mismatch");
    for (std::size_t f = 0; f < y.num_bins(); ++f) {
      for (std::size_t t = 0; t < frames; ++t) {
        const double var = std::max(vm(f, t), kVarianceFloor);
        require(var > 0.0 && std::isfinite(var), "non-positive variance at source ", m, ", bin ", f);
        j += std::log(var) + std::norm(y.at(m, f, t)) / var;
      }
    }
  }
  for (std::size_t f = 0; f < w.num_bins(); ++f)
    j -= 2.0 * static_cast<double>(frames) * log_abs_det(w.matrices[f]);
  return j;
}

inline double objective(const SpectrogramTensor& x, const DemixingSet& w, const VarianceField& v) {
  return objective_from_demixed(demix(x, w), w, v);
}

/// V_f = (1/T) sum_t x_ft x_ft^H / r_ft at one frequency.
inline Eigen::MatrixXcd spatial_covariance(const Eigen::MatrixXcd& x_f, const Eigen::RowVectorXd& r_f) {
  const Eigen::Index frames = x_f.cols();
  require(frames > 0, "spatial covariance needs at least one frame");
  require(r_f.size() == frames, "variance row length mismatch");
  Eigen::MatrixXcd weighted = x_f;
  for (Eigen::Index t = 0; t < frames; ++t) weighted.col(t) /= std::max(r_f(t), kVarianceFloor);
  Eigen::MatrixXcd v = weighted * x_f.adjoint() / static_cast<double>(frames);
  return 0.5 * (v + v.adjoint());
}

/// Weighted covariances for every frequency of one source. `r` is F x T.
inline std::vector<Eigen::MatrixXcd> compute_spatial_covariance(const SpectrogramTensor& x, const Eigen::MatrixXd& r) {
  require(static_cast<std::size_t>(r.rows()) == x.num_bins(), "variance rows must equal frequency bins");
  std::vector<Eigen::MatrixXcd> out(x.num_bins());
  for (std::size_t f = 0; f < x.num_bins(); ++f) out[f] = spatial_covariance(x.bins[f], r.row(f));
  return out;
}

/// Iterative-projection row update: w = (W V)^{-1} e_m, then w /= sqrt(w^H V w).
/// The returned vector is w_{f,m}; row m of W_f becomes w^H.
inline Eigen::VectorXcd ip_update(const Eigen::MatrixXcd& w_f, const Eigen::MatrixXcd& v_fm, std::size_t m,
                                  std::size_t frequency = 0) {
  const Eigen::Index n = w_f.rows();
  require(w_f.cols() == n && v_fm.rows() == n && v_fm.cols() == n, "ip_update shape mismatch");
  require(static_cast<Eigen::Index>(m) < n, "source index out of range");
  const Eigen::VectorXcd e = Eigen::VectorXcd::Unit(n, static_cast<Eigen::Index>(m));

  Eigen::MatrixXcd v = v_fm;
  for (int attempt = 0; attempt < 2; ++attempt) {
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(w_f * v);
    if (lu.isInvertible()) {
      Eigen::VectorXcd w = lu.solve(e);
      const double quad = (w.adjoint() * v * w)(0, 0).real();
      if (quad > 0.0 && std::isfinite(quad)) return w / std::sqrt(quad);
    }
    const double ridge = 1e-10 * std::max(v.trace().real(), 1e-300) / static_cast<double>(n);
    v += ridge * Eigen::MatrixXcd::Identity(n, n);
  }
  fail("iterative projection: singular system at frequency ", frequency, ", source ", m);
}

/// One full IP sweep (frequency outer, source inner) with variances held fixed.
inline void ip_sweep(const SpectrogramTensor& x, DemixingSet& w, const VarianceField& v) {
  check_shapes(x, w);
  const std::size_t sources = w.num_sources();
  require(v.num_sources() == sources, "variance field source count mismatch");
  for (std::size_t f = 0; f < x.num_bins(); ++f) {
    for (std::size_t m = 0; m < sources; ++m) {
      const Eigen::MatrixXcd cov = spatial_covariance(x.bins[f], v.sources[m].row(f));
      const Eigen::VectorXcd wm = ip_update(w.matrices[f], cov, m, f);
      w.matrices[f].row(static_cast<Eigen::Index>(m)) = wm.adjoint();
    }
  }
}

/// Rescales each separated source to its image at `reference_channel`:
/// y_m <- (W_f^{-1})[ref, m] * y_m.
inline SpectrogramTensor projection_back(const SpectrogramTensor& y, const DemixingSet& w,
                                         std::size_t reference_channel) {
  check_shapes(y, w);
  require(reference_channel < y.num_channels(), "reference channel ", reference_channel, " out of range");
  SpectrogramTensor out = y;
  for (std::size_t f = 0; f < y.num_bins(); ++f) {
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(w.matrices[f]);
    require(lu.isInvertible(), "projection back: singular demixing matrix at frequency ", f);
    const Eigen::MatrixXcd a = lu.inverse();
    for (Eigen::Index m = 0; m < a.cols(); ++m)
      out.bins[f].row(m) *= a(static_cast<Eigen::Index>(reference_channel), m);
  }
  return out;
}

}  // namespace tsx
