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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "tsx/common.hpp"
#include "tsx/fft.hpp"
#include "tsx/nn.hpp"
#include "tsx/signal.hpp"
#include "tsx/weights.hpp"

namespace tsx {

// ---------------------------------------------------------------------------
// Features

struct MfccOptions {
  double frame_seconds = 0.064;
  double hop_seconds = 0.016;
  std::size_t num_ceps = 30;
  std::size_t num_mel = 40;
  double low_hz = 20.0;
  double high_hz = 7600.0;
  double preemphasis = 0.97;
  double energy_floor = 1e-10;
};

struct MfccFrames {
  Eigen::MatrixXd coeffs;  // num_ceps x frames
  std::size_t frame_length = 0;
  std::size_t hop = 0;
  bool normalized = false;

  std::size_t num_frames() const { return static_cast<std::size_t>(coeffs.cols()); }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

/// Triangular filters equally spaced on the mel scale; num_mel x (fft/2 + 1).
inline Eigen::MatrixXd mel_filterbank(const MfccOptions& opt, std::size_t fft_size, double sample_rate) {
  const std::size_t bins = fft_size / 2 + 1;
  const double lo = hz_to_mel(opt.low_hz), hi = hz_to_mel(opt.high_hz);
  const double step = (hi - lo) / static_cast<double>(opt.num_mel + 1);
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(opt.num_mel), static_cast<Eigen::Index>(bins));
  for (std::size_t m = 0; m < opt.num_mel; ++m) {
    const double left = lo + step * static_cast<double>(m);
    const double center = left + step;
    const double right = center + step;
    for (std::size_t k = 0; k < bins; ++k) {
      const double mel = hz_to_mel(static_cast<double>(k) * sample_rate / static_cast<double>(fft_size));
      double w = 0.0;
      if (mel > left && mel <= center) w = (mel - left) / (center - left);
      else if (mel > center && mel < right) w = (right - mel) / (right - center);
      fb(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = w;
    }
  }
  return fb;
}

/// Per frame: pre-emphasis, Hann window, power spectrum, mel filterbank,
/// log, orthonormal DCT-II truncated to num_ceps coefficients.
inline MfccFrames mfcc(const TimeSignal& signal, const MfccOptions& opt = {}) {
  require(signal.num_channels() == 1, "mfcc expects a mono signal");
  const auto frame = static_cast<std::size_t>(std::lround(opt.frame_seconds * signal.sample_rate));
  const auto hop = static_cast<std::size_t>(std::lround(opt.hop_seconds * signal.sample_rate));
  const auto& x = signal.channels[0];
  require(x.size() >= frame, "signal shorter than one MFCC frame (", x.size(), " < ", frame, ")");
  const std::size_t frames = (x.size() - frame) / hop + 1;
  const std::size_t nfft = next_power_of_two(frame);
  const Eigen::MatrixXd fb = mel_filterbank(opt, nfft, signal.sample_rate);

  const auto nm = static_cast<Eigen::Index>(opt.num_mel);
  Eigen::MatrixXd dct(static_cast<Eigen::Index>(opt.num_ceps), nm);
  for (Eigen::Index k = 0; k < dct.rows(); ++k)
    for (Eigen::Index m = 0; m < nm; ++m)
      dct(k, m) = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(nm)) *
                  std::cos(kPi * static_cast<double>(k) * (static_cast<double>(m) + 0.5) / static_cast<double>(nm));

  std::vector<double> window(frame);
  for (std::size_t i = 0; i < frame; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(frame));

  const Fft fft(nfft);
  std::vector<Complex> buf(nfft);
  std::vector<double> seg(frame);
  Eigen::VectorXd power(static_cast<Eigen::Index>(nfft / 2 + 1));
  MfccFrames out;
  out.frame_length = frame;
  out.hop = hop;
  out.coeffs.resize(static_cast<Eigen::Index>(opt.num_ceps), static_cast<Eigen::Index>(frames));
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < frame; ++i) seg[i] = x[t * hop + i];
    for (std::size_t i = frame; i-- > 1;) seg[i] -= opt.preemphasis * seg[i - 1];
    seg[0] -= opt.preemphasis * seg[0];
    std::fill(buf.begin(), buf.end(), Complex{});
    for (std::size_t i = 0; i < frame; ++i) buf[i] = seg[i] * window[i];
    fft.forward(buf);
    for (Eigen::Index k = 0; k < power.size(); ++k) power(k) = std::norm(buf[static_cast<std::size_t>(k)]);
    const Eigen::VectorXd logmel = (fb * power).cwiseMax(opt.energy_floor).array().log().matrix();
    out.coeffs.col(static_cast<Eigen::Index>(t)) = dct * logmel;
  }
  return out;
}

/// Zero mean, unit variance per coefficient over the utterance.
inline MfccFrames mean_variance_normalize(MfccFrames f) {
  const Eigen::VectorXd mean = f.coeffs.rowwise().mean();
  f.coeffs.colwise() -= mean;
  const Eigen::VectorXd sd =
      (f.coeffs.cwiseAbs2().rowwise().mean().array().sqrt().max(1e-8)).matrix();
  for (Eigen::Index r = 0; r < f.coeffs.rows(); ++r) f.coeffs.row(r) /= sd(r);
  f.normalized = true;
  return f;
}

struct VadOptions {
  double frame_seconds = 0.025;
  double hop_seconds = 0.010;
  double percentile = 0.95;
  double range_db = 30.0;
};

struct VadResult {
  std::vector<bool> keep;  // per sample; empty when all_silent
  bool all_silent = false;

  std::size_t kept() const { return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true)); }
};

/// Keeps frames whose energy is within `range_db` of the given percentile
/// of frame energies; the sample mask is the union of kept frames.
inline VadResult energy_vad(const std::vector<double>& x, double sample_rate, const VadOptions& opt = {}) {
  VadResult r;
  const auto frame = static_cast<std::size_t>(std::lround(opt.frame_seconds * sample_rate));
  const auto hop = static_cast<std::size_t>(std::lround(opt.hop_seconds * sample_rate));
  if (x.empty() || energy(x) <= 0.0) {
    r.all_silent = true;
    return r;
  }
  const std::size_t frames = x.size() < frame ? 1 : (x.size() - frame) / hop + 1;
  std::vector<double> db(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    double e = 0.0;
    for (std::size_t i = t * hop; i < std::min(x.size(), t * hop + frame); ++i) e += x[i] * x[i];
    db[t] = e > 0.0 ? 10.0 * std::log10(e) : -std::numeric_limits<double>::infinity();
  }
  std::vector<double> sorted = db;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::ceil(opt.percentile * static_cast<double>(frames)));
  const double threshold = sorted[std::clamp<std::size_t>(rank, 1, frames) - 1] - opt.range_db;
  r.keep.assign(x.size(), false);
  for (std::size_t t = 0; t < frames; ++t) {
    if (db[t] < threshold) continue;
    for (std::size_t i = t * hop; i < std::min(x.size(), t * hop + frame); ++i) r.keep[i] = true;
  }
  return r;
}

inline std::vector<double> apply_vad(const std::vector<double>& x, const VadResult& vad) {
  std::vector<double> out;
  for (std::size_t i = 0; i < vad.keep.size(); ++i)
    if (vad.keep[i]) out.push_back(x[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Embedding extraction

inline constexpr const char* kEmbedderKind = "xvector";
inline constexpr std::size_t kEmbeddingWindow = 180;
inline constexpr std::size_t kEmbeddingShift = 90;

enum class EmbeddingStage { kRaw, kLda, kNormalized };

struct Embedding {
  Eigen::VectorXd values;
  EmbeddingStage stage = EmbeddingStage::kRaw;
};

/// Frame-level layers, statistics pooling and an affine embedding head.
class Embedder {
 public:
  explicit Embedder(const WeightContainer& weights) {
    require(weights.kind == kEmbedderKind, "expected an '", kEmbedderKind, "' container, got '", weights.kind, "'");
    const auto specs = nn::parse_layers(weights.architecture);
    network_ = nn::Network(specs, weights);
    int pools = 0;
    for (const auto& s : specs) pools += s.kind == nn::LayerKind::kStatsPooling;
    require(pools == 1, "embedding network needs exactly one statistics pooling layer");
    min_frames_ = 0;
    for (std::size_t n = 1; n < 10000 && min_frames_ == 0; ++n)
      if (frame_level_output(n) > 0) min_frames_ = n;
    require(min_frames_ > 0, "embedding network context is too large");
  }

  const nn::Network& network() const { return network_; }
  std::size_t input_dim() const { return network_.input_channels(); }
  std::size_t embedding_dim() const { return network_.output_channels(); }
  std::size_t min_frames() const { return min_frames_; }

  /// Forward pass over one window of frames (input_dim x n).
  Eigen::VectorXd window_embedding(const Eigen::MatrixXd& window) const {
    require(static_cast<std::size_t>(window.cols()) >= min_frames_, "window has ", window.cols(),
            " frames, network needs at least ", min_frames_);
    return network_.forward(window).output.col(0);
  }

 private:
  std::size_t frame_level_output(std::size_t n) const {
    for (const auto& l : network_.layers()) {
      if (l.spec().kind == nn::LayerKind::kStatsPooling) return n;
      n = l.spec().output_frames(n);
      if (n == 0) return 0;
    }
    return n;
  }

  nn::Network network_;
  std::size_t min_frames_ = 0;
};

/// Window start frames: every kEmbeddingShift frames while a full window
/// fits; a single window over all frames for shorter inputs.
inline std::vector<std::size_t> embedding_windows(std::size_t frames) {
  if (frames < kEmbeddingWindow) return {0};
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + kEmbeddingWindow <= frames; s += kEmbeddingShift) starts.push_back(s);
  return starts;
}

/// Mean of per-window embeddings.
inline Embedding embed(const MfccFrames& frames, const Embedder& net) {
  require(static_cast<std::size_t>(frames.coeffs.rows()) == net.input_dim(), "features have ", frames.coeffs.rows(),
          " dims, network expects ", net.input_dim());
  const std::size_t n = frames.num_frames();
  require(n >= net.min_frames(), "utterance has ", n, " frames, fewer than the network context ", net.min_frames());
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.embedding_dim()));
  const auto starts = embedding_windows(n);
  for (auto s : starts) {
    const std::size_t len = std::min(kEmbeddingWindow, n - s);
    acc += net.window_embedding(frames.coeffs.middleCols(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(len)));
  }
  return {acc / static_cast<double>(starts.size()), EmbeddingStage::kRaw};
}

/// Energy VAD (when the result is non-empty and long enough), MFCC,
/// per-utterance normalization, windowed embedding.
inline Embedding extract_embedding(const TimeSignal& signal, const Embedder& net, bool use_vad = true) {
  require(signal.num_channels() == 1, "embedding extraction expects mono audio");
  TimeSignal work = signal;
  if (use_vad) {
    const auto vad = energy_vad(signal.channels[0], signal.sample_rate);
    if (!vad.all_silent) {
      auto kept = apply_vad(signal.channels[0], vad);
      if (kept.size() >= static_cast<std::size_t>(0.064 * signal.sample_rate) * 4) work.channels[0] = std::move(kept);
    }
  }
  return embed(mean_variance_normalize(mfcc(work)), net);
}

/// Toy x-vector descriptor: three time-delay layers with contexts
/// {-2..2}, {-2,0,2}, {0}, statistics pooling, affine head.
inline nlohmann::json toy_xvector_architecture(std::size_t input_dim = 30, std::size_t width = 64,
                                               std::size_t embedding_dim = 64) {
  using nn::Activation;
  using nn::LayerKind;
  using nn::LayerSpec;
  std::vector<LayerSpec> specs{
      {"tdnn1", LayerKind::kConv1d, input_dim, width, 5, 1, 0, 1, Activation::kRelu},
      {"tdnn2", LayerKind::kConv1d, width, width, 3, 1, 0, 2, Activation::kRelu},
      {"tdnn3", LayerKind::kConv1d, width, width, 1, 1, 0, 1, Activation::kRelu},
      {"pool", LayerKind::kStatsPooling, width, 2 * width, 1, 1, 0, 1, Activation::kLinear},
      {"embedding", LayerKind::kFullyConnected, 2 * width, embedding_dim, 1, 1, 0, 1, Activation::kLinear},
  };
  return {{"input_dim", input_dim}, {"embedding_dim", embedding_dim}, {"layers", nn::layers_to_json(specs)}};
}

// ---------------------------------------------------------------------------
// Backend: LDA, length normalization, two-covariance PLDA

namespace backend_detail {

inline std::map<int, std::vector<std::size_t>> group_by_label(const std::vector<int>& labels) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  return groups;
}

/// Adds ridge * trace / dim to the diagonal when the matrix is not
/// comfortably positive definite.
inline Eigen::MatrixXd regularize(Eigen::MatrixXd m, double ridge = 1e-6) {
  m = 0.5 * (m + m.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double max_eig = es.eigenvalues().maxCoeff();
  if (es.eigenvalues().minCoeff() <= 1e-10 * std::max(max_eig, 1e-300)) {
    const double scale = std::max(m.trace() / static_cast<double>(m.rows()), 1e-12);
    m.diagonal().array() += ridge * scale;
  }
  return m;
}

/// Raises eigenvalues below `floor` to `floor`. For a Gaussian covariance
/// M-step this is the maximizer under the constraint, so EM stays monotone.
inline Eigen::MatrixXd clamp_eigenvalues(const Eigen::MatrixXd& m, double floor) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline double log_det_spd(const Eigen::MatrixXd& m) {
  const Eigen::LLT<Eigen::MatrixXd> llt(m);
  require(llt.info() == Eigen::Success, "matrix is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

inline double log_gaussian(const Eigen::VectorXd& x, const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  require(llt.info() == Eigen::Success, "covariance is not positive definite");
  const Eigen::VectorXd sol = llt.matrixL().solve(x);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * kPi) + logdet + sol.squaredNorm());
}

}  // namespace backend_detail

struct LdaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd projection;  // out_dim x in_dim, rows by descending eigenvalue
  Eigen::VectorXd eigenvalues;

  std::size_t output_dim() const { return static_cast<std::size_t>(projection.rows()); }
};

/// Fits LDA to min(target_dim, classes - 1, dim) dimensions.
inline LdaModel lda_fit(const std::vector<Eigen::VectorXd>& data, const std::vector<int>& labels,
                        std::size_t target_dim = 128) {
  require(data.size() == labels.size() && !data.empty(), "lda_fit: data/label mismatch");
  const auto groups = backend_detail::group_by_label(labels);
  require(groups.size() >= 2, "lda_fit needs at least two classes");
  for (const auto& [label, idx] : groups) require(idx.size() >= 2, "class ", label, " has fewer than two samples");
  const Eigen::Index dim = data[0].size();
  const double n = static_cast<double>(data.size());

  LdaModel model;
  model.mean = Eigen::VectorXd::Zero(dim);
  for (const auto& x : data) model.mean += x;
  model.mean /= n;

  Eigen::MatrixXd within = Eigen::MatrixXd::Zero(dim, dim), between = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& [label, idx] : groups) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(dim);
    for (auto i : idx) mu += data[i];
    mu /= static_cast<double>(idx.size());
    for (auto i : idx) within += (data[i] - mu) * (data[i] - mu).transpose();
    between += static_cast<double>(idx.size()) * (mu - model.mean) * (mu - model.mean).transpose();
  }
  within = backend_detail::regularize(within / n);
  between /= n;

  const Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(between, within);
  require(solver.info() == Eigen::Success, "lda_fit: generalized eigenproblem failed");
  const std::size_t out = std::min({target_dim, groups.size() - 1, static_cast<std::size_t>(dim)});
  model.projection.resize(static_cast<Eigen::Index>(out), dim);
  model.eigenvalues.resize(static_cast<Eigen::Index>(out));
  for (std::size_t k = 0; k < out; ++k) {
    const Eigen::Index col = dim - 1 - static_cast<Eigen::Index>(k);
    model.projection.row(static_cast<Eigen::Index>(k)) = solver.eigenvectors().col(col).transpose();
    model.eigenvalues(static_cast<Eigen::Index>(k)) = solver.eigenvalues()(col);
  }
  return model;
}

inline Embedding lda_project(const LdaModel& model, const Embedding& e) {
  require(e.values.size() == model.mean.size(), "lda_project: dimension mismatch");
  return {model.projection * (e.values - model.mean), EmbeddingStage::kLda};
}

inline Embedding length_normalize(const Embedding& e) {
  const double n = e.values.norm();
  require(n > 0.0, "cannot length-normalize a zero vector");
  return {e.values / n, EmbeddingStage::kNormalized};
}

/// Two-covariance model: x = mean + y + e, y ~ N(0, between), e ~ N(0, within).
struct PldaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd between;
  Eigen::MatrixXd within;
};

/// Marginal log-likelihood of labeled data under the model.
inline double plda_log_likelihood(const PldaModel& model, const std::vector<Eigen::VectorXd>& data,
                                  const std::vector<int>& labels) {
  using backend_detail::log_det_spd;
  const auto d = static_cast<double>(model.mean.size());
  const Eigen::LLT<Eigen::MatrixXd> w_llt(model.within);
  require(w_llt.info() == Eigen::Success, "within-class covariance is not positive definite");
  const Eigen::MatrixXd w_inv = w_llt.solve(Eigen::MatrixXd::Identity(model.within.rows(), model.within.cols()));
  const Eigen::MatrixXd b_inv = model.between.llt().solve(Eigen::MatrixXd::Identity(model.between.rows(), model.between.cols()));
  const double logdet_w = log_det_spd(model.within), logdet_b = log_det_spd(model.between);
  double ll = 0.0;
  for (const auto& [label, idx] : backend_detail::group_by_label(labels)) {
    const double n = static_cast<double>(idx.size());
    Eigen::VectorXd s = Eigen::VectorXd::Zero(model.mean.size());
    double quad = 0.0;
    for (auto i : idx) {
      const Eigen::VectorXd r = data[i] - model.mean;
      s += r;
      quad += r.dot(w_inv * r);
    }
    const Eigen::MatrixXd precision = b_inv + n * w_inv;
    const Eigen::LLT<Eigen::MatrixXd> p_llt(precision);
    const Eigen::VectorXd ws = w_inv * s;
    ll += -0.5 * n * d * std::log(2.0 * kPi) - 0.5 * n * logdet_w - 0.5 * quad - 0.5 * logdet_b -
          0.5 * log_det_spd(precision) + 0.5 * ws.dot(p_llt.solve(ws));
  }
  return ll;
}

struct PldaFitResult {
  PldaModel model;
  std::vector<double> log_likelihood;  // before EM and after each iteration
};

inline constexpr double kPldaVarianceFloor = 1e-6;

/// EM for the two-covariance model.
inline PldaFitResult plda_fit(const std::vector<Eigen::VectorXd>& data, const std::vector<int>& labels,
                              std::size_t em_iterations = 10) {
  require(data.size() == labels.size() && !data.empty(), "plda_fit: data/label mismatch");
  const auto groups = backend_detail::group_by_label(labels);
  require(groups.size() >= 2, "plda_fit needs at least two classes");
  const Eigen::Index dim = data[0].size();
  const double n_total = static_cast<double>(data.size());
  const double n_classes = static_cast<double>(groups.size());

  PldaModel m;
  m.mean = Eigen::VectorXd::Zero(dim);
  for (const auto& x : data) m.mean += x;
  m.mean /= n_total;
  m.between = Eigen::MatrixXd::Zero(dim, dim);
  m.within = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& [label, idx] : groups) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(dim);
    for (auto i : idx) mu += data[i];
    mu /= static_cast<double>(idx.size());
    m.between += (mu - m.mean) * (mu - m.mean).transpose();
    for (auto i : idx) m.within += (data[i] - mu) * (data[i] - mu).transpose();
  }
  // Covariance eigenvalue floor relative to the average total variance;
  // keeps the likelihood well conditioned when classes are near-separable.
  const double floor = kPldaVarianceFloor * std::max((m.between / n_classes + m.within / n_total).trace(), 1e-300) /
                       static_cast<double>(dim);
  m.between = backend_detail::clamp_eigenvalues(m.between / n_classes, floor);
  m.within = backend_detail::clamp_eigenvalues(m.within / n_total, floor);

  PldaFitResult r;
  r.log_likelihood.push_back(plda_log_likelihood(m, data, labels));
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(dim, dim);
  for (std::size_t it = 0; it < em_iterations; ++it) {
    const Eigen::MatrixXd w_inv = m.within.llt().solve(eye);
    const Eigen::MatrixXd b_inv = m.between.llt().solve(eye);
    Eigen::MatrixXd new_b = Eigen::MatrixXd::Zero(dim, dim), new_w = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& [label, idx] : groups) {
      const double n = static_cast<double>(idx.size());
      Eigen::VectorXd s = Eigen::VectorXd::Zero(dim);
      for (auto i : idx) s += data[i] - m.mean;
      const Eigen::MatrixXd cov = (b_inv + n * w_inv).llt().solve(eye);
      const Eigen::VectorXd y = cov * (w_inv * s);
      new_b += y * y.transpose() + cov;
      for (auto i : idx) {
        const Eigen::VectorXd e = data[i] - m.mean - y;
        new_w += e * e.transpose() + cov;
      }
    }
    m.between = backend_detail::clamp_eigenvalues(new_b / n_classes, floor);
    m.within = backend_detail::clamp_eigenvalues(new_w / n_total, floor);
    const double ll = plda_log_likelihood(m, data, labels);
    const double prev = r.log_likelihood.back();
    require(ll >= prev - 1e-8 * std::max(1.0, std::abs(prev)), "PLDA EM log-likelihood decreased at iteration ", it,
            " (", prev, " -> ", ll, ")");
    r.log_likelihood.push_back(ll);
  }
  r.model = std::move(m);
  return r;
}

/// log p(e1, e2 | same speaker) - log p(e1, e2 | different speakers).
inline double plda_score(const PldaModel& model, const Eigen::VectorXd& e1, const Eigen::VectorXd& e2) {
  using backend_detail::log_gaussian;
  const Eigen::Index d = model.mean.size();
  require(e1.size() == d && e2.size() == d, "plda_score: dimension mismatch");
  const Eigen::MatrixXd total = model.between + model.within;
  Eigen::MatrixXd joint(2 * d, 2 * d);
  joint << total, model.between, model.between, total;
  Eigen::VectorXd stacked(2 * d);
  stacked << e1 - model.mean, e2 - model.mean;
  return log_gaussian(stacked, joint) - log_gaussian(e1 - model.mean, total) - log_gaussian(e2 - model.mean, total);
}

struct Selection {
  std::size_t index = 0;
  bool tie = false;
  std::vector<double> scores;
};

/// Candidate with the highest PLDA score against the enrollment; ties go to
/// the lowest index and set `tie`.
inline Selection select_target(const std::vector<Embedding>& candidates, const Embedding& enrollment,
                               const PldaModel& model) {
  require(!candidates.empty(), "select_target: no candidates");
  Selection s;
  for (const auto& c : candidates) s.scores.push_back(plda_score(model, c.values, enrollment.values));
  for (std::size_t i = 1; i < s.scores.size(); ++i)
    if (s.scores[i] > s.scores[s.index]) s.index = i;
  const double best = s.scores[s.index];
  for (std::size_t i = 0; i < s.scores.size(); ++i)
    if (i != s.index && std::abs(s.scores[i] - best) <= 1e-12 * std::max(1.0, std::abs(best))) s.tie = true;
  return s;
}

/// LDA followed by PLDA, applied to raw embeddings.
struct SpeakerBackend {
  LdaModel lda;
  PldaModel plda;

  Embedding prepare(const Embedding& raw) const { return length_normalize(lda_project(lda, raw)); }

  static SpeakerBackend fit(const std::vector<Eigen::VectorXd>& raw, const std::vector<int>& labels,
                            std::size_t lda_dim = 128, std::size_t em_iterations = 10) {
    SpeakerBackend b;
    b.lda = lda_fit(raw, labels, lda_dim);
    std::vector<Eigen::VectorXd> prepared;
    for (const auto& x : raw) prepared.push_back(b.prepare({x, EmbeddingStage::kRaw}).values);
    b.plda = plda_fit(prepared, labels, em_iterations).model;
    return b;
  }
};

inline constexpr const char* kBackendKind = "speaker-backend";

inline WeightContainer backend_to_container(const SpeakerBackend& b) {
  WeightContainer c;
  c.kind = kBackendKind;
  c.architecture = {{"input_dim", b.lda.mean.size()}, {"lda_dim", b.lda.output_dim()}};
  auto add = [&](const std::string& name, const Eigen::MatrixXd& m) {
    Tensor t = to_tensor(m);
    c.add(name, t.shape, std::move(t.data));
  };
  add("lda.mean", b.lda.mean);
  add("lda.projection", b.lda.projection);
  add("plda.mean", b.plda.mean);
  add("plda.between", b.plda.between);
  add("plda.within", b.plda.within);
  return c;
}

inline SpeakerBackend backend_from_container(const WeightContainer& c) {
  require(c.kind == kBackendKind, "expected a '", kBackendKind, "' container, got '", c.kind, "'");
  SpeakerBackend b;
  b.lda.mean = to_matrix(c.tensor("lda.mean")).col(0);
  b.lda.projection = to_matrix(c.tensor("lda.projection"));
  b.plda.mean = to_matrix(c.tensor("plda.mean")).col(0);
  b.plda.between = to_matrix(c.tensor("plda.between"));
  b.plda.within = to_matrix(c.tensor("plda.within"));
  require(b.lda.projection.cols() == b.lda.mean.size(), "LDA projection/mean mismatch");
  require(b.plda.mean.size() == b.lda.projection.rows(), "PLDA dimension does not match LDA output");
  return b;
}

}  // namespace tsx
