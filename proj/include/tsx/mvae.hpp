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
#include <string>
#include <vector>

#include "tsx/bss_core.hpp"
#include "tsx/ilrma.hpp"
#include "tsx/nn.hpp"
#include "tsx/weights.hpp"

namespace tsx {

inline constexpr const char* kDecoderKind = "cvae-decoder";

/// Decoder of the conditional VAE used as a source model. Maps a latent
/// sequence z (latent_dim x frames) and a class vector c (broadcast over
/// frames) to F log-variances per frame; the output map is exp().
class Decoder {
 public:
  explicit Decoder(const WeightContainer& weights) {
    require(weights.kind == kDecoderKind, "expected a '", kDecoderKind, "' container, got '", weights.kind, "'");
    const auto& arch = weights.architecture;
    latent_dim_ = arch.at("latent_dim").get<std::size_t>();
    class_dim_ = arch.at("class_dim").get<std::size_t>();
    frequency_bins_ = arch.at("frequency_bins").get<std::size_t>();
    require(arch.value("output", std::string("log-variance")) == "log-variance",
            "decoder output parameterization must be log-variance");
    const auto specs = nn::parse_layers(arch);
    network_ = nn::Network(specs, weights);
    require(network_.input_channels() == latent_dim_ + class_dim_, "decoder input has ", network_.input_channels(),
            " channels, expected latent_dim + class_dim = ", latent_dim_ + class_dim_);
    require(network_.output_channels() == frequency_bins_, "decoder output has ", network_.output_channels(),
            " channels, expected ", frequency_bins_, " frequency bins");
    for (const auto& l : network_.layers())
      require(l.spec().kind != nn::LayerKind::kStatsPooling, "decoder cannot contain statistics pooling");
  }

  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t class_dim() const { return class_dim_; }
  std::size_t frequency_bins() const { return frequency_bins_; }
  const nn::Network& network() const { return network_; }

  /// Number of latent frames that decode to exactly `frames` output frames.
  std::size_t latent_frames(std::size_t frames) const {
    for (std::size_t n = 1; n <= 4 * frames + 16; ++n)
      if (network_.output_frames(n) == frames) return n;
    fail("decoder cannot produce exactly ", frames, " frames");
  }

 private:
  std::size_t latent_dim_ = 0, class_dim_ = 0, frequency_bins_ = 0;
  nn::Network network_;
};

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double mx = logits.size() ? logits.maxCoeff() : 0.0;
  Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

struct DecoderOutput {
  Eigen::MatrixXd variance;  // F x T, strictly positive
  nn::ForwardCache cache;
};

inline DecoderOutput decoder_forward(const Decoder& dec, const Eigen::MatrixXd& z, const Eigen::VectorXd& c) {
  require(static_cast<std::size_t>(z.rows()) == dec.latent_dim(), "latent has ", z.rows(), " rows, decoder expects ",
          dec.latent_dim());
  require(static_cast<std::size_t>(c.size()) == dec.class_dim(), "class vector has ", c.size(),
          " entries, decoder expects ", dec.class_dim());
  Eigen::MatrixXd input(z.rows() + c.size(), z.cols());
  input.topRows(z.rows()) = z;
  input.bottomRows(c.size()) = c.replicate(1, z.cols());
  DecoderOutput out;
  out.cache = dec.network().forward(input);
  out.variance = out.cache.output.array().exp().matrix();
  return out;
}

struct LatentGradient {
  Eigen::MatrixXd z;
  Eigen::VectorXd c_logits;
};

/// Backpropagates dJ/dsigma^2 through exp, the network, the class broadcast
/// and the softmax over c_logits.
inline LatentGradient decoder_backward(const Decoder& dec, const DecoderOutput& fwd, const Eigen::VectorXd& c_logits,
                                       const Eigen::MatrixXd& grad_variance) {
  require(grad_variance.rows() == fwd.variance.rows() && grad_variance.cols() == fwd.variance.cols(),
          "upstream gradient shape mismatch");
  const Eigen::MatrixXd grad_log = grad_variance.cwiseProduct(fwd.variance);
  const Eigen::MatrixXd grad_in = dec.network().backward(fwd.cache, grad_log);
  const auto d = static_cast<Eigen::Index>(dec.latent_dim());
  const auto k = static_cast<Eigen::Index>(dec.class_dim());
  LatentGradient g;
  g.z = grad_in.topRows(d);
  const Eigen::VectorXd grad_c = grad_in.bottomRows(k).rowwise().sum();
  const Eigen::VectorXd s = softmax(c_logits);
  g.c_logits = s.cwiseProduct((grad_c.array() - s.dot(grad_c)).matrix());
  return g;
}

inline constexpr double kScaleFloor = 1e-12;

/// g = mean over (f, t) of |y|^2 / sigma^2.
inline double update_scale(const Eigen::MatrixXd& power, const Eigen::MatrixXd& variance) {
  require(power.rows() == variance.rows() && power.cols() == variance.cols(), "update_scale shape mismatch");
  require(power.size() > 0, "update_scale on an empty spectrogram");
  const double g = power.cwiseQuotient(variance.cwiseMax(kVarianceFloor)).mean();
  return std::max(g, kScaleFloor);
}

struct NeuralSourceState {
  Eigen::MatrixXd z;         // latent_dim x latent frames
  Eigen::VectorXd c_logits;  // class_dim
  double g = 1.0;

  Eigen::VectorXd c() const { return softmax(c_logits); }
};

/// Per-source objective sum_{f,t} log(g sigma^2) + |y|^2 / (g sigma^2).
inline double source_objective(const Eigen::MatrixXd& power, const Eigen::MatrixXd& variance, double g) {
  const Eigen::ArrayXXd v = (g * variance.array()).max(kVarianceFloor);
  return (v.log() + power.array() / v).sum();
}

struct LatentOptions {
  std::size_t steps = 10;
  double step_size = 1e-2;
  /// Backtracking stops once the step falls below this value.
  double min_step_size = 1e-10;
};

struct LatentUpdateResult {
  NeuralSourceState state;
  Eigen::MatrixXd variance;  // sigma^2 at the returned state (without g)
  std::vector<double> objective_trace;  // J_m before and after each accepted step
  double step_size = 0.0;               // step size in effect at exit
  bool step_floor_reached = false;
};

/// Gradient of the per-bin mean of the source objective with respect to
/// the latent variables, with g held at its current value.
inline LatentGradient latent_gradient(const Decoder& dec, const DecoderOutput& fwd, const NeuralSourceState& state,
                                      const Eigen::MatrixXd& power) {
  const double bins = static_cast<double>(power.size());
  const Eigen::MatrixXd v = (state.g * fwd.variance.array()).max(kVarianceFloor).matrix();
  // d/dsigma^2 of log(g s) + p/(g s)  =  (1 - p/(g s)) / s
  const Eigen::MatrixXd grad =
      ((1.0 - power.array() / v.array()) / fwd.variance.array().max(kVarianceFloor) / bins).matrix();
  return decoder_backward(dec, fwd, state.c_logits, grad);
}

/// Gradient descent on (z, c_logits) with g re-fit after every step and
/// step halving whenever a step would increase the source objective.
inline LatentUpdateResult update_latents(NeuralSourceState state, const Eigen::MatrixXd& power, const Decoder& dec,
                                         const LatentOptions& opt = {}) {
  require(static_cast<std::size_t>(power.rows()) == dec.frequency_bins(), "power has ", power.rows(),
          " bins, decoder produces ", dec.frequency_bins());
  require(state.g > 0.0, "scale g must be positive");
  DecoderOutput fwd = decoder_forward(dec, state.z, state.c());
  require(fwd.variance.cols() == power.cols(), "decoder produced ", fwd.variance.cols(), " frames, expected ",
          power.cols());
  state.g = update_scale(power, fwd.variance);
  double j = source_objective(power, fwd.variance, state.g);

  LatentUpdateResult r;
  r.objective_trace.push_back(j);
  double step = opt.step_size;
  for (std::size_t s = 0; s < opt.steps; ++s) {
    const LatentGradient grad = latent_gradient(dec, fwd, state, power);
    if (grad.z.squaredNorm() + grad.c_logits.squaredNorm() == 0.0) break;
    bool accepted = false;
    while (step >= opt.min_step_size) {
      NeuralSourceState trial = state;
      trial.z -= step * grad.z;
      trial.c_logits -= step * grad.c_logits;
      DecoderOutput trial_fwd = decoder_forward(dec, trial.z, trial.c());
      trial.g = update_scale(power, trial_fwd.variance);
      const double trial_j = source_objective(power, trial_fwd.variance, trial.g);
      if (std::isfinite(trial_j) && trial_j <= j) {
        state = std::move(trial);
        fwd = std::move(trial_fwd);
        j = trial_j;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      r.step_floor_reached = true;
      break;
    }
    r.objective_trace.push_back(j);
  }
  r.state = std::move(state);
  r.variance = std::move(fwd.variance);
  r.step_size = step;
  return r;
}

struct MvaeOptions {
  std::size_t iterations = 50;
  std::size_t warm_start_iterations = 30;
  std::size_t bases = 2;  // for the ILRMA warm start
  std::uint64_t seed = 0;
  std::size_t reference_channel = 0;
  LatentOptions latent;
};

struct MvaeResult {
  SpectrogramTensor separated;  // projected back
  DemixingSet demixing;
  std::vector<NeuralSourceState> states;
  std::vector<double> objective_trace;
  bool step_floor_reached = false;
};

/// ILRMA warm start, then alternating latent/scale updates per source and
/// one IP sweep with v = g * sigma^2, then projection back.
inline MvaeResult run_mvae(const SpectrogramTensor& x, const Decoder& dec, const MvaeOptions& opt = {}) {
  const std::size_t sources = x.num_channels();
  require(sources >= 1, "MVAE needs at least one channel");
  require(x.num_bins() == dec.frequency_bins(), "spectrogram has ", x.num_bins(), " bins, decoder produces ",
          dec.frequency_bins());

  MvaeResult r;
  if (opt.warm_start_iterations > 0) {
    IlrmaOptions io;
    io.iterations = opt.warm_start_iterations;
    io.bases = opt.bases;
    io.seed = opt.seed;
    io.reference_channel = opt.reference_channel;
    r.demixing = run_ilrma(x, io).demixing;
  } else {
    r.demixing = DemixingSet::identity(x.num_bins(), sources);
  }

  SpectrogramTensor y = demix(x, r.demixing);
  const std::size_t latent_frames = dec.latent_frames(x.num_frames());
  VarianceField v;
  for (std::size_t m = 0; m < sources; ++m) {
    NeuralSourceState st;
    st.z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dec.latent_dim()), static_cast<Eigen::Index>(latent_frames));
    st.c_logits = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dec.class_dim()));
    const Eigen::MatrixXd sigma = decoder_forward(dec, st.z, st.c()).variance;
    st.g = update_scale(y.power(m), sigma);
    v.sources.push_back(st.g * sigma);
    r.states.push_back(std::move(st));
  }
  r.objective_trace.push_back(objective_from_demixed(y, r.demixing, v));

  for (std::size_t it = 0; it < opt.iterations; ++it) {
    for (std::size_t m = 0; m < sources; ++m) {
      auto upd = update_latents(r.states[m], y.power(m), dec, opt.latent);
      r.step_floor_reached = r.step_floor_reached || upd.step_floor_reached;
      r.states[m] = std::move(upd.state);
      v.sources[m] = r.states[m].g * upd.variance;
    }
    ip_sweep(x, r.demixing, v);
    y = demix(x, r.demixing);
    r.objective_trace.push_back(objective_from_demixed(y, r.demixing, v));
  }

  r.separated = projection_back(y, r.demixing, opt.reference_channel);
  return r;
}

/// Toy decoder descriptor: per-frame fully-connected to `hidden`, two
/// gated-linear convolutions over frames (kernel 5, padding 2), linear head
/// to F log-variances.
inline nlohmann::json toy_decoder_architecture(std::size_t latent_dim, std::size_t class_dim, std::size_t bins,
                                               std::size_t hidden = 128) {
  using nn::Activation;
  using nn::LayerKind;
  using nn::LayerSpec;
  std::vector<LayerSpec> specs{
      {"fc_in", LayerKind::kFullyConnected, latent_dim + class_dim, hidden, 1, 1, 0, 1, Activation::kLinear},
      {"conv1", LayerKind::kConv1d, hidden, hidden, 5, 1, 2, 1, Activation::kGatedLinear},
      {"conv2", LayerKind::kConv1d, hidden, hidden, 5, 1, 2, 1, Activation::kGatedLinear},
      {"head", LayerKind::kFullyConnected, hidden, bins, 1, 1, 0, 1, Activation::kLinear},
  };
  return {{"latent_dim", latent_dim},
          {"class_dim", class_dim},
          {"frequency_bins", bins},
          {"output", "log-variance"},
          {"layers", nn::layers_to_json(specs)}};
}

}  // namespace tsx
