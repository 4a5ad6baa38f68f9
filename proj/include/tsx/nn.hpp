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
#include <string>
#include <vector>

#include <json.hpp>

#include "tsx/common.hpp"
#include "tsx/rng.hpp"
#include "tsx/weights.hpp"

namespace tsx::nn {

// Activations are channels x frames matrices throughout.

enum class LayerKind { kFullyConnected, kConv1d, kTransposedConv1d, kStatsPooling };
enum class Activation { kLinear, kGatedLinear, kRelu };

inline LayerKind parse_layer_kind(const std::string& s) {
  if (s == "fully-connected") return LayerKind::kFullyConnected;
  if (s == "convolution-1d") return LayerKind::kConv1d;
  if (s == "transposed-convolution-1d") return LayerKind::kTransposedConv1d;
  if (s == "statistics-pooling") return LayerKind::kStatsPooling;
  fail("unknown layer kind '", s, "'");
}

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kFullyConnected: return "fully-connected";
    case LayerKind::kConv1d: return "convolution-1d";
    case LayerKind::kTransposedConv1d: return "transposed-convolution-1d";
    case LayerKind::kStatsPooling: return "statistics-pooling";
  }
  return "";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "linear") return Activation::kLinear;
  if (s == "gated-linear") return Activation::kGatedLinear;
  if (s == "relu") return Activation::kRelu;
  fail("unknown activation '", s, "'");
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kGatedLinear: return "gated-linear";
    case Activation::kRelu: return "relu";
  }
  return "";
}

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kFullyConnected;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;  // after the activation (GLU halves the pre-activation)
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  Activation activation = Activation::kLinear;

  /// Channels produced by the affine part, before the activation.
  std::size_t pre_channels() const {
    return activation == Activation::kGatedLinear ? 2 * out_channels : out_channels;
  }

  std::size_t output_frames(std::size_t in_frames) const {
    const auto span = static_cast<std::ptrdiff_t>(dilation * (kernel - 1));
    switch (kind) {
      case LayerKind::kFullyConnected: return in_frames;
      case LayerKind::kStatsPooling: return 1;
      case LayerKind::kConv1d: {
        const auto n = static_cast<std::ptrdiff_t>(in_frames + 2 * padding) - span - 1;
        return n < 0 ? 0 : static_cast<std::size_t>(n) / stride + 1;
      }
      case LayerKind::kTransposedConv1d: {
        const auto n = static_cast<std::ptrdiff_t>((in_frames - 1) * stride) - 2 * static_cast<std::ptrdiff_t>(padding) +
                       span + 1;
        return in_frames == 0 || n < 0 ? 0 : static_cast<std::size_t>(n);
      }
    }
    return 0;
  }

  std::vector<std::size_t> weight_shape() const {
    switch (kind) {
      case LayerKind::kFullyConnected: return {pre_channels(), in_channels};
      case LayerKind::kConv1d: return {pre_channels(), in_channels, kernel};
      case LayerKind::kTransposedConv1d: return {in_channels, pre_channels(), kernel};
      case LayerKind::kStatsPooling: return {};
    }
    return {};
  }

  nlohmann::json to_json() const {
    return {{"name", name},
            {"kind", to_string(kind)},
            {"in_channels", in_channels},
            {"out_channels", out_channels},
            {"kernel", kernel},
            {"stride", stride},
            {"padding", padding},
            {"dilation", dilation},
            {"activation", to_string(activation)}};
  }

  static LayerSpec from_json(const nlohmann::json& j) {
    LayerSpec s;
    s.name = j.at("name").get<std::string>();
    s.kind = parse_layer_kind(j.at("kind").get<std::string>());
    s.in_channels = j.at("in_channels").get<std::size_t>();
    s.out_channels = j.at("out_channels").get<std::size_t>();
    s.kernel = j.value("kernel", std::size_t{1});
    s.stride = j.value("stride", std::size_t{1});
    s.padding = j.value("padding", std::size_t{0});
    s.dilation = j.value("dilation", std::size_t{1});
    s.activation = parse_activation(j.value("activation", std::string("linear")));
    require(s.kernel >= 1 && s.stride >= 1 && s.dilation >= 1, "layer '", s.name, "' has a zero kernel/stride/dilation");
    if (s.kind == LayerKind::kStatsPooling) {
      require(s.out_channels == 2 * s.in_channels, "statistics pooling must output 2x its input channels");
      require(s.activation == Activation::kLinear, "statistics pooling takes no activation");
    }
    return s;
  }
};

/// Per-layer state kept by a forward pass for the matching backward pass.
struct LayerCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd pre;  // affine output before activation
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Eigen::MatrixXd output;
};

class Layer {
 public:
  Layer(LayerSpec spec, Eigen::MatrixXd weight, Eigen::VectorXd bias)
      : spec_(std::move(spec)), weight_(std::move(weight)), bias_(std::move(bias)) {}

  const LayerSpec& spec() const { return spec_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& in, LayerCache& cache) const {
    require(static_cast<std::size_t>(in.rows()) == spec_.in_channels, "layer '", spec_.name, "' expects ",
            spec_.in_channels, " channels, got ", in.rows());
    cache.input = in;
    if (spec_.kind == LayerKind::kStatsPooling) return stats_pool(in);
    cache.pre = affine(in);
    return activate(cache.pre);
  }

  Eigen::MatrixXd backward(const LayerCache& cache, const Eigen::MatrixXd& grad_out) const {
    if (spec_.kind == LayerKind::kStatsPooling) return stats_pool_backward(cache.input, grad_out);
    return affine_backward(activate_backward(cache.pre, grad_out), cache.input.cols());
  }

 private:
  static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

  // Weight is stored as a (pre_channels) x (in_channels * kernel) matrix for
  // convolutions and fully-connected layers, and (pre_channels * kernel) x
  // in_channels for transposed convolutions.
  Eigen::MatrixXd im2col(const Eigen::MatrixXd& in, std::size_t out_frames) const {
    const auto k = static_cast<Eigen::Index>(spec_.kernel);
    Eigen::MatrixXd col = Eigen::MatrixXd::Zero(in.rows() * k, static_cast<Eigen::Index>(out_frames));
    for (Eigen::Index t = 0; t < col.cols(); ++t) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const auto src = static_cast<std::ptrdiff_t>(t * spec_.stride + j * spec_.dilation) -
                         static_cast<std::ptrdiff_t>(spec_.padding);
        if (src < 0 || src >= in.cols()) continue;
        for (Eigen::Index i = 0; i < in.rows(); ++i) col(i * k + j, t) = in(i, src);
      }
    }
    return col;
  }

  Eigen::MatrixXd affine(const Eigen::MatrixXd& in) const {
    const std::size_t frames = spec_.output_frames(static_cast<std::size_t>(in.cols()));
    require(frames > 0, "layer '", spec_.name, "' receives too few frames (", in.cols(), ")");
    switch (spec_.kind) {
      case LayerKind::kFullyConnected: return (weight_ * in).colwise() + bias_;
      case LayerKind::kConv1d: return (weight_ * im2col(in, frames)).colwise() + bias_;
      case LayerKind::kTransposedConv1d: {
        const Eigen::MatrixXd z = weight_ * in;  // (pre*K) x T_in
        const auto k = static_cast<Eigen::Index>(spec_.kernel);
        Eigen::MatrixXd out(static_cast<Eigen::Index>(spec_.pre_channels()), static_cast<Eigen::Index>(frames));
        out.colwise() = bias_;
        for (Eigen::Index t = 0; t < in.cols(); ++t) {
          for (Eigen::Index j = 0; j < k; ++j) {
            const auto dst = static_cast<std::ptrdiff_t>(t * spec_.stride + j * spec_.dilation) -
                             static_cast<std::ptrdiff_t>(spec_.padding);
            if (dst < 0 || dst >= out.cols()) continue;
            for (Eigen::Index o = 0; o < out.rows(); ++o) out(o, dst) += z(o * k + j, t);
          }
        }
        return out;
      }
      case LayerKind::kStatsPooling: break;
    }
    fail("unreachable layer kind");
  }

  Eigen::MatrixXd affine_backward(const Eigen::MatrixXd& grad_pre, Eigen::Index in_frames) const {
    const auto k = static_cast<Eigen::Index>(spec_.kernel);
    const auto in_ch = static_cast<Eigen::Index>(spec_.in_channels);
    switch (spec_.kind) {
      case LayerKind::kFullyConnected: return weight_.transpose() * grad_pre;
      case LayerKind::kConv1d: {
        const Eigen::MatrixXd dcol = weight_.transpose() * grad_pre;
        Eigen::MatrixXd grad_in = Eigen::MatrixXd::Zero(in_ch, in_frames);
        for (Eigen::Index t = 0; t < dcol.cols(); ++t) {
          for (Eigen::Index j = 0; j < k; ++j) {
            const auto src = static_cast<std::ptrdiff_t>(t * spec_.stride + j * spec_.dilation) -
                             static_cast<std::ptrdiff_t>(spec_.padding);
            if (src < 0 || src >= in_frames) continue;
            for (Eigen::Index i = 0; i < in_ch; ++i) grad_in(i, src) += dcol(i * k + j, t);
          }
        }
        return grad_in;
      }
      case LayerKind::kTransposedConv1d: {
        Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(grad_pre.rows() * k, in_frames);
        for (Eigen::Index t = 0; t < in_frames; ++t) {
          for (Eigen::Index j = 0; j < k; ++j) {
            const auto dst = static_cast<std::ptrdiff_t>(t * spec_.stride + j * spec_.dilation) -
                             static_cast<std::ptrdiff_t>(spec_.padding);
            if (dst < 0 || dst >= grad_pre.cols()) continue;
            for (Eigen::Index o = 0; o < grad_pre.rows(); ++o) dz(o * k + j, t) = grad_pre(o, dst);
          }
        }
        return weight_.transpose() * dz;
      }
      case LayerKind::kStatsPooling: break;
    }
    fail("unreachable layer kind");
  }

  Eigen::MatrixXd activate(const Eigen::MatrixXd& pre) const {
    switch (spec_.activation) {
      case Activation::kLinear: return pre;
      case Activation::kRelu: return pre.cwiseMax(0.0);
      case Activation::kGatedLinear: {
        const auto half = static_cast<Eigen::Index>(spec_.out_channels);
        return pre.topRows(half).cwiseProduct(pre.bottomRows(half).unaryExpr(&Layer::sigmoid));
      }
    }
    return pre;
  }

  Eigen::MatrixXd activate_backward(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& grad) const {
    switch (spec_.activation) {
      case Activation::kLinear: return grad;
      case Activation::kRelu: return grad.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
      case Activation::kGatedLinear: {
        const auto half = static_cast<Eigen::Index>(spec_.out_channels);
        const Eigen::MatrixXd gate = pre.bottomRows(half).unaryExpr(&Layer::sigmoid);
        Eigen::MatrixXd out(pre.rows(), pre.cols());
        out.topRows(half) = grad.cwiseProduct(gate);
        out.bottomRows(half) =
            grad.cwiseProduct(pre.topRows(half)).cwiseProduct(gate.cwiseProduct((1.0 - gate.array()).matrix()));
        return out;
      }
    }
    return grad;
  }

  static constexpr double kPoolingFloor = 1e-10;

  static Eigen::MatrixXd stats_pool(const Eigen::MatrixXd& in) {
    const Eigen::VectorXd mean = in.rowwise().mean();
    const Eigen::MatrixXd centered = in.colwise() - mean;
    const Eigen::VectorXd var = centered.cwiseAbs2().rowwise().mean();
    Eigen::MatrixXd out(2 * in.rows(), 1);
    out.topRows(in.rows()) = mean;
    out.bottomRows(in.rows()) = (var.array() + kPoolingFloor).sqrt().matrix();
    return out;
  }

  static Eigen::MatrixXd stats_pool_backward(const Eigen::MatrixXd& in, const Eigen::MatrixXd& grad) {
    const auto c = in.rows();
    const auto t = static_cast<double>(in.cols());
    const Eigen::VectorXd mean = in.rowwise().mean();
    const Eigen::MatrixXd centered = in.colwise() - mean;
    const Eigen::VectorXd sd = (centered.cwiseAbs2().rowwise().mean().array() + kPoolingFloor).sqrt().matrix();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(c, in.cols());
    g.colwise() += grad.topRows(c).col(0) / t;
    for (Eigen::Index i = 0; i < c; ++i) g.row(i) += centered.row(i) * (grad(c + i, 0) / (t * sd(i)));
    return g;
  }

  LayerSpec spec_;
  Eigen::MatrixXd weight_;
  Eigen::VectorXd bias_;
};

/// A feed-forward chain of layers with input-gradient backpropagation.
class Network {
 public:
  Network() = default;

  /// Builds from layer descriptors and the container tensors
  /// "<name>.weight" / "<name>.bias".
  Network(const std::vector<LayerSpec>& specs, const WeightContainer& weights) {
    std::size_t channels = specs.empty() ? 0 : specs.front().in_channels;
    for (const auto& s : specs) {
      require(s.in_channels == channels, "layer '", s.name, "' expects ", s.in_channels, " input channels but the ",
              "previous layer produces ", channels);
      channels = s.out_channels;
      if (s.kind == LayerKind::kStatsPooling) {
        layers_.emplace_back(s, Eigen::MatrixXd(), Eigen::VectorXd());
        continue;
      }
      const Tensor& w = weights.tensor(s.name + ".weight");
      const Tensor& b = weights.tensor(s.name + ".bias");
      require(w.shape == s.weight_shape(), "tensor '", s.name, ".weight' has the wrong shape");
      require(b.shape == std::vector<std::size_t>{s.pre_channels()}, "tensor '", s.name, ".bias' has the wrong shape");
      layers_.emplace_back(s, pack_weight(s, w), to_matrix(b).col(0));
    }
  }

  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t input_channels() const { return layers_.empty() ? 0 : layers_.front().spec().in_channels; }
  std::size_t output_channels() const { return layers_.empty() ? 0 : layers_.back().spec().out_channels; }

  std::size_t output_frames(std::size_t frames) const {
    for (const auto& l : layers_) frames = l.spec().output_frames(frames);
    return frames;
  }

  ForwardCache forward(const Eigen::MatrixXd& input) const {
    ForwardCache cache;
    cache.layers.resize(layers_.size());
    Eigen::MatrixXd h = input;
    for (std::size_t i = 0; i < layers_.size(); ++i) h = layers_[i].forward(h, cache.layers[i]);
    cache.output = std::move(h);
    return cache;
  }

  Eigen::MatrixXd backward(const ForwardCache& cache, const Eigen::MatrixXd& grad_output) const {
    Eigen::MatrixXd g = grad_output;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i].backward(cache.layers[i], g);
    return g;
  }

 private:
  static Eigen::MatrixXd pack_weight(const LayerSpec& s, const Tensor& w) {
    const auto pre = static_cast<Eigen::Index>(s.pre_channels());
    const auto in = static_cast<Eigen::Index>(s.in_channels);
    const auto k = static_cast<Eigen::Index>(s.kernel);
    if (s.kind == LayerKind::kTransposedConv1d) {
      // [in, pre, K] -> (pre*K) x in
      Eigen::MatrixXd m(pre * k, in);
      for (Eigen::Index i = 0; i < in; ++i)
        for (Eigen::Index o = 0; o < pre; ++o)
          for (Eigen::Index j = 0; j < k; ++j) m(o * k + j, i) = w.data[static_cast<std::size_t>((i * pre + o) * k + j)];
      return m;
    }
    // [pre, in, K] (K = 1 for fully-connected) -> pre x (in*K), row-major already
    Eigen::MatrixXd m(pre, in * k);
    for (Eigen::Index o = 0; o < pre; ++o)
      for (Eigen::Index c = 0; c < in * k; ++c) m(o, c) = w.data[static_cast<std::size_t>(o * in * k + c)];
    return m;
  }

  std::vector<Layer> layers_;
};

inline std::vector<LayerSpec> parse_layers(const nlohmann::json& architecture) {
  std::vector<LayerSpec> specs;
  for (const auto& j : architecture.at("layers")) specs.push_back(LayerSpec::from_json(j));
  require(!specs.empty(), "architecture declares no layers");
  return specs;
}

/// Adds Gaussian-initialized parameters for every layer, scaled by
/// 1/sqrt(fan-in); biases start at zero.
inline void add_random_parameters(WeightContainer& c, const std::vector<LayerSpec>& specs, std::uint64_t seed,
                                  double gain = 1.0) {
  CounterRng rng(derive_seed(seed, "network-init"));
  for (const auto& s : specs) {
    if (s.kind == LayerKind::kStatsPooling) continue;
    const double std_dev = gain / std::sqrt(static_cast<double>(s.in_channels * s.kernel));
    auto shape = s.weight_shape();
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<float> w(n);
    for (auto& v : w) v = static_cast<float>(std_dev * rng.normal());
    c.add(s.name + ".weight", shape, std::move(w));
    c.add(s.name + ".bias", {s.pre_channels()}, std::vector<float>(s.pre_channels(), 0.0f));
  }
}

inline nlohmann::json layers_to_json(const std::vector<LayerSpec>& specs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : specs) arr.push_back(s.to_json());
  return arr;
}

}  // namespace tsx::nn
