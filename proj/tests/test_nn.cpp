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

#include "tsx/nn.hpp"
#include "tsx/rng.hpp"

using tsx::nn::Activation;
using tsx::nn::LayerKind;
using tsx::nn::LayerSpec;

namespace {

/// Random weights and biases for every layer; float-exact values so the
/// oracle reads the same numbers the network holds.
tsx::WeightContainer random_container(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  tsx::WeightContainer c;
  c.kind = "test";
  tsx::CounterRng rng(seed);
  for (const auto& s : specs) {
    if (s.kind == LayerKind::kStatsPooling) continue;
    std::size_t n = 1;
    for (auto d : s.weight_shape()) n *= d;
    std::vector<float> w(n), b(s.pre_channels());
    for (auto& v : w) v = static_cast<float>(0.5 * rng.normal());
    for (auto& v : b) v = static_cast<float>(0.1 * rng.normal());
    c.add(s.name + ".weight", s.weight_shape(), std::move(w));
    c.add(s.name + ".bias", {s.pre_channels()}, std::move(b));
  }
  return c;
}

Eigen::MatrixXd random_input(tsx::CounterRng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST(Nn, ConvolutionMatchesLoopOracle) {
  const LayerSpec s{"c", LayerKind::kConv1d, 3, 4, 3, 2, 1, 2, Activation::kLinear};
  const auto c = random_container({s}, 1);
  const tsx::nn::Network net({s}, c);
  tsx::CounterRng rng(2);
  const auto in = random_input(rng, 3, 13);
  const auto out = net.forward(in).output;
  const auto& w = c.tensor("c.weight").data;
  const auto& b = c.tensor("c.bias").data;
  const std::size_t frames = s.output_frames(13);
  ASSERT_EQ(static_cast<std::size_t>(out.cols()), frames);
  for (std::size_t o = 0; o < 4; ++o)
    for (std::size_t t = 0; t < frames; ++t) {
      double acc = b[o];
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
          const long src = static_cast<long>(t * 2 + j * 2) - 1;
          if (src >= 0 && src < 13) acc += w[(o * 3 + i) * 3 + j] * in(static_cast<Eigen::Index>(i), src);
        }
      EXPECT_NEAR(out(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(t)), acc, 1e-12);
    }
}

TEST(Nn, TransposedConvolutionMatchesLoopOracle) {
  const LayerSpec s{"t", LayerKind::kTransposedConv1d, 3, 2, 4, 2, 1, 1, Activation::kLinear};
  const auto c = random_container({s}, 3);
  const tsx::nn::Network net({s}, c);
  tsx::CounterRng rng(4);
  const auto in = random_input(rng, 3, 6);
  const auto out = net.forward(in).output;
  const std::size_t frames = (6 - 1) * 2 - 2 + 3 + 1;
  ASSERT_EQ(static_cast<std::size_t>(out.cols()), frames);
  const auto& w = c.tensor("t.weight").data;
  const auto& b = c.tensor("t.bias").data;
  Eigen::MatrixXd oracle(2, static_cast<Eigen::Index>(frames));
  for (Eigen::Index o = 0; o < 2; ++o) oracle.row(o).setConstant(b[static_cast<std::size_t>(o)]);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t t = 0; t < 6; ++t)
        for (std::size_t j = 0; j < 4; ++j) {
          const long dst = static_cast<long>(t * 2 + j) - 1;
          if (dst >= 0 && dst < static_cast<long>(frames))
            oracle(static_cast<Eigen::Index>(o), dst) += w[(i * 2 + o) * 4 + j] * in(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
        }
  EXPECT_LT((out - oracle).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Nn, GatedLinearAndPooling) {
  const std::vector<LayerSpec> specs{{"g", LayerKind::kFullyConnected, 2, 3, 1, 1, 0, 1, Activation::kGatedLinear},
                                     {"p", LayerKind::kStatsPooling, 3, 6, 1, 1, 0, 1, Activation::kLinear}};
  const auto c = random_container(specs, 5);
  const tsx::nn::Network net(specs, c);
  tsx::CounterRng rng(6);
  const auto in = random_input(rng, 2, 9);
  const auto out = net.forward(in).output;
  ASSERT_EQ(out.rows(), 6);
  ASSERT_EQ(out.cols(), 1);
  const auto& w = c.tensor("g.weight").data;
  const auto& b = c.tensor("g.bias").data;
  for (int o = 0; o < 3; ++o) {
    std::vector<double> h(9);
    for (int t = 0; t < 9; ++t) {
      double a = b[static_cast<std::size_t>(o)], g = b[static_cast<std::size_t>(o + 3)];
      for (int i = 0; i < 2; ++i) {
        a += w[static_cast<std::size_t>(o * 2 + i)] * in(i, t);
        g += w[static_cast<std::size_t>((o + 3) * 2 + i)] * in(i, t);
      }
      h[static_cast<std::size_t>(t)] = a / (1.0 + std::exp(-g));
    }
    double mean = 0.0, var = 0.0;
    for (double v : h) mean += v / 9.0;
    for (double v : h) var += (v - mean) * (v - mean) / 9.0;
    EXPECT_NEAR(out(o, 0), mean, 1e-12);
    EXPECT_NEAR(out(o + 3, 0), std::sqrt(var + 1e-10), 1e-12);
  }
}

TEST(Nn, BackwardMatchesFiniteDifferences) {
  const std::vector<LayerSpec> specs{
      {"a", LayerKind::kConv1d, 3, 4, 3, 1, 1, 1, Activation::kGatedLinear},
      {"b", LayerKind::kTransposedConv1d, 4, 3, 3, 2, 1, 1, Activation::kLinear},
      {"c", LayerKind::kConv1d, 3, 5, 2, 1, 0, 2, Activation::kRelu},
      {"d", LayerKind::kStatsPooling, 5, 10, 1, 1, 0, 1, Activation::kLinear},
      {"e", LayerKind::kFullyConnected, 10, 2, 1, 1, 0, 1, Activation::kLinear}};
  const tsx::nn::Network net(specs, random_container(specs, 7));
  tsx::CounterRng rng(8);
  const auto in = random_input(rng, 3, 8);
  const auto probe = random_input(rng, 2, 1);
  auto loss = [&](const Eigen::MatrixXd& x) { return net.forward(x).output.cwiseProduct(probe).sum(); };
  const auto grad = net.backward(net.forward(in), probe);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < in.size(); ++i) {
    Eigen::MatrixXd a = in, b = in;
    a.data()[i] += h;
    b.data()[i] -= h;
    const double fd = (loss(a) - loss(b)) / (2.0 * h);
    EXPECT_NEAR(grad.data()[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Nn, DescriptorRoundTripAndValidation) {
  const LayerSpec s{"x", LayerKind::kTransposedConv1d, 3, 4, 5, 2, 1, 1, Activation::kGatedLinear};
  const auto back = LayerSpec::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(s.weight_shape(), (std::vector<std::size_t>{3, 8, 5}));

  auto bad = s.to_json();
  bad["kind"] = "lstm";
  EXPECT_THROW(LayerSpec::from_json(bad), tsx::Error);
  bad = s.to_json();
  bad["activation"] = "tanh";
  EXPECT_THROW(LayerSpec::from_json(bad), tsx::Error);

  // Channel chain mismatch and missing tensors.
  const std::vector<LayerSpec> chain{{"a", LayerKind::kFullyConnected, 2, 3, 1, 1, 0, 1, Activation::kLinear},
                                     {"b", LayerKind::kFullyConnected, 4, 1, 1, 1, 0, 1, Activation::kLinear}};
  EXPECT_THROW(tsx::nn::Network(chain, random_container(chain, 1)), tsx::Error);
  EXPECT_THROW(tsx::nn::Network({chain[0]}, tsx::WeightContainer{}), tsx::Error);
}
