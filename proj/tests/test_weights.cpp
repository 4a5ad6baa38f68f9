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

#include "tsx/weights.hpp"

namespace {

tsx::WeightContainer sample() {
  tsx::WeightContainer c;
  c.kind = "cvae-decoder";
  c.architecture = {{"latent_dim", 4}, {"layers", nlohmann::json::array()}};
  c.add("a.weight", {2, 3}, {1.f, -2.f, 3.5f, 0.25f, -1e-3f, 7.f});
  c.add("a.bias", {2}, {0.5f, -0.5f});
  return c;
}

}  // namespace

TEST(Weights, RoundTrip) {
  const auto c = sample();
  const auto back = tsx::decode_container(tsx::encode_container(c));
  EXPECT_EQ(back.kind, c.kind);
  EXPECT_EQ(back.architecture, c.architecture);
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.tensor("a.weight").shape, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(back.tensor("a.weight").data, c.tensor("a.weight").data);
  EXPECT_EQ(back.tensor("a.bias").data, c.tensor("a.bias").data);
}

TEST(Weights, HeaderAndLittleEndianLayout) {
  const std::string bytes = tsx::encode_container(sample());
  ASSERT_EQ(bytes.compare(0, 6, "NNW 1 "), 0);
  // Last tensor is a.bias = {0.5, -0.5}; -0.5f is 0xBF000000.
  const auto* tail = reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size() - 4;
  EXPECT_EQ(tail[0], 0x00);
  EXPECT_EQ(tail[3], 0xBF);
}

TEST(Weights, Crc32CheckValue) {
  const char text[] = "123456789";
  EXPECT_EQ(tsx::crc32_of(text, 9), 0xCBF43926u);
}

TEST(Weights, CorruptedBlobFailsChecksum) {
  std::string bytes = tsx::encode_container(sample());
  bytes[bytes.size() - 6] ^= 0x01;
  try {
    tsx::decode_container(bytes);
    FAIL() << "expected checksum failure";
  } catch (const tsx::Error& e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos);
  }
}

TEST(Weights, Errors) {
  tsx::WeightContainer empty;
  empty.kind = "x";
  EXPECT_THROW(tsx::encode_container(empty), tsx::Error);
  EXPECT_THROW(tsx::decode_container("garbage"), tsx::Error);
  EXPECT_THROW(tsx::decode_container("NNW 1 5\n{bad}"), tsx::Error);
  std::string truncated = tsx::encode_container(sample());
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(tsx::decode_container(truncated), tsx::Error);
  auto c = sample();
  EXPECT_THROW(c.add("a.bias", {1}, {1.f}), tsx::Error);
  EXPECT_THROW(c.add("b", {2, 2}, {1.f}), tsx::Error);
  EXPECT_THROW(c.tensor("missing"), tsx::Error);
}

TEST(Weights, MatrixConversion) {
  Eigen::MatrixXd m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const auto t = tsx::to_tensor(m);
  EXPECT_EQ(t.data, (std::vector<float>{1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(tsx::to_matrix(t), m);
}
