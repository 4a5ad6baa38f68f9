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

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "tsx/common.hpp"
#include "tsx/wav.hpp"

namespace tsx {

// .nnw weight container, version 1.
//
//   line 1:   "NNW 1 <manifest byte length>\n"
//   manifest: UTF-8 JSON object of exactly that many bytes
//   blobs:    concatenated little-endian float32 tensors
//
// Manifest keys: format_version (1), endianness ("little"), kind,
// architecture (kind-specific object), tensors (array of
// {name, shape, offset, crc32}); offsets are relative to the first blob
// byte and the CRC32 covers each tensor's bytes.

inline constexpr int kWeightFormatVersion = 1;

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

struct WeightContainer {
  std::string kind;
  nlohmann::json architecture = nlohmann::json::object();
  /// Insertion order is the on-disk order.
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    fail("weight container has no tensor '", name, "'");
  }

  bool has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return true;
    return false;
  }

  void add(std::string name, std::vector<std::size_t> shape, std::vector<float> data) {
    Tensor t{std::move(shape), std::move(data)};
    require(t.numel() == t.data.size(), "tensor '", name, "' shape does not match data size");
    require(!has(name), "duplicate tensor '", name, "'");
    tensors.emplace_back(std::move(name), std::move(t));
  }
};

inline std::uint32_t crc32_of(const void* data, std::size_t bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), static_cast<const Bytef*>(data), static_cast<uInt>(bytes)));
}

namespace weights_detail {

inline void append_le_float(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

inline float read_le_float(const unsigned char* p) {
  const std::uint32_t u = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
                          (std::uint32_t(p[3]) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace weights_detail

inline std::string encode_container(const WeightContainer& c) {
  require(!c.kind.empty(), "weight container needs a kind");
  require(!c.tensors.empty(), "refusing to write an empty weight container");
  std::string blobs;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [name, t] : c.tensors) {
    require(t.numel() == t.data.size(), "tensor '", name, "' shape does not match data size");
    const std::size_t offset = blobs.size();
    for (float f : t.data) weights_detail::append_le_float(blobs, f);
    table.push_back({{"name", name},
                     {"shape", t.shape},
                     {"offset", offset},
                     {"crc32", crc32_of(blobs.data() + offset, blobs.size() - offset)}});
  }
  nlohmann::ordered_json manifest;
  manifest["format_version"] = kWeightFormatVersion;
  manifest["endianness"] = "little";
  manifest["kind"] = c.kind;
  manifest["architecture"] = nlohmann::ordered_json::parse(c.architecture.dump());
  manifest["tensors"] = nlohmann::ordered_json::parse(table.dump());
  const std::string text = manifest.dump(1);
  return "NNW 1 " + std::to_string(text.size()) + "\n" + text + blobs;
}

namespace weights_detail {

inline WeightContainer decode_unchecked(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  require(nl != std::string::npos && bytes.compare(0, 6, "NNW 1 ") == 0, "not an NNW v1 weight file");
  const std::size_t manifest_len = std::stoull(bytes.substr(6, nl - 6));
  require(nl + 1 + manifest_len <= bytes.size(), "weight file truncated inside manifest");
  const auto manifest = nlohmann::json::parse(bytes.substr(nl + 1, manifest_len));
  require(manifest.at("format_version").get<int>() == kWeightFormatVersion, "unsupported weight format version");
  require(manifest.at("endianness").get<std::string>() == "little", "unsupported endianness");

  WeightContainer c;
  c.kind = manifest.at("kind").get<std::string>();
  c.architecture = manifest.at("architecture");
  const std::size_t blob_start = nl + 1 + manifest_len;
  const auto* base = reinterpret_cast<const unsigned char*>(bytes.data()) + blob_start;
  const std::size_t blob_bytes = bytes.size() - blob_start;
  for (const auto& entry : manifest.at("tensors")) {
    Tensor t;
    const auto name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const std::size_t n = t.numel();
    require(offset + 4 * n <= blob_bytes, "tensor '", name, "' extends past end of file");
    require(crc32_of(base + offset, 4 * n) == entry.at("crc32").get<std::uint32_t>(), "checksum failure in tensor '",
            name, "'");
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.data[i] = weights_detail::read_le_float(base + offset + 4 * i);
    for (float f : t.data) require(std::isfinite(f), "tensor '", name, "' has non-finite values");
    c.tensors.emplace_back(name, std::move(t));
  }
  return c;
}

}  // namespace weights_detail

/// Parses an NNW v1 file; every malformation surfaces as tsx::Error.
inline WeightContainer decode_container(const std::string& bytes) {
  try {
    return weights_detail::decode_unchecked(bytes);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail("malformed weight file: ", e.what());
  }
}

inline WeightContainer read_container(const std::filesystem::path& path) { return decode_container(read_file(path)); }

inline void write_container(const std::filesystem::path& path, const WeightContainer& c) {
  write_file_atomic(path, encode_container(c));
}

inline Tensor to_tensor(const Eigen::MatrixXd& m) {
  Tensor t;
  t.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(static_cast<float>(m(r, c)));
  return t;
}

/// Row-major 2-D tensor (or 1-D as a column) to an Eigen matrix.
inline Eigen::MatrixXd to_matrix(const Tensor& t) {
  require(t.shape.size() == 1 || t.shape.size() == 2, "expected a 1-D or 2-D tensor");
  const std::size_t rows = t.shape[0];
  const std::size_t cols = t.shape.size() == 2 ? t.shape[1] : 1;
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = t.data[r * cols + c];
  return m;
}

}  // namespace tsx
