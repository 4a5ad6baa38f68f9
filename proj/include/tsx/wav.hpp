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
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tsx/common.hpp"
#include "tsx/signal.hpp"

namespace tsx {

enum class WavEncoding { kPcm16, kFloat32 };

namespace wav_detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace wav_detail

/// Decodes a RIFF/WAVE byte buffer (PCM 16-bit or IEEE float 32-bit).
inline TimeSignal decode_wav(const std::string& bytes) {
  using namespace wav_detail;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  require(bytes.size() >= 12 && std::memcmp(p, "RIFF", 4) == 0 && std::memcmp(p + 8, "WAVE", 4) == 0,
          "not a RIFF/WAVE file");
  std::size_t pos = 12;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(p + pos + 4);
    const std::size_t body = pos + 8;
    require(body + size <= bytes.size(), "truncated WAV chunk");
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      require(size >= 16, "malformed fmt chunk");
      format = read_u16(p + body);
      channels = read_u16(p + body + 2);
      rate = read_u32(p + body + 4);
      bits = read_u16(p + body + 14);
      if (format == 0xFFFE && size >= 26) format = read_u16(p + body + 24);
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      require(have_fmt, "WAV data chunk precedes fmt chunk");
      require(channels > 0 && rate > 0, "WAV header has zero channels or rate");
      const bool pcm16 = format == 1 && bits == 16;
      const bool f32 = format == 3 && bits == 32;
      require(pcm16 || f32, "unsupported WAV encoding (format ", format, ", ", bits, " bits)");
      const std::size_t frame_bytes = std::size_t(channels) * (bits / 8);
      const std::size_t frames = size / frame_bytes;
      TimeSignal sig(channels, frames, static_cast<double>(rate));
      for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
          const unsigned char* s = p + body + i * frame_bytes + c * (bits / 8);
          if (pcm16) {
            const auto v = static_cast<std::int16_t>(read_u16(s));
            sig.channels[c][i] = static_cast<double>(v) / 32768.0;
          } else {
            const std::uint32_t u = read_u32(s);
            float f;
            std::memcpy(&f, &u, 4);
            sig.channels[c][i] = static_cast<double>(f);
          }
        }
      }
      return sig;
    }
    pos = body + size + (size & 1);
  }
  fail("WAV file has no data chunk");
}

inline std::string encode_wav(const TimeSignal& sig, WavEncoding enc = WavEncoding::kFloat32) {
  using namespace wav_detail;
  require(sig.num_channels() > 0, "cannot encode a signal without channels");
  const std::uint16_t channels = static_cast<std::uint16_t>(sig.num_channels());
  const std::uint16_t bits = enc == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(sig.sample_rate));
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(sig.length() * channels * (bits / 8));
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, enc == WavEncoding::kPcm16 ? 1 : 3);
  put_u16(out, channels);
  put_u32(out, rate);
  put_u32(out, rate * channels * (bits / 8));
  put_u16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
  put_u16(out, bits);
  out += "data";
  put_u32(out, data_bytes);
  for (std::size_t i = 0; i < sig.length(); ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = sig.channels[c][i];
      if (enc == WavEncoding::kPcm16) {
        const double q = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      } else {
        const float f = static_cast<float>(v);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        put_u32(out, u);
      }
    }
  }
  return out;
}

/// Writes via a temporary sibling file and rename, so readers never see a
/// partially written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), "cannot open ", tmp.string(), " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(os), "write failed for ", tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot open ", path.string());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

inline TimeSignal read_wav(const std::filesystem::path& path) { return decode_wav(read_file(path)); }

inline void write_wav(const std::filesystem::path& path, const TimeSignal& sig,
                      WavEncoding enc = WavEncoding::kFloat32) {
  write_file_atomic(path, encode_wav(sig, enc));
}

}  // namespace tsx
