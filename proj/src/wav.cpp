// Copyright 2026 The kwsnas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kwsnas/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "kwsnas/error.hpp"

namespace kwsnas {

namespace {

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) |
         (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

std::vector<Real> decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw ParseError("wav: truncated RIFF header", bytes.size());
  if (!tag_is(bytes, 0, "RIFF")) throw ParseError("wav: missing RIFF tag", 0);
  if (!tag_is(bytes, 8, "WAVE")) throw ParseError("wav: missing WAVE tag", 8);

  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::size_t chunk_size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (tag_is(bytes, pos, "fmt ")) {
      if (chunk_size < 16 || body + 16 > bytes.size()) {
        throw ParseError("wav: fmt chunk too short", pos);
      }
      const auto format = read_u16(bytes, body);
      const auto channels = read_u16(bytes, body + 2);
      const auto rate = read_u32(bytes, body + 4);
      const auto bits = read_u16(bytes, body + 14);
      if (format != 1) {
        throw DataError("wav: unsupported encoding audio_format=" +
                        std::to_string(format) + " (need 1, PCM)");
      }
      if (channels != 1) {
        throw DataError("wav: unsupported channels=" + std::to_string(channels) +
                        " (need 1)");
      }
      if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw DataError("wav: unsupported sample_rate=" + std::to_string(rate) +
                        " (need 16000)");
      }
      if (bits != 16) {
        throw DataError("wav: unsupported bits_per_sample=" +
                        std::to_string(bits) + " (need 16)");
      }
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      if (!have_fmt) throw ParseError("wav: data chunk before fmt chunk", pos);
      if (body + chunk_size > bytes.size()) {
        throw ParseError("wav: data chunk runs past end of file", pos + 4);
      }
      if (chunk_size % 2 != 0) {
        throw ParseError("wav: odd data size for 16-bit samples", pos + 4);
      }
      std::vector<Real> samples(chunk_size / 2);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(bytes, body + 2 * i));
        samples[i] = static_cast<Real>(raw) / Real{32768};
      }
      return samples;
    }
    pos = body + chunk_size + (chunk_size & 1);
  }
  throw ParseError(have_fmt ? "wav: no data chunk" : "wav: no fmt chunk",
                   std::min(pos, bytes.size()));
}

std::vector<Real> read_wav_samples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("wav: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<Real> fit_to_clip_length(std::span<const Real> samples) {
  std::vector<Real> out(kClipSamples, Real{0});
  std::copy_n(samples.begin(), std::min(samples.size(), kClipSamples), out.begin());
  return out;
}

AudioClip read_wav(const std::filesystem::path& path) {
  AudioClip clip;
  clip.samples = fit_to_clip_length(read_wav_samples(path));
  return clip;
}

std::vector<std::uint8_t> encode_wav(std::span<const Real> samples,
                                     int sample_rate) {
  std::vector<std::uint8_t> out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (Real s : samples) {
    const double scaled = std::round(static_cast<double>(s) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const Real> samples,
               int sample_rate) {
  const auto bytes = encode_wav(samples, sample_rate);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("wav: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace kwsnas
