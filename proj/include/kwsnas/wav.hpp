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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kwsnas/tensor.hpp"

namespace kwsnas {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kClipSamples = 16000;

struct AudioClip {
  std::vector<Real> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;
  int label = -1;
  std::string speaker_id;
};

/// Decodes a RIFF/WAVE byte buffer holding 16-bit mono 16 kHz PCM and
/// returns every sample scaled by 1/32768.
///
/// Throws ParseError (with byte offset) for structural damage and DataError
/// naming the field for a well-formed file in an unsupported format.
std::vector<Real> decode_wav(std::span<const std::uint8_t> bytes);

/// Full-length samples of a WAV file.
std::vector<Real> read_wav_samples(const std::filesystem::path& path);

/// One-second clip: zero-padded at the end or truncated to 16000 samples.
AudioClip read_wav(const std::filesystem::path& path);

std::vector<Real> fit_to_clip_length(std::span<const Real> samples);

/// 16-bit PCM mono encoder, clipping to [-1, 1).
std::vector<std::uint8_t> encode_wav(std::span<const Real> samples,
                                     int sample_rate = kSampleRate);
void write_wav(const std::filesystem::path& path, std::span<const Real> samples,
               int sample_rate = kSampleRate);

}  // namespace kwsnas
